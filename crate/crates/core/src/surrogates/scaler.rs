use serde::{Deserialize, Serialize};

/// Min/max scaler onto `[0, 1]`: `u = (x - min) * inv_span`, `x = u * span + min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub span: f64,
    pub inv_span: f64,
}

impl MinMax {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        Self { min: lo, span, inv_span: 1.0 / span }
    }

    pub fn forward(&self, x: f64) -> f64 {
        (x - self.min) * self.inv_span
    }

    pub fn inverse(&self, u: f64) -> f64 {
        u * self.span + self.min
    }

    pub fn fit_columns(rows: &[Vec<f64>]) -> Vec<MinMax> {
        let d = rows.first().map_or(0, |r| r.len());
        (0..d).map(|k| MinMax::fit(rows.iter().map(|r| r[k]))).collect()
    }
}
