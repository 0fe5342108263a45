use serde::{Deserialize, Serialize};

use super::{check_sequence, finite_init, probe, Scalers, SequenceState};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::ir::{Builder, IrProgram};
use crate::oracle::Quantity;
use crate::surrogates::optim::{minimize, TrainConfig};

/// Exogenous-input autoregression:
/// `y_t = Σ_j Σ_k ma[j·d+k]·x_{t-j,k} + Σ_i ar[i]·y_{t-1-i} + bias`
/// with input lags `j = 0..q`. State slots hold `y_{t-1}..y_{t-p}` then
/// the input rows `x_{t-1}..x_{t-q+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmaModel {
    pub quantity: Quantity,
    pub p: usize,
    pub q: usize,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub bias: f64,
    pub scalers: Scalers,
    pub seed: u64,
    pub epochs: usize,
    pub stable: bool,
}

impl ArmaModel {
    pub fn dim(&self) -> usize {
        self.scalers.input.len()
    }

    pub fn num_state(&self) -> usize {
        self.p + (self.q - 1) * self.dim()
    }

    /// One step on a scaled input row; returns the scaled output.
    pub fn arma_step(&self, state: &mut SequenceState, x: &[f64]) -> f64 {
        let y = arma_eval(self.p, self.q, &self.ar, &self.ma, self.bias, &state.slots, x);
        shift(self.p, x, y, &mut state.slots);
        state.step += 1;
        y
    }

    /// One step on a raw input row; returns the value in units.
    pub fn predict_step(&self, state: &mut SequenceState, x: &[f64]) -> f64 {
        let y = self.arma_step(state, &self.scalers.scale_row(x));
        self.scalers.unscale(self.quantity, y)
    }

    pub fn predict_sequence(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let mut state = SequenceState::zeros(self.num_state());
        rows.iter().map(|r| self.predict_step(&mut state, r)).collect()
    }

    pub fn lower(&self) -> Result<IrProgram> {
        let d = self.dim();
        let mut b = Builder::new(self.quantity.input_domains(), self.num_state());
        let x = self.scalers.lower_inputs(&mut b);
        let slots: Vec<_> = (0..self.num_state()).map(|s| b.load_state(s)).collect();
        let c = b.constant(self.ma[0]);
        let mut acc = b.mul(c, x[0]);
        for j in 0..self.q {
            for k in 0..d {
                if j == 0 && k == 0 {
                    continue;
                }
                let src = if j == 0 { x[k] } else { slots[self.p + (j - 1) * d + k] };
                let c = b.constant(self.ma[j * d + k]);
                let t = b.mul(c, src);
                acc = b.add(acc, t);
            }
        }
        for i in 0..self.p {
            let c = b.constant(self.ar[i]);
            let t = b.mul(c, slots[i]);
            acc = b.add(acc, t);
        }
        let y = b.add_const(acc, self.bias);
        // Shift buffers: new output first, then the input history.
        if self.p > 0 {
            b.store_state(0, y);
            for i in 1..self.p {
                b.store_state(i, slots[i - 1]);
            }
        }
        if self.q > 1 {
            let base = self.p;
            for j in (1..self.q - 1).rev() {
                for k in 0..d {
                    b.store_state(base + j * d + k, slots[base + (j - 1) * d + k]);
                }
            }
            for k in 0..d {
                b.store_state(base + k, x[k]);
            }
        }
        let out = self.scalers.lower_output(&mut b, self.quantity, y);
        b.finish(out)
    }
}

fn arma_eval(p: usize, q: usize, ar: &[f64], ma: &[f64], bias: f64, slots: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = ma[0] * x[0];
    for j in 0..q {
        for k in 0..d {
            if j == 0 && k == 0 {
                continue;
            }
            let src = if j == 0 { x[k] } else { slots[p + (j - 1) * d + k] };
            acc += ma[j * d + k] * src;
        }
    }
    for i in 0..p {
        acc += ar[i] * slots[i];
    }
    acc + bias
}

fn shift(p: usize, x: &[f64], y: f64, slots: &mut [f64]) {
    let d = x.len();
    if p > 0 {
        slots.copy_within(0..p - 1, 1);
        slots[0] = y;
    }
    let hist = &mut slots[p..];
    if !hist.is_empty() {
        let n = hist.len();
        hist.copy_within(0..n - d, d);
        hist[..d].copy_from_slice(x);
    }
}

/// Mean squared error of the free-running model over a scaled sequence
/// (`xs` row-major with `d` columns) and its BPTT gradient with respect to
/// `[ar(p), ma(q·d), bias]`.
pub fn arma_loss_and_grad(p: usize, q: usize, d: usize, params: &[f64], xs: &[f64], ys: &[f64]) -> (f64, Vec<f64>) {
    let n = ys.len();
    let (ar, rest) = params.split_at(p);
    let (ma, bias) = rest.split_at(q * d);
    let bias = bias[0];
    let mut y = vec![0.0; n];
    let mut loss = 0.0;
    for t in 0..n {
        let mut acc = bias;
        for j in 0..q.min(t + 1) {
            let row = &xs[(t - j) * d..(t - j + 1) * d];
            for k in 0..d {
                acc += ma[j * d + k] * row[k];
            }
        }
        for i in 0..p.min(t) {
            acc += ar[i] * y[t - 1 - i];
        }
        y[t] = acc;
        let e = acc - ys[t];
        loss += e * e;
    }
    let mut grad = vec![0.0; params.len()];
    // g[t] = dL/dy_t including the paths through later outputs.
    let mut g = vec![0.0; n];
    for t in (0..n).rev() {
        let mut gt = 2.0 * (y[t] - ys[t]) / n as f64;
        for i in 0..p {
            if t + 1 + i < n {
                gt += ar[i] * g[t + 1 + i];
            }
        }
        g[t] = gt;
        for i in 0..p.min(t) {
            grad[i] += gt * y[t - 1 - i];
        }
        for j in 0..q.min(t + 1) {
            let row = &xs[(t - j) * d..(t - j + 1) * d];
            for k in 0..d {
                grad[p + j * d + k] += gt * row[k];
            }
        }
        grad[p + q * d] += gt;
    }
    (loss / n as f64, grad)
}

pub fn train_arma(data: &Dataset, p: usize, q: usize, seed: u64, cfg: &TrainConfig) -> Result<ArmaModel> {
    check_sequence(data)?;
    if q == 0 {
        return Err(Error::InvalidArgument("ARMA needs at least the current input (q >= 1)".into()));
    }
    let d = data.dim();
    let scalers = Scalers::fit(data);
    let (xs, ys) = scalers.scale_dataset(data);
    let mut params = finite_init(p + q * d + 1, p + q * d, seed, |w| arma_loss_and_grad(p, q, d, w, &xs, &ys));
    let epochs = minimize(&mut params, cfg, |w| arma_loss_and_grad(p, q, d, w, &xs, &ys), scalers.metric(data.quantity))?;
    let mut model = ArmaModel {
        quantity: data.quantity,
        p,
        q,
        ar: params[..p].to_vec(),
        ma: params[p..p + q * d].to_vec(),
        bias: params[p + q * d],
        scalers,
        seed,
        epochs,
        stable: false,
    };
    model.stable = probe(model.num_state(), model.quantity, |s, x| model.arma_step(s, &model.scalers.scale_row(x)));
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogates::MinMax;

    fn unit_model(p: usize, q: usize, ar: Vec<f64>, ma: Vec<f64>, bias: f64) -> ArmaModel {
        let id = MinMax { min: 0.0, span: 1.0, inv_span: 1.0 };
        ArmaModel {
            quantity: Quantity::Temperature,
            p,
            q,
            ar,
            ma,
            bias,
            scalers: Scalers { input: vec![id], output: id },
            seed: 0,
            epochs: 0,
            stable: true,
        }
    }

    #[test]
    fn identity_filter() {
        let m = unit_model(0, 1, vec![], vec![1.0], 0.0);
        let mut s = SequenceState::zeros(m.num_state());
        for x in [0.3, -2.0, 7.5] {
            assert_eq!(m.arma_step(&mut s, &[x]), x);
        }
    }

    #[test]
    fn accumulator_ramps() {
        let m = unit_model(1, 1, vec![1.0], vec![0.0], 0.25);
        let mut s = SequenceState::zeros(m.num_state());
        let ys: Vec<f64> = (0..4).map(|_| m.arma_step(&mut s, &[9.0])).collect();
        assert_eq!(ys, vec![0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn state_shift_layout() {
        // p=2, q=3, d=1: slots [y1, y2, x1, x2]
        let mut slots = vec![1.0, 2.0, 3.0, 4.0];
        shift(2, &[9.0], 8.0, &mut slots);
        assert_eq!(slots, vec![8.0, 1.0, 9.0, 3.0]);
    }
}
