//! Stateful per-step models trained by backpropagation through time.
//!
//! Every model works on inputs and outputs scaled to `[0, 1]` and keeps its
//! memory in numbered state slots, using the same layout as its lowered
//! program so the two can be stepped side by side.

mod arma;
mod cell;

pub use arma::{arma_loss_and_grad, train_arma, ArmaModel};
pub use cell::{cell_loss_and_grad, train_cell, CellVariant, RecurrentCell};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::ir::Builder;
use crate::ir::Reg;
use crate::oracle::Quantity;
use crate::surrogates::MinMax;

/// Steps fed by the stability probe.
pub const PROBE_STEPS: usize = 10_000;
/// Bound on `|y|` (scaled units) for a model to count as stable.
pub const PROBE_BOUND: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceState {
    pub slots: Vec<f64>,
    pub step: u64,
}

impl SequenceState {
    pub fn zeros(n: usize) -> Self {
        Self { slots: vec![0.0; n], step: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scalers {
    pub input: Vec<MinMax>,
    pub output: MinMax,
}

impl Scalers {
    pub fn fit(data: &Dataset) -> Self {
        Self { input: MinMax::fit_columns(&data.inputs), output: MinMax::fit(data.targets.iter().copied()) }
    }

    pub fn scale_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.input).map(|(x, s)| s.forward(*x)).collect()
    }

    /// Scaled output back to units, with the quantity's clamp.
    pub fn unscale(&self, quantity: Quantity, y: f64) -> f64 {
        let v = y * self.output.span + self.output.min;
        match quantity.output_clamp() {
            Some((lo, hi)) => v.max(lo).min(hi),
            None => v,
        }
    }

    /// Flattened scaled inputs (row-major) and scaled targets.
    pub(crate) fn scale_dataset(&self, data: &Dataset) -> (Vec<f64>, Vec<f64>) {
        let xs = data.inputs.iter().flat_map(|r| self.scale_row(r)).collect();
        let ys = data.targets.iter().map(|&t| self.output.forward(t)).collect();
        (xs, ys)
    }

    pub(crate) fn lower_inputs(&self, b: &mut Builder) -> Vec<Reg> {
        self.input
            .iter()
            .enumerate()
            .map(|(d, s)| {
                let x = b.input(d);
                b.affine_in(x, s.min, s.inv_span)
            })
            .collect()
    }

    pub(crate) fn lower_output(&self, b: &mut Builder, quantity: Quantity, y: Reg) -> Reg {
        let v = b.affine_out(y, self.output.span, self.output.min);
        crate::surrogates::linear::lower_clamp(b, quantity, v)
    }

    /// Converts a scaled mean-squared loss into normalized RMSE.
    pub(crate) fn metric(&self, quantity: Quantity) -> impl Fn(f64) -> f64 {
        let k = self.output.span * 100.0 / quantity.range().span();
        move |loss: f64| loss.sqrt() * k
    }
}

pub(crate) fn check_sequence(data: &Dataset) -> Result<()> {
    if data.kind != DatasetKind::Sequence {
        return Err(Error::InvalidArgument("sequence models train on sequence datasets".into()));
    }
    if data.len() < 2 {
        return Err(Error::InvalidArgument("training sequence needs at least two rows".into()));
    }
    Ok(())
}

/// Successive uniform initializations, scaled by `1/sqrt(fan_in)`, from one
/// seeded stream.
fn init_draws(n: usize, fan_in: usize, seed: u64) -> impl Iterator<Item = Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = 1.0 / (fan_in as f64).sqrt();
    std::iter::repeat_with(move || (0..n).map(|_| rng.random_range(-0.5..0.5) * s).collect())
}

/// Draws tried when loss or gradient is non-finite at the initial parameters.
const INIT_DRAWS: usize = 16;

/// First initialization with finite loss and gradient, or the first draw if
/// none has them.
pub(crate) fn finite_init(
    n: usize,
    fan_in: usize,
    seed: u64,
    mut loss_and_grad: impl FnMut(&[f64]) -> (f64, Vec<f64>),
) -> Vec<f64> {
    let mut finite = |p: &[f64]| {
        let (l, g) = loss_and_grad(p);
        l.is_finite() && g.iter().all(|v| v.is_finite())
    };
    let mut draws = init_draws(n, fan_in, seed);
    let first = draws.next().expect("endless");
    if finite(&first) {
        return first;
    }
    draws.take(INIT_DRAWS - 1).find(|p| finite(p)).unwrap_or(first)
}

/// Feeds a constant raw input (mid-domain) and reports whether the scaled
/// output stays within [`PROBE_BOUND`].
pub(crate) fn probe(num_state: usize, quantity: Quantity, mut step: impl FnMut(&mut SequenceState, &[f64]) -> f64) -> bool {
    let row: Vec<f64> = quantity.input_domains().iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let mut state = SequenceState::zeros(num_state);
    (0..PROBE_STEPS).all(|_| {
        let y = step(&mut state, &row);
        y.is_finite() && y.abs() <= PROBE_BOUND
    })
}
