use serde::{Deserialize, Serialize};

use super::{check_sequence, finite_init, probe, Scalers, SequenceState};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::ir::{Activation, Builder, IrProgram, Reg};
use crate::oracle::Quantity;
use crate::surrogates::optim::{minimize, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellVariant {
    SimpleRnn,
    Gru,
    HalfGru,
}

impl CellVariant {
    /// Gate blocks in parameter order. Each block is `[w(d), u, b]`.
    fn blocks(self) -> usize {
        match self {
            CellVariant::SimpleRnn => 1,
            CellVariant::Gru => 3,
            CellVariant::HalfGru => 2,
        }
    }
}

/// Scalar-state recurrent cell; `y_t = h_t`.
///
/// * simple RNN: `h' = φ(w·x + u·h + b)`
/// * GRU: `z = σ(..h)`, `r = σ(..h)`, `c = φ(w·x + u·(r·h) + b)`,
///   `h' = (1 - z)·h + z·c`; blocks ordered `[z, r, c]`
/// * half GRU: the GRU without `z`, `h' = c`; blocks `[r, c]`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentCell {
    pub quantity: Quantity,
    pub variant: CellVariant,
    pub activation: Activation,
    pub gate: Activation,
    pub params: Vec<f64>,
    pub scalers: Scalers,
    pub seed: u64,
    pub epochs: usize,
    pub stable: bool,
}

pub fn cell_param_count(variant: CellVariant, d: usize) -> usize {
    variant.blocks() * (d + 2)
}

#[inline]
fn pre(block: &[f64], x: &[f64], h: f64) -> f64 {
    let d = x.len();
    let mut acc = block[0] * x[0];
    for k in 1..d {
        acc += block[k] * x[k];
    }
    acc += block[d] * h;
    acc + block[d + 1]
}

impl RecurrentCell {
    pub fn dim(&self) -> usize {
        self.scalers.input.len()
    }

    pub fn num_state(&self) -> usize {
        1
    }

    fn block(&self, i: usize) -> &[f64] {
        let w = self.dim() + 2;
        &self.params[i * w..(i + 1) * w]
    }

    /// One step from hidden value `h` on a scaled row; returns `h'`.
    pub fn cell_step(&self, h: f64, x: &[f64]) -> f64 {
        match self.variant {
            CellVariant::SimpleRnn => self.activation.apply(pre(self.block(0), x, h)),
            CellVariant::Gru => {
                let z = self.gate.apply(pre(self.block(0), x, h));
                let r = self.gate.apply(pre(self.block(1), x, h));
                let c = self.activation.apply(pre(self.block(2), x, r * h));
                (1.0 - z) * h + z * c
            }
            CellVariant::HalfGru => {
                let r = self.gate.apply(pre(self.block(0), x, h));
                self.activation.apply(pre(self.block(1), x, r * h))
            }
        }
    }

    pub fn step(&self, state: &mut SequenceState, x: &[f64]) -> f64 {
        let h = self.cell_step(state.slots[0], x);
        state.slots[0] = h;
        state.step += 1;
        h
    }

    pub fn predict_step(&self, state: &mut SequenceState, x: &[f64]) -> f64 {
        let h = self.step(state, &self.scalers.scale_row(x));
        self.scalers.unscale(self.quantity, h)
    }

    pub fn predict_sequence(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let mut state = SequenceState::zeros(1);
        rows.iter().map(|r| self.predict_step(&mut state, r)).collect()
    }

    fn lower_pre(&self, b: &mut Builder, i: usize, x: &[Reg], h: Reg) -> Reg {
        let blk = self.block(i).to_vec();
        let d = x.len();
        let w0 = b.constant(blk[0]);
        let mut acc = b.mul(w0, x[0]);
        for k in 1..d {
            let w = b.constant(blk[k]);
            let t = b.mul(w, x[k]);
            acc = b.add(acc, t);
        }
        let u = b.constant(blk[d]);
        let t = b.mul(u, h);
        acc = b.add(acc, t);
        b.add_const(acc, blk[d + 1])
    }

    pub fn lower(&self) -> Result<IrProgram> {
        let mut b = Builder::new(self.quantity.input_domains(), 1);
        let x = self.scalers.lower_inputs(&mut b);
        let h = b.load_state(0);
        let h_new = match self.variant {
            CellVariant::SimpleRnn => {
                let a = self.lower_pre(&mut b, 0, &x, h);
                b.activation(self.activation, a)
            }
            CellVariant::Gru => {
                let az = self.lower_pre(&mut b, 0, &x, h);
                let z = b.activation(self.gate, az);
                let ar = self.lower_pre(&mut b, 1, &x, h);
                let r = b.activation(self.gate, ar);
                let rh = b.mul(r, h);
                let ac = self.lower_pre(&mut b, 2, &x, rh);
                let c = b.activation(self.activation, ac);
                let one = b.constant(1.0);
                let keep = b.sub(one, z);
                let t1 = b.mul(keep, h);
                let t2 = b.mul(z, c);
                b.add(t1, t2)
            }
            CellVariant::HalfGru => {
                let ar = self.lower_pre(&mut b, 0, &x, h);
                let r = b.activation(self.gate, ar);
                let rh = b.mul(r, h);
                let ac = self.lower_pre(&mut b, 1, &x, rh);
                b.activation(self.activation, ac)
            }
        };
        b.store_state(0, h_new);
        let out = self.scalers.lower_output(&mut b, self.quantity, h_new);
        b.finish(out)
    }
}

/// Per-step forward values kept for the backward pass.
#[derive(Clone, Copy, Default)]
struct Tape {
    h: f64,
    az: f64,
    z: f64,
    ar: f64,
    r: f64,
    ac: f64,
    c: f64,
}

/// Mean squared error of the free-running cell over a scaled sequence
/// (`xs` row-major, `d` columns) and its BPTT gradient.
pub fn cell_loss_and_grad(
    variant: CellVariant,
    activation: Activation,
    gate: Activation,
    d: usize,
    params: &[f64],
    xs: &[f64],
    ys: &[f64],
) -> (f64, Vec<f64>) {
    let mut tape = Vec::new();
    cell_loss_and_grad_with(variant, activation, gate, d, params, xs, ys, &mut tape)
}

#[allow(clippy::too_many_arguments)]
fn cell_loss_and_grad_with(
    variant: CellVariant,
    activation: Activation,
    gate: Activation,
    d: usize,
    params: &[f64],
    xs: &[f64],
    ys: &[f64],
    tape: &mut Vec<Tape>,
) -> (f64, Vec<f64>) {
    let n = ys.len();
    let w = d + 2;
    let blk = |i: usize| &params[i * w..(i + 1) * w];
    tape.clear();
    tape.reserve(n);
    let mut h = 0.0;
    let mut loss = 0.0;
    for t in 0..n {
        let x = &xs[t * d..(t + 1) * d];
        let mut s = Tape { h, ..Tape::default() };
        let h_new = match variant {
            CellVariant::SimpleRnn => {
                s.ac = pre(blk(0), x, h);
                s.c = activation.apply(s.ac);
                s.c
            }
            CellVariant::Gru => {
                s.az = pre(blk(0), x, h);
                s.z = gate.apply(s.az);
                s.ar = pre(blk(1), x, h);
                s.r = gate.apply(s.ar);
                s.ac = pre(blk(2), x, s.r * h);
                s.c = activation.apply(s.ac);
                (1.0 - s.z) * h + s.z * s.c
            }
            CellVariant::HalfGru => {
                s.ar = pre(blk(0), x, h);
                s.r = gate.apply(s.ar);
                s.ac = pre(blk(1), x, s.r * h);
                s.c = activation.apply(s.ac);
                s.c
            }
        };
        tape.push(s);
        h = h_new;
        let e = h - ys[t];
        loss += e * e;
    }

    let mut grad = vec![0.0; params.len()];
    let (zi, ri, ci) = match variant {
        CellVariant::SimpleRnn => (usize::MAX, usize::MAX, 0),
        CellVariant::Gru => (0, 1, 2),
        CellVariant::HalfGru => (usize::MAX, 0, 1),
    };
    let acc = |grad: &mut [f64], i: usize, delta: f64, x: &[f64], hin: f64| {
        let g = &mut grad[i * w..(i + 1) * w];
        for k in 0..d {
            g[k] += delta * x[k];
        }
        g[d] += delta * hin;
        g[d + 1] += delta;
    };
    let scale = 2.0 / n as f64;
    let mut carry = 0.0;
    let mut h_out = h;
    for t in (0..n).rev() {
        let s = tape[t];
        let x = &xs[t * d..(t + 1) * d];
        let gh = scale * (h_out - ys[t]) + carry;
        let mut dh = 0.0;
        match variant {
            CellVariant::SimpleRnn => {
                let dac = gh * activation.derivative(s.ac);
                acc(&mut grad, ci, dac, x, s.h);
                dh += dac * blk(ci)[d];
            }
            CellVariant::Gru | CellVariant::HalfGru => {
                let dc = if variant == CellVariant::Gru {
                    let dz = gh * (s.c - s.h);
                    dh += gh * (1.0 - s.z);
                    let daz = dz * gate.derivative(s.az);
                    acc(&mut grad, zi, daz, x, s.h);
                    dh += daz * blk(zi)[d];
                    gh * s.z
                } else {
                    gh
                };
                let dac = dc * activation.derivative(s.ac);
                let rh = s.r * s.h;
                acc(&mut grad, ci, dac, x, rh);
                let drh = dac * blk(ci)[d];
                dh += drh * s.r;
                let dar = drh * s.h * gate.derivative(s.ar);
                acc(&mut grad, ri, dar, x, s.h);
                dh += dar * blk(ri)[d];
            }
        }
        carry = dh;
        h_out = s.h;
    }
    (loss / n as f64, grad)
}

pub fn train_cell(
    data: &Dataset,
    variant: CellVariant,
    activation: Activation,
    gate: Activation,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<RecurrentCell> {
    check_sequence(data)?;
    if !matches!(activation, Activation::Tanh | Activation::Relu) {
        return Err(Error::InvalidArgument(format!("cell activation must be tanh or relu, got {}", activation.name())));
    }
    if !matches!(gate, Activation::Sigmoid | Activation::Softsign) {
        return Err(Error::InvalidArgument(format!("gate squash must be sigmoid or softsign, got {}", gate.name())));
    }
    let d = data.dim();
    let scalers = Scalers::fit(data);
    let (xs, ys) = scalers.scale_dataset(data);
    let mut tape = Vec::with_capacity(ys.len());
    let mut params = finite_init(cell_param_count(variant, d), d + 1, seed, |p| {
        cell_loss_and_grad_with(variant, activation, gate, d, p, &xs, &ys, &mut tape)
    });
    let epochs = minimize(
        &mut params,
        cfg,
        |p| cell_loss_and_grad_with(variant, activation, gate, d, p, &xs, &ys, &mut tape),
        scalers.metric(data.quantity),
    )?;
    let mut model = RecurrentCell {
        quantity: data.quantity,
        variant,
        activation,
        gate,
        params,
        scalers,
        seed,
        epochs,
        stable: false,
    };
    model.stable = probe(1, model.quantity, |s, x| model.step(s, &model.scalers.scale_row(x)));
    Ok(model)
}
