//! Small fully-connected RELU networks trained full-batch with Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linear::lower_clamp;
use super::optim::{minimize, TrainConfig};
use super::scaler::MinMax;
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::ir::{Activation, Builder, IrProgram};
use crate::oracle::Quantity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub quantity: Quantity,
    /// Neurons per layer, last entry 1.
    pub layers: Vec<usize>,
    /// Per layer: weights row-major (`out × in`) followed by biases.
    pub params: Vec<f64>,
    pub input_scale: Vec<MinMax>,
    pub output_scale: MinMax,
    pub seed: u64,
    pub epochs: usize,
}

pub fn param_count(input_dim: usize, layers: &[usize]) -> usize {
    let mut fan_in = input_dim;
    let mut n = 0;
    for &w in layers {
        n += w * fan_in + w;
        fan_in = w;
    }
    n
}

fn check_layers(layers: &[usize]) -> Result<()> {
    if layers.last() != Some(&1) || layers.contains(&0) {
        return Err(Error::InvalidArgument(format!("layers must be non-empty, positive and end in 1: {layers:?}")));
    }
    Ok(())
}

/// Forward pass keeping every pre-activation, for the backward pass.
fn forward(input_dim: usize, layers: &[usize], params: &[f64], x: &[f64], pre: &mut Vec<Vec<f64>>) -> f64 {
    pre.clear();
    let mut a = x.to_vec();
    let mut off = 0;
    let mut fan_in = input_dim;
    for &width in layers {
        let (w, b) = params[off..off + width * fan_in + width].split_at(width * fan_in);
        let mut z = Vec::with_capacity(width);
        for o in 0..width {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            let mut acc = row[0] * a[0];
            for k in 1..fan_in {
                acc += row[k] * a[k];
            }
            z.push(acc + b[o]);
        }
        a = z.iter().map(|&v| Activation::Relu.apply(v)).collect();
        pre.push(z);
        off += width * fan_in + width;
        fan_in = width;
    }
    a[0]
}

/// Mean squared error over scaled rows and its gradient.
pub fn loss_and_grad(input_dim: usize, layers: &[usize], params: &[f64], xs: &[Vec<f64>], ys: &[f64]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.len()];
    let mut pre = Vec::new();
    let mut loss = 0.0;
    let n = xs.len() as f64;
    let offsets: Vec<(usize, usize)> = {
        let mut v = Vec::new();
        let (mut off, mut fan_in) = (0, input_dim);
        for &w in layers {
            v.push((off, fan_in));
            off += w * fan_in + w;
            fan_in = w;
        }
        v
    };
    for (x, &y) in xs.iter().zip(ys) {
        let out = forward(input_dim, layers, params, x, &mut pre);
        let e = out - y;
        loss += e * e;
        let mut delta: Vec<f64> = vec![2.0 * e / n * Activation::Relu.derivative(pre[layers.len() - 1][0])];
        for l in (0..layers.len()).rev() {
            let (off, fan_in) = offsets[l];
            let width = layers[l];
            let prev: Vec<f64> = if l == 0 {
                x.clone()
            } else {
                pre[l - 1].iter().map(|&v| Activation::Relu.apply(v)).collect()
            };
            for o in 0..width {
                for k in 0..fan_in {
                    grad[off + o * fan_in + k] += delta[o] * prev[k];
                }
                grad[off + width * fan_in + o] += delta[o];
            }
            if l > 0 {
                delta = (0..fan_in)
                    .map(|k| {
                        let s: f64 = (0..width).map(|o| params[off + o * fan_in + k] * delta[o]).sum();
                        s * Activation::Relu.derivative(pre[l - 1][k])
                    })
                    .collect();
            }
        }
    }
    (loss / n, grad)
}

pub fn init_params(input_dim: usize, layers: &[usize], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(param_count(input_dim, layers));
    let mut fan_in = input_dim;
    for &w in layers {
        let s = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..w * fan_in + w {
            out.push(rng.random_range(-0.5..0.5) * s);
        }
        fan_in = w;
    }
    out
}

pub fn train_mlp(data: &Dataset, layers: &[usize], seed: u64, cfg: &TrainConfig) -> Result<MlpModel> {
    check_layers(layers)?;
    let dim = data.dim();
    let input_scale = MinMax::fit_columns(&data.inputs);
    let output_scale = MinMax::fit(data.targets.iter().copied());
    let xs: Vec<Vec<f64>> = data
        .inputs
        .iter()
        .map(|r| r.iter().zip(&input_scale).map(|(x, s)| s.forward(*x)).collect())
        .collect();
    let ys: Vec<f64> = data.targets.iter().map(|&t| output_scale.forward(t)).collect();
    let mut params = init_params(dim, layers, seed);
    let to_norm = output_scale.span * 100.0 / data.quantity.range().span();
    let epochs = minimize(&mut params, cfg, |p| loss_and_grad(dim, layers, p, &xs, &ys), |l| l.sqrt() * to_norm)?;
    Ok(MlpModel { quantity: data.quantity, layers: layers.to_vec(), params, input_scale, output_scale, seed, epochs })
}

impl MlpModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let u: Vec<f64> = x.iter().zip(&self.input_scale).map(|(x, s)| s.forward(*x)).collect();
        let mut pre = Vec::new();
        let y = forward(u.len(), &self.layers, &self.params, &u, &mut pre);
        let y = self.output_scale.min + y * self.output_scale.span;
        match self.quantity.output_clamp() {
            Some((lo, hi)) => y.max(lo).min(hi),
            None => y,
        }
    }

    pub fn lower(&self) -> Result<IrProgram> {
        let mut b = Builder::new(self.quantity.input_domains(), 0);
        let mut a: Vec<_> = self
            .input_scale
            .iter()
            .enumerate()
            .map(|(d, s)| {
                let x = b.input(d);
                b.affine_in(x, s.min, s.inv_span)
            })
            .collect();
        let mut off = 0;
        for &width in &self.layers {
            let fan_in = a.len();
            let mut next = Vec::with_capacity(width);
            for o in 0..width {
                let w0 = b.constant(self.params[off + o * fan_in]);
                let mut acc = b.mul(w0, a[0]);
                for k in 1..fan_in {
                    let w = b.constant(self.params[off + o * fan_in + k]);
                    let t = b.mul(w, a[k]);
                    acc = b.add(acc, t);
                }
                let z = b.add_const(acc, self.params[off + width * fan_in + o]);
                next.push(b.activation(Activation::Relu, z));
            }
            off += width * fan_in + width;
            a = next;
        }
        let y = b.affine_out(a[0], self.output_scale.span, self.output_scale.min);
        let y = lower_clamp(&mut b, self.quantity, y);
        b.finish(y)
    }
}
