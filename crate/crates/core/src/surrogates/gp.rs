//! Gaussian-process regression with a squared-exponential kernel and
//! Gaussian likelihood. Only the posterior mean is deployed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linear::lower_clamp;
use super::scaler::MinMax;
use crate::datagen::{gp::jittered_cholesky, Dataset};
use crate::error::{Error, Result};
use crate::ir::{Activation, Builder, IrProgram};
use crate::oracle::Quantity;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    /// Pin the noise variance (scaled-target units) instead of searching it.
    pub fixed_noise: Option<f64>,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self { fixed_noise: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub quantity: Quantity,
    pub levels: usize,
    pub input_scale: Vec<MinMax>,
    /// Training inputs in scaled `[0, 1]` coordinates.
    pub train_x: Vec<Vec<f64>>,
    /// `(K + σ²I)⁻¹ y` for standardized targets.
    pub alpha: Vec<f64>,
    pub hyper: GpHyper,
    pub y_mean: f64,
    pub y_scale: f64,
    pub log_likelihood: f64,
}

// Search box, log-spaced, around heuristics of 1 (inputs in [0,1],
// standardized targets) and 1e-6 for the noise variance.
const LS_BOUNDS: (f64, f64) = (1e-2, 1e2);
const SF_BOUNDS: (f64, f64) = (1e-2, 1e2);
const SN_BOUNDS: (f64, f64) = (1e-8, 1e-4);
const GRID: (usize, usize, usize) = (20, 10, 8);

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1).max(1) as f64).exp()).collect()
}

fn kernel_matrix(x: &[Vec<f64>], h: &GpHyper) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| {
        let r2: f64 = x[i]
            .iter()
            .zip(&x[j])
            .zip(&h.lengthscales)
            .map(|((a, b), l)| ((a - b) / l).powi(2))
            .sum();
        h.signal_variance * (-0.5 * r2).exp() + if i == j { h.noise_variance } else { 0.0 }
    })
}

/// Log marginal likelihood, or `-inf` when the Gram matrix is not PD.
pub fn log_marginal_likelihood(x: &[Vec<f64>], y: &[f64], h: &GpHyper) -> f64 {
    let Some(chol) = kernel_matrix(x, h).cholesky() else {
        return f64::NEG_INFINITY;
    };
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * yv.dot(&alpha) - log_det - 0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

struct Search<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    dim: usize,
    fixed_noise: Option<f64>,
}

impl Search<'_> {
    /// θ = [ln ℓ_1..ℓ_d, ln σ_f², ln σ_n²]
    fn hyper(&self, theta: &[f64]) -> GpHyper {
        GpHyper {
            lengthscales: theta[..self.dim].iter().map(|t| t.exp()).collect(),
            signal_variance: theta[self.dim].exp(),
            noise_variance: self.fixed_noise.unwrap_or_else(|| theta[self.dim + 1].exp()),
        }
    }

    fn score(&self, theta: &[f64]) -> f64 {
        log_marginal_likelihood(self.x, self.y, &self.hyper(theta))
    }

    fn bounds(&self, k: usize) -> (f64, f64) {
        let b = if k < self.dim {
            LS_BOUNDS
        } else if k == self.dim {
            SF_BOUNDS
        } else {
            SN_BOUNDS
        };
        (b.0.ln(), b.1.ln())
    }

    fn run(&self) -> (Vec<f64>, f64) {
        let noises = match self.fixed_noise {
            Some(n) => vec![n],
            None => logspace(SN_BOUNDS.0, SN_BOUNDS.1, GRID.2),
        };
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        for &l in &logspace(LS_BOUNDS.0, LS_BOUNDS.1, GRID.0) {
            for &s in &logspace(SF_BOUNDS.0, SF_BOUNDS.1, GRID.1) {
                for &n in &noises {
                    let mut theta = vec![l.ln(); self.dim];
                    theta.push(s.ln());
                    if self.fixed_noise.is_none() {
                        theta.push(n.ln());
                    }
                    let v = self.score(&theta);
                    if v > best.1 {
                        best = (theta, v);
                    }
                }
            }
        }
        if best.0.is_empty() {
            return best;
        }
        // Coordinate descent in log space with a shrinking step.
        let (mut theta, mut val) = best;
        let mut step = std::f64::consts::LN_10 / 4.0;
        let mut evals = 0;
        while step > 1e-3 && evals < 2000 {
            let mut improved = false;
            for k in 0..theta.len() {
                let (lo, hi) = self.bounds(k);
                for dir in [1.0, -1.0] {
                    let mut cand = theta.clone();
                    cand[k] = (cand[k] + dir * step).clamp(lo, hi);
                    evals += 1;
                    let v = self.score(&cand);
                    if v > val {
                        theta = cand;
                        val = v;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (theta, val)
    }
}

/// Fits on a mesh of `levels^d` points, maximizing the log marginal
/// likelihood over a log-spaced grid refined by coordinate descent.
pub fn fit_gp(data: &Dataset, levels: usize, cfg: &GpConfig) -> Result<GpModel> {
    let dim = data.dim();
    if !(2..=3).contains(&levels) || data.len() != levels.pow(dim as u32) {
        return Err(Error::InvalidArgument(format!(
            "GP expects a {levels}-level mesh ({} points), got {}",
            levels.pow(dim as u32),
            data.len()
        )));
    }
    if let Some(n) = cfg.fixed_noise {
        if !(n > 0.0) {
            return Err(Error::InvalidArgument("noise variance must be > 0".into()));
        }
    }
    let input_scale = MinMax::fit_columns(&data.inputs);
    let train_x: Vec<Vec<f64>> = data
        .inputs
        .iter()
        .map(|r| r.iter().zip(&input_scale).map(|(x, s)| s.forward(*x)).collect())
        .collect();
    let n = data.len() as f64;
    let y_mean = data.targets.iter().sum::<f64>() / n;
    let var = data.targets.iter().map(|t| (t - y_mean).powi(2)).sum::<f64>() / n;
    let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let y: Vec<f64> = data.targets.iter().map(|t| (t - y_mean) / y_scale).collect();

    let search = Search { x: &train_x, y: &y, dim, fixed_noise: cfg.fixed_noise };
    let (theta, ll) = search.run();
    if theta.is_empty() {
        return Err(Error::Factorization(SN_BOUNDS.1));
    }
    let hyper = search.hyper(&theta);
    let l = jittered_cholesky(&kernel_matrix(&train_x, &hyper))?;
    let mut alpha = DVector::from_column_slice(&y);
    l.solve_lower_triangular_mut(&mut alpha);
    l.transpose().solve_upper_triangular_mut(&mut alpha);
    Ok(GpModel {
        quantity: data.quantity,
        levels,
        input_scale,
        train_x,
        alpha: alpha.iter().copied().collect(),
        hyper,
        y_mean,
        y_scale,
        log_likelihood: ll,
    })
}

impl GpModel {
    /// Per-dimension factor `1/(√2 ℓ)` so that each kernel factor is
    /// `gaussian((u - x) · c) = exp(-(u - x)² / 2ℓ²)`.
    fn kernel_factors(&self) -> Vec<f64> {
        self.hyper.lengthscales.iter().map(|l| 1.0 / (std::f64::consts::SQRT_2 * l)).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| a * self.hyper.signal_variance).collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let u: Vec<f64> = x.iter().zip(&self.input_scale).map(|(x, s)| s.forward(*x)).collect();
        let c = self.kernel_factors();
        let mut sum = None;
        for (w, xi) in self.weights().iter().zip(&self.train_x) {
            let mut k = *w;
            for d in 0..u.len() {
                k *= Activation::Gaussian.apply((u[d] - xi[d]) * c[d]);
            }
            sum = Some(sum.map_or(k, |s: f64| s + k));
        }
        let y = sum.unwrap_or(0.0) * self.y_scale + self.y_mean;
        match self.quantity.output_clamp() {
            Some((lo, hi)) => y.max(lo).min(hi),
            None => y,
        }
    }

    pub fn lower(&self) -> Result<IrProgram> {
        let mut b = Builder::new(self.quantity.input_domains(), 0);
        let u: Vec<_> = self
            .input_scale
            .iter()
            .enumerate()
            .map(|(d, s)| {
                let x = b.input(d);
                b.affine_in(x, s.min, s.inv_span)
            })
            .collect();
        let c = self.kernel_factors();
        let mut sum = None;
        for (w, xi) in self.weights().iter().zip(&self.train_x) {
            let mut k = b.constant(*w);
            for d in 0..u.len() {
                let centre = b.constant(xi[d]);
                let diff = b.sub(u[d], centre);
                let t = b.mul_const(diff, c[d]);
                let g = b.activation(Activation::Gaussian, t);
                k = b.mul(k, g);
            }
            sum = Some(match sum {
                None => k,
                Some(s) => b.add(s, k),
            });
        }
        let y = b.affine_out(sum.expect("non-empty training set"), self.y_scale, self.y_mean);
        let y = lower_clamp(&mut b, self.quantity, y);
        b.finish(y)
    }
}
