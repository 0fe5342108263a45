//! Ordinary least-squares regression on linear and quadratic features.
//!
//! Fitting happens on inputs centred and scaled to `[-1, 1]` (raw codes
//! reach 2^20, so raw quartic moments would wreck the normal equations);
//! the solution is then expanded back to coefficients over raw-code
//! monomials, which is the deployed form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::ir::{Builder, IrProgram};
use crate::oracle::Quantity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub quantity: Quantity,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Coefficients over raw-code monomials of total degree <= 2, ordered
/// `[1, x0, x0²]` for one input and `[1, x0, x1, x0², x0·x1, x1²]` for two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub quantity: Quantity,
    pub coefficients: Vec<f64>,
}

/// Monomials as lists of input indices, in the documented order.
pub fn monomials(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    out.extend((0..dim).map(|i| vec![i]));
    if degree >= 2 {
        for i in 0..dim {
            for j in i..dim {
                out.push(vec![i, j]);
            }
        }
    }
    out
}

fn clamp_output(quantity: Quantity, y: f64) -> f64 {
    match quantity.output_clamp() {
        Some((lo, hi)) => y.max(lo).min(hi),
        None => y,
    }
}

/// Rows in a canonical order, so fits do not depend on dataset row order.
fn canonical_rows(data: &Dataset) -> Vec<(&[f64], f64)> {
    let mut rows: Vec<(&[f64], f64)> =
        data.inputs.iter().map(|r| r.as_slice()).zip(data.targets.iter().copied()).collect();
    rows.sort_by(|a, b| {
        a.0.iter()
            .zip(b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.total_cmp(&b.1))
    });
    rows
}

/// Maps raw inputs to `[-1, 1]`: `z = (x - centre) / half`.
#[derive(Clone, Debug)]
pub(crate) struct Standardizer {
    pub centre: Vec<f64>,
    pub half: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[(&[f64], f64)], dim: usize) -> Self {
        let mut centre = Vec::with_capacity(dim);
        let mut half = Vec::with_capacity(dim);
        for k in 0..dim {
            let lo = rows.iter().map(|r| r.0[k]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r.0[k]).fold(f64::NEG_INFINITY, f64::max);
            centre.push(0.5 * (lo + hi));
            half.push(if hi > lo { 0.5 * (hi - lo) } else { 1.0 });
        }
        Self { centre, half }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.centre).zip(&self.half).map(|((x, c), h)| (x - c) / h).collect()
    }
}

pub(crate) fn features(z: &[f64], monos: &[Vec<usize>]) -> Vec<f64> {
    monos.iter().map(|m| m.iter().map(|&i| z[i]).product()).collect()
}

/// Least squares via the normal equations and a Cholesky solve.
fn solve_normal_equations(rows: &[(&[f64], f64)], std: &Standardizer, monos: &[Vec<usize>]) -> Result<Vec<f64>> {
    let p = monos.len();
    if rows.len() < p {
        return Err(Error::RankDeficient);
    }
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for (x, y) in rows {
        let phi = features(&std.apply(x), monos);
        for i in 0..p {
            b[i] += phi[i] * y;
            for j in 0..p {
                a[(i, j)] += phi[i] * phi[j];
            }
        }
    }
    let max_diag = (0..p).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let chol = a.cholesky().ok_or(Error::RankDeficient)?;
    let l = chol.l();
    if (0..p).any(|i| l[(i, i)] * l[(i, i)] <= 1e-10 * max_diag) {
        return Err(Error::RankDeficient);
    }
    Ok(chol.solve(&b).iter().copied().collect())
}

/// Rewrites coefficients over standardized monomials as coefficients over
/// raw monomials (same ordering). `z_i = s_i x_i + o_i`.
fn expand_to_raw(coef: &[f64], std: &Standardizer, monos: &[Vec<usize>]) -> Vec<f64> {
    let s: Vec<f64> = std.half.iter().map(|h| 1.0 / h).collect();
    let o: Vec<f64> = std.centre.iter().zip(&std.half).map(|(c, h)| -c / h).collect();
    let index_of = |m: &[usize]| {
        let mut key = m.to_vec();
        key.sort_unstable();
        monos.iter().position(|x| *x == key).expect("monomial present")
    };
    let mut raw = vec![0.0; monos.len()];
    for (c, m) in coef.iter().zip(monos) {
        match m.as_slice() {
            [] => raw[0] += c,
            [i] => {
                raw[index_of(&[*i])] += c * s[*i];
                raw[0] += c * o[*i];
            }
            [i, j] => {
                raw[index_of(&[*i, *j])] += c * s[*i] * s[*j];
                raw[index_of(&[*i])] += c * s[*i] * o[*j];
                raw[index_of(&[*j])] += c * o[*i] * s[*j];
                raw[0] += c * o[*i] * o[*j];
            }
            _ => unreachable!("degree <= 2"),
        }
    }
    raw
}

pub fn fit_linear(data: &Dataset) -> Result<LinearModel> {
    let rows = canonical_rows(data);
    let dim = data.dim();
    let std = Standardizer::fit(&rows, dim);
    let monos = monomials(dim, 1);
    let coef = solve_normal_equations(&rows, &std, &monos)?;
    let raw = expand_to_raw(&coef, &std, &monos);
    Ok(LinearModel { quantity: data.quantity, weights: raw[1..].to_vec(), bias: raw[0] })
}

pub fn fit_quadratic(data: &Dataset) -> Result<QuadraticModel> {
    let rows = canonical_rows(data);
    let dim = data.dim();
    let std = Standardizer::fit(&rows, dim);
    let monos = monomials(dim, 2);
    let coef = solve_normal_equations(&rows, &std, &monos)?;
    Ok(QuadraticModel { quantity: data.quantity, coefficients: expand_to_raw(&coef, &std, &monos) })
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = x[0] * self.weights[0];
        for (xi, w) in x.iter().zip(&self.weights).skip(1) {
            acc += xi * w;
        }
        clamp_output(self.quantity, acc + self.bias)
    }

    pub fn lower(&self) -> Result<IrProgram> {
        let mut b = Builder::new(self.quantity.input_domains(), 0);
        let mut acc = None;
        for (i, &w) in self.weights.iter().enumerate() {
            let x = b.input(i);
            let t = b.mul_const(x, w);
            acc = Some(match acc {
                None => t,
                Some(a) => b.add(a, t),
            });
        }
        let y = b.add_const(acc.expect("at least one input"), self.bias);
        let y = lower_clamp(&mut b, self.quantity, y);
        b.finish(y)
    }
}

impl QuadraticModel {
    fn monomial_values(&self, x: &[f64]) -> Vec<f64> {
        let monos = monomials(x.len(), 2);
        monos[1..]
            .iter()
            .map(|m| match m.as_slice() {
                [i] => x[*i],
                [i, j] => x[*i] * x[*j],
                _ => unreachable!(),
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let vals = self.monomial_values(x);
        let mut acc = self.coefficients[0];
        for (c, v) in self.coefficients[1..].iter().zip(&vals) {
            acc += c * v;
        }
        clamp_output(self.quantity, acc)
    }

    pub fn lower(&self) -> Result<IrProgram> {
        let dim = self.quantity.input_dim();
        let mut b = Builder::new(self.quantity.input_domains(), 0);
        let xs: Vec<_> = (0..dim).map(|i| b.input(i)).collect();
        let monos = monomials(dim, 2);
        let vals: Vec<_> = monos[1..]
            .iter()
            .map(|m| match m.as_slice() {
                [i] => xs[*i],
                [i, j] => b.mul(xs[*i], xs[*j]),
                _ => unreachable!(),
            })
            .collect();
        let mut acc = b.constant(self.coefficients[0]);
        for (&c, &v) in self.coefficients[1..].iter().zip(&vals) {
            let k = b.constant(c);
            let t = b.mul(k, v);
            acc = b.add(acc, t);
        }
        let y = lower_clamp(&mut b, self.quantity, acc);
        b.finish(y)
    }
}

/// Appends the humidity output clamp when the quantity needs one.
pub(crate) fn lower_clamp(b: &mut Builder, quantity: Quantity, y: crate::ir::Reg) -> crate::ir::Reg {
    match quantity.output_clamp() {
        Some((lo, hi)) => b.clamp(y, lo, hi),
        None => y,
    }
}
