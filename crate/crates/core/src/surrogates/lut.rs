//! Lookup table over a uniform raw-code grid with linear interpolation.
//!
//! One input: two-point interpolation on the containing interval. Two
//! inputs: each cell is split along its (low,low)-(high,high) diagonal and
//! the containing triangle's three vertices are blended barycentrically.
//! Queries outside the grid are clamped onto it.

use serde::{Deserialize, Serialize};

use super::linear::lower_clamp;
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::ir::{Builder, IrProgram, Placement, Reg};
use crate::oracle::Quantity;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub step: f64,
    pub inv_step: f64,
    pub levels: usize,
}

impl GridAxis {
    /// Clamped fractional grid coordinate, integer cell index and the
    /// offset within the cell.
    fn locate(&self, x: f64) -> (f64, f64) {
        let u = ((x - self.min) * self.inv_step).max(0.0).min((self.levels - 1) as f64);
        let i = u.floor().min((self.levels - 2) as f64);
        (i, u - i)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LutModel {
    pub quantity: Quantity,
    pub axes: Vec<GridAxis>,
    /// Row-major over the axes: index `i` (axis 0) varies slowest.
    pub values: Vec<f64>,
}

fn uniform_axis(mut coords: Vec<f64>) -> Result<GridAxis> {
    coords.sort_by(f64::total_cmp);
    coords.dedup();
    let levels = coords.len();
    if levels < 2 {
        return Err(Error::NonGrid("axis needs at least two distinct coordinates".into()));
    }
    let (min, max) = (coords[0], coords[levels - 1]);
    let step = (max - min) / (levels - 1) as f64;
    for (k, w) in coords.windows(2).enumerate() {
        if ((w[1] - w[0]) - step).abs() > 1e-9 * (max - min) {
            return Err(Error::NonGrid(format!("non-uniform spacing at node {k}")));
        }
    }
    Ok(GridAxis { min, step, inv_step: 1.0 / step, levels })
}

/// Stores the targets of a full uniform grid dataset.
pub fn build_lut(data: &Dataset) -> Result<LutModel> {
    let dim = data.dim();
    let axes = (0..dim)
        .map(|k| uniform_axis(data.inputs.iter().map(|r| r[k]).collect()))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = axes.iter().map(|a| a.levels).product();
    if total != data.len() {
        return Err(Error::NonGrid(format!("{} rows for a {total}-node grid", data.len())));
    }
    let mut values = vec![f64::NAN; total];
    let mut seen = vec![false; total];
    for (row, &t) in data.inputs.iter().zip(&data.targets) {
        let mut flat = 0;
        for (x, a) in row.iter().zip(&axes) {
            let k = ((x - a.min) * a.inv_step).round();
            if !(0.0..a.levels as f64).contains(&k) {
                return Err(Error::NonGrid("row off the grid".into()));
            }
            flat = flat * a.levels + k as usize;
        }
        if std::mem::replace(&mut seen[flat], true) {
            return Err(Error::NonGrid("duplicate grid node".into()));
        }
        values[flat] = t;
    }
    Ok(LutModel { quantity: data.quantity, axes, values })
}

impl LutModel {
    pub fn entries(&self) -> usize {
        self.values.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let y = match self.axes.as_slice() {
            [a] => {
                let (i, f) = a.locate(x[0]);
                let i = i as usize;
                (1.0 - f) * self.values[i] + f * self.values[i + 1]
            }
            [a, b] => {
                let (i, fx) = a.locate(x[0]);
                let (j, fy) = b.locate(x[1]);
                let stride = b.levels as f64;
                let base = i * stride + j;
                let (p, q) = (fx.max(fy), fx.min(fy));
                let mid = if fx < fy { 1.0 } else { stride };
                let v00 = self.values[base as usize];
                let vmid = self.values[(base + mid) as usize];
                let v11 = self.values[(base + (stride + 1.0)) as usize];
                ((1.0 - p) * v00 + (p - q) * vmid) + q * v11
            }
            _ => unreachable!("one or two inputs"),
        };
        match self.quantity.output_clamp() {
            Some((lo, hi)) => y.max(lo).min(hi),
            None => y,
        }
    }

    fn lower_locate(b: &mut Builder, a: &GridAxis, x: Reg) -> (Reg, Reg) {
        let u = b.affine_in(x, a.min, a.inv_step);
        let u = b.clamp(u, 0.0, (a.levels - 1) as f64);
        let fl = b.floor_to_index(u);
        let top = b.constant((a.levels - 2) as f64);
        let i = b.min(fl, top);
        let f = b.sub(u, i);
        (i, f)
    }

    /// The table is RAM-resident, as on the measured target.
    pub fn lower(&self) -> Result<IrProgram> {
        let mut b = Builder::new(self.quantity.input_domains(), 0);
        let t = b.add_table(self.values.clone(), Placement::Ram);
        let one = b.constant(1.0);
        let y = match self.axes.as_slice() {
            [a] => {
                let x = b.input(0);
                let (i, f) = Self::lower_locate(&mut b, a, x);
                let v0 = b.table_read(t, i);
                let i1 = b.add(i, one);
                let v1 = b.table_read(t, i1);
                let w0 = b.sub(one, f);
                let l = b.mul(w0, v0);
                let r = b.mul(f, v1);
                b.add(l, r)
            }
            [ax, ay] => {
                let x0 = b.input(0);
                let x1 = b.input(1);
                let (i, fx) = Self::lower_locate(&mut b, ax, x0);
                let (j, fy) = Self::lower_locate(&mut b, ay, x1);
                let stride = b.constant(ay.levels as f64);
                let row = b.mul(i, stride);
                let base = b.add(row, j);
                let p = b.max(fx, fy);
                let q = b.min(fx, fy);
                let upper = b.compare_lt(fx, fy);
                let mid = b.select(upper, one, stride);
                let imid = b.add(base, mid);
                let diag = b.constant(ay.levels as f64 + 1.0);
                let ifar = b.add(base, diag);
                let v00 = b.table_read(t, base);
                let vmid = b.table_read(t, imid);
                let v11 = b.table_read(t, ifar);
                let w0 = b.sub(one, p);
                let w1 = b.sub(p, q);
                let t0 = b.mul(w0, v00);
                let t1 = b.mul(w1, vmid);
                let t2 = b.mul(q, v11);
                let s = b.add(t0, t1);
                b.add(s, t2)
            }
            _ => unreachable!("one or two inputs"),
        };
        let y = lower_clamp(&mut b, self.quantity, y);
        b.finish(y)
    }
}
