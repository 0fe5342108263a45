//! Zero-mean Matérn-5/2 Gaussian-process sampling on an integer index grid.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Largest sequence drawn with a single exact Cholesky factor.
pub const EXACT_LIMIT: usize = 2000;
pub const BLOCK_LEN: usize = 500;
pub const CONDITION_LEN: usize = 100;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

/// Matérn-5/2 correlation at distance `r` with unit variance.
pub fn matern52(r: f64, lengthscale: f64) -> f64 {
    let s = 5f64.sqrt() * r.abs() / lengthscale;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn cov(n_rows: usize, n_cols: usize, row_off: usize, col_off: usize, ls: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n_rows, n_cols, |i, j| {
        matern52((i + row_off) as f64 - (j + col_off) as f64, ls)
    })
}

/// Lower Cholesky factor with escalating diagonal jitter.
pub fn jittered_cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut jitter = JITTER_START;
    loop {
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = a.cholesky() {
            return Ok(ch.l());
        }
        jitter *= 10.0;
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return Err(Error::Factorization(jitter / 10.0));
        }
    }
}

struct BlockPlan {
    /// Maps conditioning values to the block's conditional mean.
    gain: DMatrix<f64>,
    chol: DMatrix<f64>,
}

type Key = (usize, u64);

fn exact_factor(n: usize, ls: f64) -> Result<Arc<DMatrix<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<DMatrix<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (n, ls.to_bits());
    if let Some(l) = cache.lock().unwrap().get(&key) {
        return Ok(l.clone());
    }
    let l = Arc::new(jittered_cholesky(&cov(n, n, 0, 0, ls))?);
    cache.lock().unwrap().insert(key, l.clone());
    Ok(l)
}

fn block_plan(m: usize, ls: f64) -> Result<Arc<BlockPlan>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<BlockPlan>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (m, ls.to_bits());
    if let Some(p) = cache.lock().unwrap().get(&key) {
        return Ok(p.clone());
    }
    let c = CONDITION_LEN;
    let l_cc = jittered_cholesky(&cov(c, c, 0, 0, ls))?;
    let k_nc = cov(m, c, c, 0, ls);
    // gain = K_nc K_cc^{-1}, via two triangular solves on the transpose.
    let mut gt = k_nc.transpose();
    l_cc.solve_lower_triangular_mut(&mut gt);
    l_cc.transpose().solve_upper_triangular_mut(&mut gt);
    let gain = gt.transpose();
    let cond = cov(m, m, c, c, ls) - &gain * k_nc.transpose();
    let cond = (&cond + cond.transpose()) * 0.5;
    let plan = Arc::new(BlockPlan { gain, chol: jittered_cholesky(&cond)? });
    cache.lock().unwrap().insert(key, plan.clone());
    Ok(plan)
}

/// Draws one sample path of length `n` at indices `0..n`.
pub fn sample_path(n: usize, lengthscale: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normals = |k: usize| -> DVector<f64> {
        DVector::from_iterator(k, (0..k).map(|_| StandardNormal.sample(&mut rng)))
    };
    if n <= EXACT_LIMIT {
        let l = exact_factor(n, lengthscale)?;
        return Ok((&*l * normals(n)).iter().copied().collect());
    }
    let first = exact_factor(BLOCK_LEN, lengthscale)?;
    let mut out: Vec<f64> = (&*first * normals(BLOCK_LEN)).iter().copied().collect();
    while out.len() < n {
        let m = BLOCK_LEN.min(n - out.len());
        let plan = block_plan(m, lengthscale)?;
        let tail = DVector::from_column_slice(&out[out.len() - CONDITION_LEN..]);
        let block = &plan.gain * tail + &plan.chol * normals(m);
        out.extend(block.iter());
    }
    Ok(out)
}
