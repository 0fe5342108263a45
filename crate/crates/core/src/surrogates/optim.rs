//! Full-batch Adam with best-so-far early stopping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Window (epochs) over which `min_improvement` is measured.
    pub patience: usize,
    /// Minimum drop of the best normalized RMSE across `patience` epochs.
    pub min_improvement: f64,
}

impl TrainConfig {
    pub fn feed_forward() -> Self {
        Self {
            max_epochs: 10_000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 200,
            min_improvement: 1e-7,
        }
    }

    pub fn sequence() -> Self {
        Self { max_epochs: 20_000, ..Self::feed_forward() }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, cfg: &TrainConfig, lr: f64, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        }
    }
}

/// Step rejections tolerated before training counts as diverged.
const MAX_REJECTIONS: usize = 8;

/// Minimizes a mean-squared loss. `loss_and_grad` returns the loss in
/// scaled units; `to_metric` maps it to the normalized RMSE used by the
/// stopping rule. Leaves the best parameters seen in `params` and returns
/// the number of epochs run.
///
/// A step that lands on a non-finite loss or gradient is undone, the
/// learning rate halved and the moments reset. Non-finite values at the
/// starting point, or more than [`MAX_REJECTIONS`] rejected steps, are a
/// divergence.
pub(crate) fn minimize(
    params: &mut Vec<f64>,
    cfg: &TrainConfig,
    mut loss_and_grad: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    to_metric: impl Fn(f64) -> f64,
) -> Result<usize> {
    let mut adam = Adam::new(params.len());
    let mut best = f64::INFINITY;
    let mut best_params = params.clone();
    let mut history = Vec::with_capacity(cfg.max_epochs.min(1 << 16));
    let mut epochs = 0;
    let mut lr = cfg.learning_rate;
    let mut last_ok = params.clone();
    let mut rejections = 0;
    for epoch in 0..cfg.max_epochs {
        let (loss, grad) = loss_and_grad(params);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            rejections += 1;
            if epoch == 0 || rejections > MAX_REJECTIONS {
                return Err(Error::Divergence(epoch));
            }
            params.clone_from(&last_ok);
            lr *= 0.5;
            adam = Adam::new(params.len());
            continue;
        }
        let metric = to_metric(loss);
        if metric < best {
            best = metric;
            best_params.clone_from(params);
        }
        history.push(best);
        epochs = epoch + 1;
        if epoch >= cfg.patience && history[epoch - cfg.patience] - best < cfg.min_improvement {
            break;
        }
        last_ok.clone_from(params);
        adam.step(cfg, lr, params, &grad);
    }
    *params = best_params;
    Ok(epochs)
}
