//! Normalized RMS error, the multi-dataset evaluation protocol and Pareto
//! frontier extraction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datagen::{generate_sequence_dataset, Dataset, SequenceSpec};
use crate::error::{Error, Result};
use crate::ir::{estimate_memory, CostTable};
use crate::model::{train, Family, TrainOptions, TrainedModel};
use crate::oracle::{CalibrationConstants, OperatingRange, Quantity};

/// `sqrt(mean(((pred - truth) · 100 / (max - min))²))`
pub fn normalized_rmse(pred: &[f64], truth: &[f64], range: OperatingRange) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let k = 100.0 / range.span();
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| ((p - t) * k).powi(2)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub sequence_length: usize,
    pub dataset_count: usize,
    /// Independently trained instances of seeded families.
    pub seeds: usize,
    pub master_seed: u64,
    #[serde(skip)]
    pub cost_table: CostTable,
    pub train: TrainOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sequence_length: 1000,
            dataset_count: 10,
            seeds: 5,
            master_seed: 0,
            cost_table: CostTable::default(),
            train: TrainOptions::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sequence_length == 0 || self.dataset_count == 0 || self.seeds == 0 {
            return Err(Error::InvalidArgument("sequence length, dataset count and seeds must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed of the `k`-th trained instance.
    pub fn train_seed(&self, k: usize) -> u64 {
        train_seed(self.master_seed, k)
    }

    /// Seed of the `k`-th test dataset.
    pub fn test_seed(&self, k: usize) -> u64 {
        test_seed(self.master_seed, k)
    }

    /// Instances trained for a family (1 for deterministic families).
    pub fn instances(&self, family: &Family) -> usize {
        if family.is_seeded() {
            self.seeds
        } else {
            1
        }
    }
}

// Per-index stride of 16 leaves room for the per-dimension sub-seeds
// (`seed + i`) without training and test streams ever meeting.
const SEED_STRIDE: u64 = 16;

pub fn train_seed(master: u64, k: usize) -> u64 {
    master.wrapping_add(1000).wrapping_add(SEED_STRIDE * k as u64)
}

pub fn test_seed(master: u64, k: usize) -> u64 {
    master.wrapping_add(2000).wrapping_add(SEED_STRIDE * k as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Family id, e.g. `lut20`.
    pub model: String,
    pub label: String,
    pub quantity: Quantity,
    /// Mean over datasets × instances.
    pub norm_rmse: f64,
    /// Standard deviation over datasets × instances.
    pub norm_rmse_std: f64,
    pub rmse_units: f64,
    pub cost: f64,
    pub flash_bytes: u64,
    pub ram_bytes: u64,
    pub instances: usize,
    /// Per test dataset, averaged over instances.
    pub per_dataset: Vec<f64>,
    /// Every instance passed the stability probe.
    pub stable: bool,
}

/// Test sequences shared by every model of one quantity.
pub fn test_datasets(quantity: Quantity, calib: &CalibrationConstants, cfg: &EvalConfig) -> Result<Vec<Dataset>> {
    (0..cfg.dataset_count)
        .map(|k| generate_sequence_dataset(quantity, SequenceSpec::new(cfg.sequence_length, cfg.test_seed(k)), calib))
        .collect()
}

/// Scores trained instances of one family on the test datasets; cost and
/// memory come from the first instance's lowered program.
pub fn evaluate_instances(models: &[TrainedModel], tests: &[Dataset], cost_table: &CostTable) -> Result<EvalRecord> {
    let first = models.first().ok_or_else(|| Error::InvalidArgument("no model instances".into()))?;
    let quantity = first.quantity;
    let range = quantity.range();
    let mut all = Vec::with_capacity(models.len() * tests.len());
    let mut per_dataset = vec![0.0; tests.len()];
    for m in models {
        for (k, d) in tests.iter().enumerate() {
            let pred = m.predict_sequence(&d.inputs)?;
            let e = normalized_rmse(&pred, &d.targets, range)?;
            per_dataset[k] += e / models.len() as f64;
            all.push(e);
        }
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let std = (all.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    let prog = first.lower()?;
    let mem = estimate_memory(&prog);
    Ok(EvalRecord {
        model: first.family.to_string(),
        label: first.family.label(quantity),
        quantity,
        norm_rmse: mean,
        norm_rmse_std: std,
        rmse_units: mean * range.span() / 100.0,
        cost: cost_table.cost(&prog),
        flash_bytes: mem.flash_bytes,
        ram_bytes: mem.ram_bytes,
        instances: models.len(),
        per_dataset,
        stable: models.iter().all(|m| m.stable()),
    })
}

/// Trains the configured number of instances of `family` and evaluates them.
pub fn evaluate_model(
    family: &Family,
    quantity: Quantity,
    calib: &CalibrationConstants,
    cfg: &EvalConfig,
    tests: &[Dataset],
) -> Result<EvalRecord> {
    let models = (0..cfg.instances(family))
        .map(|k| train(family, quantity, calib, cfg.train_seed(k), &cfg.train))
        .collect::<Result<Vec<_>>>()?;
    evaluate_instances(&models, tests, &cfg.cost_table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub model: String,
    pub quantity: Quantity,
    pub norm_rmse: f64,
    pub cost: f64,
    pub dominated: bool,
}

/// Frontier flags for `(error, cost)` pairs, both minimized: `true` when
/// no other point is at least as good in both and strictly better in one.
/// Equal points are all kept.
pub fn frontier_flags(points: &[(f64, f64)]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0).then(points[a].1.total_cmp(&points[b].1)));
    let mut on = vec![false; points.len()];
    let mut best_prev = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let err = points[order[i]].0;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == err {
            j += 1;
        }
        let gmin = order[i..j].iter().map(|&k| points[k].1).fold(f64::INFINITY, f64::min);
        for &idx in &order[i..j] {
            let c = points[idx].1;
            on[idx] = c < best_prev && c <= gmin;
        }
        best_prev = best_prev.min(gmin);
        i = j;
    }
    on
}

/// Marks dominated records; each quantity forms its own frontier.
pub fn pareto_frontier(records: &[EvalRecord]) -> Vec<ParetoPoint> {
    let mut out: Vec<ParetoPoint> = records
        .iter()
        .map(|r| ParetoPoint {
            model: r.model.clone(),
            quantity: r.quantity,
            norm_rmse: r.norm_rmse,
            cost: r.cost,
            dominated: true,
        })
        .collect();
    for q in Quantity::ALL {
        let idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].quantity == q).collect();
        let pts: Vec<(f64, f64)> = idx.iter().map(|&i| (records[i].norm_rmse, records[i].cost)).collect();
        for (&i, on) in idx.iter().zip(frontier_flags(&pts)) {
            out[i].dominated = !on;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub model: String,
    pub quantity: Quantity,
    /// `E:<module>:<code>:<detail>`
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub master_seed: u64,
    pub train_seeds: Vec<u64>,
    pub test_seeds: Vec<u64>,
    pub records: Vec<EvalRecord>,
    pub pareto: Vec<ParetoPoint>,
    pub failures: Vec<Failure>,
}

/// Trains and evaluates every `(quantity, family)` pair. Individual
/// failures are collected, not fatal; failed models stay off the frontier.
pub fn run_suite(
    plan: &[(Quantity, Vec<Family>)],
    calib: &CalibrationConstants,
    cfg: &EvalConfig,
    mut progress: impl FnMut(&str),
) -> Result<SuiteReport> {
    cfg.validate()?;
    if plan.iter().all(|(_, fams)| fams.is_empty()) {
        return Err(Error::EmptyRoster);
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (quantity, families) in plan {
        if families.is_empty() {
            continue;
        }
        let tests = test_datasets(*quantity, calib, cfg)?;
        for fam in families {
            match evaluate_model(fam, *quantity, calib, cfg, &tests) {
                Ok(r) => {
                    progress(&format!("{} {}: norm_rmse {:.3e} cost {}", quantity, fam, r.norm_rmse, r.cost));
                    records.push(r);
                }
                Err(e) => {
                    progress(&format!("{} {}: failed: {}", quantity, fam, e.machine_line()));
                    failures.push(Failure { model: fam.to_string(), quantity: *quantity, error: e.machine_line().to_string() });
                }
            }
        }
    }
    Ok(SuiteReport::new(cfg, records, failures))
}

impl SuiteReport {
    /// Sorts records by quantity then model id and computes the frontier.
    pub fn new(cfg: &EvalConfig, mut records: Vec<EvalRecord>, mut failures: Vec<Failure>) -> Self {
        records.sort_by(|a, b| a.quantity.cmp(&b.quantity).then_with(|| a.model.cmp(&b.model)));
        failures.sort_by(|a, b| a.quantity.cmp(&b.quantity).then_with(|| a.model.cmp(&b.model)));
        let pareto = pareto_frontier(&records);
        Self {
            master_seed: cfg.master_seed,
            train_seeds: (0..cfg.seeds).map(|k| cfg.train_seed(k)).collect(),
            test_seeds: (0..cfg.dataset_count).map(|k| cfg.test_seed(k)).collect(),
            records,
            pareto,
            failures,
        }
    }

    pub fn frontier(&self, quantity: Quantity) -> Vec<&str> {
        self.pareto
            .iter()
            .filter(|p| p.quantity == quantity && !p.dominated)
            .map(|p| p.model.as_str())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,quantity,norm_rmse,rmse_units,cost,flash_bytes,ram_bytes,pareto\n");
        for (r, p) in self.records.iter().zip(&self.pareto) {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.model, r.quantity, r.norm_rmse, r.rmse_units, r.cost, r.flash_bytes, r.ram_bytes, !p.dominated
            )
            .unwrap();
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// `x = cost`, `y = norm_rmse`, one row per record.
    pub fn plot_data(&self) -> String {
        let mut s = String::from("quantity,label,cost,norm_rmse,pareto\n");
        for (r, p) in self.records.iter().zip(&self.pareto) {
            writeln!(s, "{},{},{},{},{}", r.quantity, r.label, r.cost, r.norm_rmse, !p.dominated).unwrap();
        }
        s
    }
}
