//! Labelled dataset generation: uniform meshes (optionally inverse-refined)
//! and Gaussian-process sequences.

pub mod gp;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{self, CalibrationConstants, Quantity};

pub use gp::{matern52, sample_path};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mesh,
    Sequence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub levels: usize,
    pub inverse_refined: bool,
}

impl MeshSpec {
    pub fn new(levels: usize, inverse_refined: bool) -> Result<Self> {
        let spec = Self { levels, inverse_refined };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidSpec(format!("mesh levels {} < 2", self.levels)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub length: usize,
    /// Kernel lengthscale in units of the virtual sampling period.
    pub lengthscale: f64,
    pub seed: u64,
}

impl SequenceSpec {
    pub const DEFAULT_LENGTHSCALE: f64 = 20.0;

    pub fn new(length: usize, seed: u64) -> Self {
        Self { length, lengthscale: Self::DEFAULT_LENGTHSCALE, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.length < 1 {
            return Err(Error::InvalidSpec("sequence length must be positive".into()));
        }
        if !(self.lengthscale > 0.0) || !self.lengthscale.is_finite() {
            return Err(Error::InvalidSpec(format!("lengthscale {} must be > 0", self.lengthscale)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneratorMeta {
    Mesh(MeshSpec),
    Sequence(SequenceSpec),
}

/// Labelled raw-code inputs with their reference conversions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub quantity: Quantity,
    pub kind: DatasetKind,
    /// One row per sample; `quantity.input_dim()` columns of raw codes.
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub meta: GeneratorMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.quantity.input_dim()
    }

    /// Re-applies the oracle to every row and checks bit-identical labels.
    pub fn check_labels(&self, calib: &CalibrationConstants) -> Result<bool> {
        for (row, &t) in self.inputs.iter().zip(&self.targets) {
            if oracle::reference_output(self.quantity, row, calib)?.to_bits() != t.to_bits() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Rounds inputs to integer codes and relabels them.
    pub fn rounded(&self, calib: &CalibrationConstants) -> Result<Dataset> {
        let inputs: Vec<Vec<f64>> =
            self.inputs.iter().map(|r| r.iter().map(|v| v.round()).collect()).collect();
        let targets = inputs
            .iter()
            .map(|r| oracle::reference_output(self.quantity, r, calib))
            .collect::<Result<_>>()?;
        Ok(Dataset { inputs, targets, ..self.clone() })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.quantity.input_names().join(","));
        out.push_str(",target\n");
        for (row, t) in self.inputs.iter().zip(&self.targets) {
            for v in row {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{t}");
        }
        out
    }

    pub fn sidecar_json(&self) -> String {
        let (seed, spec) = match &self.meta {
            GeneratorMeta::Mesh(_) => (None, &self.meta),
            GeneratorMeta::Sequence(s) => (Some(s.seed), &self.meta),
        };
        let v = serde_json::json!({
            "quantity": self.quantity,
            "kind": self.kind,
            "spec": spec,
            "seed": seed,
        });
        serde_json::to_string_pretty(&v).expect("json value serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.json")), self.sidecar_json())?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Dataset> {
        #[derive(Deserialize)]
        struct Sidecar {
            quantity: Quantity,
            kind: DatasetKind,
            spec: GeneratorMeta,
        }
        let side: Sidecar =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let text = std::fs::read_to_string(dir.join(format!("{stem}.csv")))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))?;
        let cols = header.split(',').count();
        if cols != side.quantity.input_dim() + 1 {
            return Err(Error::Parse(format!("expected {} columns", side.quantity.input_dim() + 1)));
        }
        let (mut inputs, mut targets) = (Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)))?;
            if vals.len() != cols {
                return Err(Error::Parse(format!("line {}: wrong column count", n + 2)));
            }
            targets.push(vals[cols - 1]);
            inputs.push(vals[..cols - 1].to_vec());
        }
        Ok(Dataset { quantity: side.quantity, kind: side.kind, inputs, targets, meta: side.spec })
    }
}

/// `levels` equally spaced nodes on `[lo, hi]`, endpoints exact.
pub fn grid_nodes(lo: f64, hi: f64, levels: usize) -> Vec<f64> {
    let step = (hi - lo) / (levels - 1) as f64;
    (0..levels)
        .map(|k| if k + 1 == levels { hi } else { lo + k as f64 * step })
        .collect()
}

/// Raw inputs whose reference outputs are the given converted-domain values
/// (`values[0]` is temperature, `values[1]` the quantity itself).
fn invert_row(quantity: Quantity, values: &[f64], calib: &CalibrationConstants) -> Result<Vec<f64>> {
    let adc_t = oracle::invert_temperature(values[0], calib)?;
    match quantity {
        Quantity::Temperature => Ok(vec![adc_t]),
        Quantity::Pressure => {
            let t = oracle::convert_temperature(adc_t, calib);
            Ok(vec![adc_t, oracle::invert_pressure(values[1], t.t_fine, calib)?])
        }
        Quantity::Humidity => {
            let t = oracle::convert_temperature(adc_t, calib);
            Ok(vec![adc_t, oracle::invert_humidity(values[1], t.temperature, calib)?])
        }
    }
}

fn label(quantity: Quantity, inputs: &[Vec<f64>], calib: &CalibrationConstants) -> Result<Vec<f64>> {
    inputs.iter().map(|r| oracle::reference_output(quantity, r, calib)).collect()
}

/// Equally spaced mesh. Without refinement the grid covers the full raw
/// code domain; with refinement it is uniform in the converted domain over
/// the operating ranges and mapped back through the inverse routines.
pub fn generate_mesh(quantity: Quantity, spec: MeshSpec, calib: &CalibrationConstants) -> Result<Dataset> {
    spec.validate()?;
    let axes: Vec<Vec<f64>> = if spec.inverse_refined {
        let t = Quantity::Temperature.range();
        let mut axes = vec![grid_nodes(t.min, t.max, spec.levels)];
        if quantity != Quantity::Temperature {
            let q = quantity.range();
            axes.push(grid_nodes(q.min, q.max, spec.levels));
        }
        axes
    } else {
        quantity.input_domains().iter().map(|&(lo, hi)| grid_nodes(lo, hi, spec.levels)).collect()
    };

    let points: Vec<Vec<f64>> = match axes.as_slice() {
        [a] => a.iter().map(|&x| vec![x]).collect(),
        [a, b] => a.iter().flat_map(|&x| b.iter().map(move |&y| vec![x, y])).collect(),
        _ => unreachable!("quantities have one or two inputs"),
    };
    let inputs = if spec.inverse_refined {
        points.iter().map(|p| invert_row(quantity, p, calib)).collect::<Result<Vec<_>>>()?
    } else {
        points
    };
    let targets = label(quantity, &inputs, calib)?;
    Ok(Dataset { quantity, kind: DatasetKind::Mesh, inputs, targets, meta: GeneratorMeta::Mesh(spec) })
}

pub fn sample_gp_sequence(spec: &SequenceSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    gp::sample_path(spec.length, spec.lengthscale, spec.seed)
}

/// Affine map of `seq` onto `[target_min, target_max]`; the extreme
/// elements land exactly on the endpoints.
pub fn fill_range_transform(seq: &[f64], target_min: f64, target_max: f64) -> Result<Vec<f64>> {
    let (lo, hi) = seq
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return Err(Error::ConstantSequence);
    }
    let span = hi - lo;
    let out_span = target_max - target_min;
    Ok(seq
        .iter()
        .map(|&v| {
            if v == hi {
                target_max
            } else {
                (target_min + (v - lo) / span * out_span).min(target_max)
            }
        })
        .collect())
}

/// Converted-domain GP sequences (one independent draw per input, seeded
/// `seed + i`) inverted to raw codes and relabelled by the oracle.
pub fn generate_sequence_dataset(
    quantity: Quantity,
    spec: SequenceSpec,
    calib: &CalibrationConstants,
) -> Result<Dataset> {
    spec.validate()?;
    let mut columns = Vec::with_capacity(quantity.input_dim());
    for i in 0..quantity.input_dim() {
        let sub = SequenceSpec { seed: spec.seed.wrapping_add(i as u64), ..spec };
        let range = if i == 0 { Quantity::Temperature.range() } else { quantity.range() };
        let raw = if spec.length == 1 {
            // A single point cannot be range-filled; place it mid-range.
            vec![0.5 * (range.min + range.max)]
        } else {
            fill_range_transform(&sample_gp_sequence(&sub)?, range.min, range.max)?
        };
        columns.push(raw);
    }
    let inputs = (0..spec.length)
        .map(|k| {
            let values: Vec<f64> = columns.iter().map(|c| c[k]).collect();
            invert_row(quantity, &values, calib)
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = label(quantity, &inputs, calib)?;
    Ok(Dataset {
        quantity,
        kind: DatasetKind::Sequence,
        inputs,
        targets,
        meta: GeneratorMeta::Sequence(spec),
    })
}
