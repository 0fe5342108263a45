//! Model families, trained-model files and the training dispatcher.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{generate_mesh, generate_sequence_dataset, Dataset, MeshSpec, SequenceSpec};
use crate::error::{Error, Result};
use crate::ir::{lower_reference, Activation, IrProgram};
use crate::oracle::{self, CalibrationConstants, Quantity};
use crate::sequence::{train_arma, train_cell, ArmaModel, CellVariant, RecurrentCell};
use crate::surrogates::{
    build_lut, fit_gp, fit_linear, fit_quadratic, train_mlp, GpConfig, GpModel, LinearModel, LutModel, MlpModel,
    QuadraticModel, TrainConfig,
};

/// A model family with its structural hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Family {
    /// The reference routine itself.
    Original,
    Linear,
    Quadratic,
    /// Lookup table with this many levels per input.
    Lut(usize),
    /// Gaussian process on a mesh with this many levels per input.
    Gp(usize),
    Mlp(Vec<usize>),
    Arma { p: usize, q: usize },
    Cell { variant: CellVariant, activation: Activation, gate: Activation },
}

impl Family {
    /// The figure-key roster; sequence families only when asked.
    pub fn roster(with_sequence: bool) -> Vec<Family> {
        let mut v = vec![
            Family::Original,
            Family::Linear,
            Family::Quadratic,
            Family::Lut(20),
            Family::Lut(10),
            Family::Lut(3),
            Family::Gp(3),
            Family::Gp(2),
            Family::Mlp(vec![3, 3, 1]),
            Family::Mlp(vec![3, 1]),
            Family::Mlp(vec![1, 1]),
            Family::Mlp(vec![1]),
        ];
        if with_sequence {
            v.extend(Self::sequence_roster());
        }
        v
    }

    pub fn sequence_roster() -> Vec<Family> {
        use Activation::*;
        let cell = |variant, activation, gate| Family::Cell { variant, activation, gate };
        vec![
            Family::Arma { p: 1, q: 1 },
            Family::Arma { p: 2, q: 1 },
            Family::Arma { p: 3, q: 1 },
            Family::Arma { p: 3, q: 2 },
            cell(CellVariant::Gru, Tanh, Sigmoid),
            cell(CellVariant::Gru, Relu, Sigmoid),
            cell(CellVariant::Gru, Relu, Softsign),
            cell(CellVariant::HalfGru, Relu, Softsign),
            cell(CellVariant::SimpleRnn, Tanh, Sigmoid),
            cell(CellVariant::SimpleRnn, Relu, Sigmoid),
        ]
    }

    /// Default roster for a quantity: sequence families for temperature only.
    pub fn default_roster(quantity: Quantity) -> Vec<Family> {
        Self::roster(quantity == Quantity::Temperature)
    }

    pub fn is_sequence(&self) -> bool {
        matches!(self, Family::Arma { .. } | Family::Cell { .. })
    }

    /// Families whose training depends on a random seed.
    pub fn is_seeded(&self) -> bool {
        matches!(self, Family::Mlp(_)) || self.is_sequence()
    }

    /// Human-readable label as used in plots; table and GP sizes count
    /// total entries for the given quantity.
    pub fn label(&self, quantity: Quantity) -> String {
        let total = |levels: usize| levels.pow(quantity.input_dim() as u32);
        let act = |a: Activation| match a {
            Activation::Relu => "RELU".to_string(),
            other => other.name().to_string(),
        };
        match self {
            Family::Original => "Original".into(),
            Family::Linear => "Linear Regression".into(),
            Family::Quadratic => "Quadratic Regression".into(),
            Family::Lut(l) => format!("Linear Interpolation LUT {}", total(*l)),
            Family::Gp(l) => format!("Gaussian Process {}", total(*l)),
            Family::Mlp(layers) => {
                format!("Neural Network {}", layers.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("-"))
            }
            Family::Arma { p, q } => format!("AR {p} MA {q}"),
            Family::Cell { variant, activation, gate } => match variant {
                CellVariant::Gru => format!("GRU 1 {} {}", act(*activation), act(*gate)),
                CellVariant::HalfGru => format!("Half GRU 1 {} {}", act(*activation), act(*gate)),
                CellVariant::SimpleRnn => format!("Simple RNN 1 {}", act(*activation)),
            },
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Original => write!(f, "original"),
            Family::Linear => write!(f, "linear"),
            Family::Quadratic => write!(f, "quadratic"),
            Family::Lut(l) => write!(f, "lut{l}"),
            Family::Gp(l) => write!(f, "gp{l}"),
            Family::Mlp(layers) => {
                write!(f, "mlp")?;
                for n in layers {
                    write!(f, "-{n}")?;
                }
                Ok(())
            }
            Family::Arma { p, q } => write!(f, "arma-{p}-{q}"),
            Family::Cell { variant, activation, gate } => match variant {
                CellVariant::SimpleRnn => write!(f, "rnn-{}", activation.name()),
                CellVariant::Gru => write!(f, "gru-{}-{}", activation.name(), gate.name()),
                CellVariant::HalfGru => write!(f, "half-gru-{}-{}", activation.name(), gate.name()),
            },
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownFamily(s.to_string());
        let num = |t: &str| t.parse::<usize>().map_err(|_| unknown());
        let act = |t: &str, allowed: &[Activation]| {
            Activation::from_name(t).filter(|a| allowed.contains(a)).ok_or_else(unknown)
        };
        use Activation::*;
        let fam = match s {
            "original" => Family::Original,
            "linear" => Family::Linear,
            "quadratic" => Family::Quadratic,
            _ => {
                if let Some(l) = s.strip_prefix("lut") {
                    Family::Lut(num(l)?)
                } else if let Some(l) = s.strip_prefix("gp") {
                    Family::Gp(num(l)?)
                } else if let Some(rest) = s.strip_prefix("mlp-") {
                    Family::Mlp(rest.split('-').map(num).collect::<Result<_>>()?)
                } else if let Some(rest) = s.strip_prefix("arma-") {
                    match rest.split('-').collect::<Vec<_>>().as_slice() {
                        [p, q] => Family::Arma { p: num(p)?, q: num(q)? },
                        _ => return Err(unknown()),
                    }
                } else if let Some(rest) = s.strip_prefix("rnn-") {
                    Family::Cell { variant: CellVariant::SimpleRnn, activation: act(rest, &[Tanh, Relu])?, gate: Sigmoid }
                } else {
                    let (variant, rest) = if let Some(r) = s.strip_prefix("half-gru-") {
                        (CellVariant::HalfGru, r)
                    } else if let Some(r) = s.strip_prefix("gru-") {
                        (CellVariant::Gru, r)
                    } else {
                        return Err(unknown());
                    };
                    match rest.split('-').collect::<Vec<_>>().as_slice() {
                        [a, g] => Family::Cell {
                            variant,
                            activation: act(a, &[Tanh, Relu])?,
                            gate: act(g, &[Sigmoid, Softsign])?,
                        },
                        _ => return Err(unknown()),
                    }
                }
            }
        };
        // Structural sanity: levels >= 2, GP levels 2..=3, layers end in 1.
        let ok = match &fam {
            Family::Lut(l) => *l >= 2,
            Family::Gp(l) => (2..=3).contains(l),
            Family::Mlp(layers) => layers.last() == Some(&1) && !layers.contains(&0),
            Family::Arma { q, .. } => *q >= 1,
            _ => true,
        };
        if ok {
            Ok(fam)
        } else {
            Err(unknown())
        }
    }
}

impl TryFrom<String> for Family {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Family> for String {
    fn from(f: Family) -> String {
        f.to_string()
    }
}

/// Training-time knobs shared by every family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    /// Levels of the inverse-refined mesh used by regression and MLPs.
    pub mesh_levels: usize,
    pub sequence_length: usize,
    pub feed_forward: TrainConfig,
    pub sequence: TrainConfig,
    pub gp: GpConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            mesh_levels: 20,
            sequence_length: 5000,
            feed_forward: TrainConfig::feed_forward(),
            sequence: TrainConfig::sequence(),
            gp: GpConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Original { calibration: CalibrationConstants },
    Linear(LinearModel),
    Quadratic(QuadraticModel),
    Lut(LutModel),
    Gp(GpModel),
    Mlp(MlpModel),
    Arma(ArmaModel),
    Cell(RecurrentCell),
}

/// A trained model as stored in a model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub family: Family,
    pub quantity: Quantity,
    pub seed: u64,
    /// Rows in the training dataset.
    pub train_rows: usize,
    pub model: ModelBody,
}

/// The dataset a family is trained on.
pub fn training_data(
    family: &Family,
    quantity: Quantity,
    calib: &CalibrationConstants,
    seed: u64,
    opts: &TrainOptions,
) -> Result<Option<Dataset>> {
    let mesh = |levels, refined| generate_mesh(quantity, MeshSpec::new(levels, refined)?, calib).map(Some);
    match family {
        Family::Original => Ok(None),
        Family::Linear | Family::Quadratic | Family::Mlp(_) => mesh(opts.mesh_levels, true),
        Family::Lut(l) => mesh(*l, false),
        Family::Gp(l) => mesh(*l, true),
        Family::Arma { .. } | Family::Cell { .. } => {
            generate_sequence_dataset(quantity, SequenceSpec::new(opts.sequence_length, seed), calib).map(Some)
        }
    }
}

/// Fits `family` on `data` (ignored for the reference routine).
pub fn fit(
    family: &Family,
    quantity: Quantity,
    data: Option<&Dataset>,
    calib: &CalibrationConstants,
    seed: u64,
    opts: &TrainOptions,
) -> Result<TrainedModel> {
    let need = || data.ok_or_else(|| Error::InvalidArgument(format!("{family} needs training data")));
    if let Some(d) = data {
        if d.quantity != quantity {
            return Err(Error::InvalidArgument(format!("dataset is for {}, not {quantity}", d.quantity)));
        }
    }
    let model = match family {
        Family::Original => ModelBody::Original { calibration: calib.clone() },
        Family::Linear => ModelBody::Linear(fit_linear(need()?)?),
        Family::Quadratic => ModelBody::Quadratic(fit_quadratic(need()?)?),
        Family::Lut(_) => ModelBody::Lut(build_lut(need()?)?),
        Family::Gp(l) => ModelBody::Gp(fit_gp(need()?, *l, &opts.gp)?),
        Family::Mlp(layers) => ModelBody::Mlp(train_mlp(need()?, layers, seed, &opts.feed_forward)?),
        Family::Arma { p, q } => ModelBody::Arma(train_arma(need()?, *p, *q, seed, &opts.sequence)?),
        Family::Cell { variant, activation, gate } => {
            ModelBody::Cell(train_cell(need()?, *variant, *activation, *gate, seed, &opts.sequence)?)
        }
    };
    Ok(TrainedModel { family: family.clone(), quantity, seed, train_rows: data.map_or(0, |d| d.len()), model })
}

/// Generates the family's training data and fits it.
pub fn train(
    family: &Family,
    quantity: Quantity,
    calib: &CalibrationConstants,
    seed: u64,
    opts: &TrainOptions,
) -> Result<TrainedModel> {
    let data = training_data(family, quantity, calib, seed, opts)?;
    fit(family, quantity, data.as_ref(), calib, seed, opts)
}

impl TrainedModel {
    pub fn is_stateful(&self) -> bool {
        matches!(self.model, ModelBody::Arma(_) | ModelBody::Cell(_))
    }

    /// Native predictions over a sequence of raw input rows. Stateful models
    /// start from zero state at the first row.
    pub fn predict_sequence(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let point = |f: &dyn Fn(&[f64]) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
        Ok(match &self.model {
            ModelBody::Original { calibration } => rows
                .iter()
                .map(|r| oracle::reference_output(self.quantity, r, calibration))
                .collect::<Result<_>>()?,
            ModelBody::Linear(m) => point(&|x| m.predict(x)),
            ModelBody::Quadratic(m) => point(&|x| m.predict(x)),
            ModelBody::Lut(m) => point(&|x| m.predict(x)),
            ModelBody::Gp(m) => point(&|x| m.predict(x)),
            ModelBody::Mlp(m) => point(&|x| m.predict(x)),
            ModelBody::Arma(m) => m.predict_sequence(rows),
            ModelBody::Cell(m) => m.predict_sequence(rows),
        })
    }

    pub fn lower(&self) -> Result<IrProgram> {
        match &self.model {
            ModelBody::Original { calibration } => lower_reference(self.quantity, calibration),
            ModelBody::Linear(m) => m.lower(),
            ModelBody::Quadratic(m) => m.lower(),
            ModelBody::Lut(m) => m.lower(),
            ModelBody::Gp(m) => m.lower(),
            ModelBody::Mlp(m) => m.lower(),
            ModelBody::Arma(m) => m.lower(),
            ModelBody::Cell(m) => m.lower(),
        }
    }

    /// Stability-probe outcome for stateful models; always true otherwise.
    pub fn stable(&self) -> bool {
        match &self.model {
            ModelBody::Arma(m) => m.stable,
            ModelBody::Cell(m) => m.stable,
            _ => true,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
