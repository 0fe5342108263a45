use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("degenerate calibration: pressure divisor {0:e} is ~0")]
    DegenerateCalibration(f64),
    #[error("no {quantity} preimage for target {target} within the raw domain")]
    NoRoot { quantity: &'static str, target: f64 },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("sequence is constant, cannot fill range")]
    ConstantSequence,
    #[error("kernel matrix not positive definite after jitter {0:e}")]
    Factorization(f64),
    #[error("rank-deficient design matrix")]
    RankDeficient,
    #[error("dataset is not a full uniform grid: {0}")]
    NonGrid(String),
    #[error("training diverged at epoch {0}")]
    Divergence(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty model roster")]
    EmptyRoster,
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),
    #[error("duplicate kernel name `{0}`")]
    NameCollision(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Module that raised the error, used in `E:<module>:<code>:<detail>` lines.
    pub fn module(&self) -> &'static str {
        use Error::*;
        match self {
            InvalidCalibration(_) | DegenerateCalibration(_) | NoRoot { .. } => "oracle",
            InvalidSpec(_) | ConstantSequence | Factorization(_) => "datagen",
            RankDeficient | NonGrid(_) | Divergence(_) | InvalidArgument(_) => "surrogates",
            InvalidProgram(_) => "ir",
            LengthMismatch(..) | EmptyRoster => "evaluation",
            UnknownFamily(_) => "cli",
            NameCollision(_) => "codegen",
            Parse(_) | Io(_) | Json(_) => "io",
        }
    }

    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            InvalidCalibration(_) => "invalid_calibration",
            DegenerateCalibration(_) => "degenerate_calibration",
            NoRoot { .. } => "no_root",
            InvalidSpec(_) => "invalid_spec",
            ConstantSequence => "constant_sequence",
            Factorization(_) => "factorization",
            RankDeficient => "rank_deficient",
            NonGrid(_) => "non_grid",
            Divergence(_) => "divergence",
            InvalidArgument(_) => "invalid_argument",
            InvalidProgram(_) => "invalid_program",
            LengthMismatch(..) => "length_mismatch",
            EmptyRoster => "empty_roster",
            UnknownFamily(_) => "unknown_family",
            NameCollision(_) => "name_collision",
            Parse(_) => "parse",
            Io(_) => "io",
            Json(_) => "json",
        }
    }

    /// Single-line machine-parsable rendering.
    pub fn machine_line(&self) -> MachineLine<'_> {
        MachineLine(self)
    }
}

pub struct MachineLine<'a>(&'a Error);

impl fmt::Display for MachineLine<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let detail = self.0.to_string().replace(['\n', '\r'], " ");
        write!(f, "E:{}:{}:{}", self.0.module(), self.0.code(), detail)
    }
}
