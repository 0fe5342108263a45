//! Pointwise function-approximation surrogates.

pub mod gp;
pub mod linear;
pub mod lut;
pub mod mlp;
pub mod optim;
pub mod scaler;

pub use gp::{fit_gp, GpConfig, GpModel};
pub use linear::{fit_linear, fit_quadratic, LinearModel, QuadraticModel};
pub use lut::{build_lut, LutModel};
pub use mlp::{train_mlp, MlpModel};
pub use optim::TrainConfig;
pub use scaler::MinMax;
