//! Learned low-overhead conversion routines for the BME680 environmental
//! sensor: reference oracle, dataset synthesis, surrogate families, an
//! instruction-cost IR, Pareto evaluation and C kernel emission.

pub mod codegen;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod ir;
pub mod model;
pub mod oracle;
pub mod sequence;
pub mod surrogates;

pub use error::{Error, Result};
pub use oracle::{CalibrationConstants, Quantity};
