pub mod error;
pub mod guidance;
pub mod harness;
pub mod nonlinear;
pub mod operators;
pub mod oracle;
pub mod priors;
pub mod sampler;
pub mod schedule;

pub use error::{Error, Result};

/// Dense signal/measurement vector.
pub type Vector = nalgebra::DVector<f64>;
