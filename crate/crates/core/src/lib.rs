//! Principle-evolution Bayesian optimization engine.
//!
//! Maintains a posterior over an expandable set of natural-language
//! "principles" — each backed by an exact Gaussian-Process expert over
//! semantic pair features — selects hypotheses by information-directed
//! sampling, and expands the principle space when anomalous observations
//! signal that the current working set cannot explain the evidence.

pub mod anomaly;
pub mod beliefs;
pub mod config;
pub mod engine;
pub mod error;
pub mod generation;
pub mod gp;
pub mod ids;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod semantic;
pub mod trace;
pub mod transport;
pub mod world;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete scalar type the engine, trace, and CLI layers run on.
/// The math modules are generic over [`Scalar`]; this alias pins the
/// precision everywhere a value crosses a serialization boundary.
pub type Real = f64;
