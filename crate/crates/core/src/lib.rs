//! Tunability of machine-learning hyperparameters.
//!
//! From a log of hyperparameter experiments this crate fits per-dataset
//! surrogate models of the risk, then derives optimal defaults, tunability
//! of algorithms, single parameters and parameter pairs, joint gains and
//! data-driven tuning ranges.

pub mod error;
pub mod hyperspace;
pub mod io;
pub mod matrix;
pub mod metadata;
pub mod metrics;
pub mod pipeline;
pub mod ranges;
pub mod report;
pub mod rng;
pub mod surface;
pub mod surrogate;
pub mod tree;
pub mod tunability;

pub use error::{Error, Result};
