//! Squeeze-and-excitation fusion of multi-modal feature vectors, with the
//! full training and evaluation pipeline around it: a minimal verified
//! numeric core, the fusion block, a classification head with a
//! prior-adjusted loss, feature-file ingestion, synthetic data generation,
//! and weighted-F1 evaluation.

pub mod cli;
pub mod data;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod report;

pub use error::{Error, Result};
