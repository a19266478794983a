//! Dense linear algebra, reverse-mode differentiation, the Adam optimizer,
//! and a finite-difference gradient checker — the numeric substrate for the
//! fixed fusion architecture.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod params;
pub mod scalar;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use matrix::{affine, Matrix};
pub use params::{ParamId, ParamSet, Parameter};
pub use scalar::{Precision, Scalar};
pub use tape::{Tape, VarId};
