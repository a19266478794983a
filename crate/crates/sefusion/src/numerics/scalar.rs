//! Floating-point abstraction so the whole pipeline runs in either f32
//! (training) or f64 (gradient verification).

use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Which scalar width a computation uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Precision::F32 => write!(f, "f32"),
            Precision::F64 => write!(f, "f64"),
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}` (expected f32 or f64)")),
        }
    }
}

/// The arithmetic surface the numeric kernels need, implemented by f32 and f64.
pub trait Scalar:
    Copy
    + PartialOrd
    + PartialEq
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    const ZERO: Self;
    const ONE: Self;
    /// Largest representable value strictly below one. Sigmoid outputs are
    /// clamped here so they stay in the open interval even when exp saturates.
    const BELOW_ONE: Self;
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn is_finite(self) -> bool;
    /// Smallest positive normal value; the sigmoid's lower clamp.
    fn min_positive() -> Self;
    fn max(self, other: Self) -> Self;
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const BELOW_ONE: Self = 1.0 - f32::EPSILON / 2.0;
    const PRECISION: Precision = Precision::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        f32::exp(self)
    }
    fn ln(self) -> Self {
        f32::ln(self)
    }
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    fn abs(self) -> Self {
        f32::abs(self)
    }
    fn powi(self, n: i32) -> Self {
        f32::powi(self, n)
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
    fn min_positive() -> Self {
        f32::MIN_POSITIVE
    }
    fn max(self, other: Self) -> Self {
        f32::max(self, other)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const BELOW_ONE: Self = 1.0 - f64::EPSILON / 2.0;
    const PRECISION: Precision = Precision::F64;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn min_positive() -> Self {
        f64::MIN_POSITIVE
    }
    fn max(self, other: Self) -> Self {
        f64::max(self, other)
    }
}
