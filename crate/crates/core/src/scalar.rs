//! Scalar abstraction over the two float widths used by the crate.
//!
//! Training runs in `f32`; gradient checking instantiates the same code at
//! `f64`. Everything numeric is generic over [`Scalar`] so the two paths
//! share one implementation.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point element type: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssignOps
    + ScalarOperand
    + LinalgScalar
    + Sum
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant or intermediate into this scalar type.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to scalar")
    }

    /// Widens to `f64` for accumulation and reporting.
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}
