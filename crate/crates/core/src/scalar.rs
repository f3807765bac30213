//! Scalar abstraction for the numerical modules.
//!
//! Everything that does linear algebra is generic over [`Real`], which is
//! implemented for `f32` and `f64`. Probabilities, degree tables and
//! Monte-Carlo bookkeeping stay in `f64` regardless of the matrix scalar.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// A real floating-point scalar usable in dense matrix code.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` literal or parameter into this scalar.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable in every Real")
    }

    /// Converts back to `f64` for statistics and output.
    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("Real scalars convert to f64")
    }

    /// Converts a count.
    #[inline]
    fn of_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize is representable in every Real")
    }

    /// `true` when the value is neither NaN nor infinite.
    #[inline]
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}
