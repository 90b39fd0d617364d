//! Scalar abstraction shared by the numeric kernels.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from an `f64` constant.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("count representable in scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
