//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point scalar the stack is generic over: `f32` or `f64`.
///
/// Experiments default to `f64` (finite-difference gradient checks are not
/// reliable in 32-bit). Conversions from literals go through [`Scalar::from_f`]
/// so generic code stays readable.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }

    fn to_f(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
