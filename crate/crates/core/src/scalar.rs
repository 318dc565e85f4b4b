use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Real scalar used by the geometric and numerical kernels: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an f64 literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
