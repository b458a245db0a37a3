//! Scalar abstraction shared by the analytic model and the optimizers.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the analytic code is generic over: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for types that cannot represent
    /// finite doubles, which no implementor does.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("scalar type must represent f64 literals")
    }

    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("scalar type must represent integer counts")
    }

    /// Lossless widening used for cache keys and for the simulator.
    #[inline]
    fn widen(self) -> f64 {
        self.to_f64().expect("scalar type must widen to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
