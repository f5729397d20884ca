//! Numeric traits the generic parts of the crate are written against.
//!
//! Ratios, IoU and classification metrics only need field arithmetic, so they
//! accept [`Field`] and work with `f32`, `f64` or an exact `Ratio<i64>`.
//! Entropy and Q-learning need logarithms or `max`, so they require [`Real`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, NumCast, ToPrimitive};

/// Field-like scalar: exact rationals and floats.
pub trait Field: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync {
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("value representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Field for T where T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync {}

/// Floating-point scalar (f32 or f64).
pub trait Real: Field + Float + NumCast + Default + 'static {}

impl Real for f32 {}
impl Real for f64 {}

/// Largest of two partially ordered values; the first wins on ties or NaN.
pub(crate) fn max_of<T: PartialOrd + Copy>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

pub(crate) fn clamp_unit<T: Field>(v: T) -> T {
    if v < T::zero() {
        T::zero()
    } else if v > T::one() {
        T::one()
    } else {
        v
    }
}
