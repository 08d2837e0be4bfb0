//! Scalar abstractions.
//!
//! Grid arithmetic and the pathwise integral run over any [`Scalar`], which
//! includes exact rationals. Anything that takes square roots or draws
//! random numbers needs a [`Real`] (`f32` or `f64`).

use std::fmt::{Debug, Display};
use std::ops::Neg;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Ordered field element usable as a grid value.
pub trait Scalar:
    Copy + PartialOrd + Num + Neg<Output = Self> + FromPrimitive + Debug + Display + Send + Sync + 'static
{
    /// `false` for NaN and infinities. Exact types are always finite.
    fn is_finite_value(self) -> bool;

    fn magnitude(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    fn larger(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Lossy conversion used for reporting.
    fn approx_f64(self) -> f64;

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

/// Floating-point scalar.
pub trait Real: Scalar + Float + ToPrimitive {
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }
}

macro_rules! impl_float_scalar {
    ($f:ty) => {
        impl Scalar for $f {
            fn is_finite_value(self) -> bool {
                self.is_finite()
            }

            fn approx_f64(self) -> f64 {
                self as f64
            }
        }

        impl Real for $f {}
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

macro_rules! impl_ratio_scalar {
    ($i:ty) => {
        impl Scalar for Ratio<$i> {
            fn is_finite_value(self) -> bool {
                true
            }

            fn approx_f64(self) -> f64 {
                self.to_f64().unwrap_or(f64::NAN)
            }
        }
    };
}

impl_ratio_scalar!(i32);
impl_ratio_scalar!(i64);
impl_ratio_scalar!(i128);

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn magnitude_and_larger() {
        assert_eq!((-2.5f64).magnitude(), 2.5);
        assert_eq!(Rational64::new(-1, 3).magnitude(), Rational64::new(1, 3));
        assert_eq!(1.0f32.larger(2.0), 2.0);
        assert!(!f64::NAN.is_finite_value());
        assert!(Rational64::new(7, 2).is_finite_value());
    }

    #[test]
    fn rational_reporting() {
        assert_eq!(Rational64::new(1, 4).approx_f64(), 0.25);
        assert_eq!(f64::lit(0.5), 0.5);
    }
}
