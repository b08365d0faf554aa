//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `sign(x) * |x|^p`, zero at zero for any `p > 0`.
    #[inline]
    fn signed_pow(self, p: Self) -> Self {
        if self == Self::zero() {
            Self::zero()
        } else if self > Self::zero() {
            self.powf(p)
        } else {
            -(-self).powf(p)
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_pow_is_odd_and_nan_free() {
        assert_eq!(0.0f64.signed_pow(0.5), 0.0);
        assert_eq!((-4.0f64).signed_pow(0.5), -2.0);
        assert_eq!(4.0f64.signed_pow(0.5), 2.0);
        assert_eq!((-2.0f32).signed_pow(3.0), -8.0);
    }
}
