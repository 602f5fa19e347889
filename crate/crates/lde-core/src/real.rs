//! Scalar element trait for the tensor engine.
//!
//! Training and inference run in `f32`; the finite-difference verification
//! harness runs the same generic code in `f64`. Transcendentals are routed
//! through `libm` rather than the platform math library, which keeps every
//! result bit-identical across platforms and across std/no_std builds.

use core::fmt::{Debug, Display};
use core::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + PartialOrd
    + PartialEq
    + Debug
    + Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, e: Self) -> Self;
    fn tanh(self) -> Self;
    fn cos(self) -> Self;

    fn abs(self) -> Self;
    fn is_finite(self) -> bool;

    /// Larger of the two operands; ties and comparisons with NaN resolve to `other`.
    fn maxv(self, other: Self) -> Self {
        if self > other {
            self
        } else {
            other
        }
    }

    fn minv(self, other: Self) -> Self {
        if self < other {
            self
        } else {
            other
        }
    }

    fn clamp01(self) -> Self {
        self.maxv(Self::ZERO).minv(Self::ONE)
    }
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        libm::expf(self)
    }
    fn ln(self) -> Self {
        libm::logf(self)
    }
    fn sqrt(self) -> Self {
        libm::sqrtf(self)
    }
    fn powf(self, e: Self) -> Self {
        libm::powf(self, e)
    }
    fn tanh(self) -> Self {
        libm::tanhf(self)
    }
    fn cos(self) -> Self {
        libm::cosf(self)
    }
    fn abs(self) -> Self {
        libm::fabsf(self)
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        libm::exp(self)
    }
    fn ln(self) -> Self {
        libm::log(self)
    }
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    fn powf(self, e: Self) -> Self {
        libm::pow(self, e)
    }
    fn tanh(self) -> Self {
        libm::tanh(self)
    }
    fn cos(self) -> Self {
        libm::cos(self)
    }
    fn abs(self) -> Self {
        libm::fabs(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_and_f64_roundtrip() {
        assert_eq!(f32::from_f64(0.5).to_f64(), 0.5);
        assert_eq!(f64::from_f64(-3.25), -3.25);
    }

    #[test]
    fn maxv_minv_clamp() {
        assert_eq!(2.0f32.maxv(1.0), 2.0);
        assert_eq!(2.0f32.minv(1.0), 1.0);
        assert_eq!(1.5f32.clamp01(), 1.0);
        assert_eq!((-0.5f32).clamp01(), 0.0);
    }
}
