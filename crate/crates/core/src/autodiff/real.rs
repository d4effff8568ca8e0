use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::Float;

use crate::scalar::Scalar;

/// Arithmetic carrier for jets: a plain scalar or a tape variable.
///
/// `lift` creates a constant living on the same carrier as `self` (for a tape
/// variable, on the same tape), which is how jets materialise zero
/// derivatives without knowing the concrete carrier.
pub trait Real:
    Copy + Debug + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    type Scalar: Scalar;

    fn value(&self) -> Self::Scalar;
    fn lift(&self, c: Self::Scalar) -> Self;

    fn scale(self, c: Self::Scalar) -> Self {
        self * self.lift(c)
    }

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sigmoid(self) -> Self;
    fn relu(self) -> Self;
    fn powf(self, e: Self::Scalar) -> Self;
}

/// Logistic function without overflow for large negative arguments.
#[inline]
pub(crate) fn logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Real for T {
    type Scalar = T;

    #[inline]
    fn value(&self) -> T {
        *self
    }
    #[inline]
    fn lift(&self, c: T) -> T {
        c
    }
    #[inline]
    fn scale(self, c: T) -> T {
        self * c
    }
    #[inline]
    fn sin(self) -> T {
        Float::sin(self)
    }
    #[inline]
    fn cos(self) -> T {
        Float::cos(self)
    }
    #[inline]
    fn tanh(self) -> T {
        Float::tanh(self)
    }
    #[inline]
    fn exp(self) -> T {
        Float::exp(self)
    }
    #[inline]
    fn ln(self) -> T {
        Float::ln(self)
    }
    #[inline]
    fn sigmoid(self) -> T {
        logistic(self)
    }
    #[inline]
    fn relu(self) -> T {
        if self > T::zero() {
            self
        } else {
            T::zero()
        }
    }
    #[inline]
    fn powf(self, e: T) -> T {
        Float::powf(self, e)
    }
}
