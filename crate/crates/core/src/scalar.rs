use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar used throughout the numerical modules: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; panics only if the value is not representable at all.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("scalar conversion")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("scalar conversion")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar conversion")
    }

    fn erf(self) -> Self;

    /// Standard normal CDF.
    fn norm_cdf(self) -> Self {
        let half = Self::of(0.5);
        half * (Self::one() + (self / Self::SQRT_2()).erf())
    }

    /// Standard normal density.
    fn norm_pdf(self) -> Self {
        let two_pi = Self::PI() + Self::PI();
        (-(self * self) * Self::of(0.5)).exp() / two_pi.sqrt()
    }

    /// Sign with `sign(0) = 0`, the subgradient convention used for `|u|`.
    fn sign0(self) -> Self {
        if self > Self::zero() {
            Self::one()
        } else if self < Self::zero() {
            -Self::one()
        } else {
            Self::zero()
        }
    }
}

impl Scalar for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

impl Scalar for f32 {
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

/// Mean and population standard deviation; a degenerate spread is replaced by 1.
pub(crate) fn mean_std<T: Scalar>(values: impl Iterator<Item = T>) -> (T, T) {
    let v: Vec<T> = values.collect();
    let n = T::of_usize(v.len());
    let mean = v.iter().copied().sum::<T>() / n;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    let std = var.sqrt();
    let std = if std > T::epsilon() * (T::one() + mean.abs()) && std.is_finite() {
        std
    } else {
        T::one()
    };
    (mean, std)
}
