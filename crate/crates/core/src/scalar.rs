//! Scalar traits shared by the whole crate.
//!
//! Two levels are used. [`Coefficient`] is a plain signed ring and is enough
//! for the mode-mixing coefficients, which are rational numbers; it admits
//! `num_rational::Ratio<i64>` so mixing identities can be checked exactly.
//! [`Real`] is a floating-point field (`f32` or `f64`) and backs every
//! operator, quadrature and spectral computation.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::Neg;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, Num, NumAssign};

/// Signed ring element usable as a mixing coefficient.
pub trait Coefficient:
    Clone + Debug + PartialEq + Num + Neg<Output = Self> + FromPrimitive + Send + Sync + 'static
{
}

impl<T> Coefficient for T where
    T: Clone + Debug + PartialEq + Num + Neg<Output = Self> + FromPrimitive + Send + Sync + 'static
{
}

/// Floating-point scalar for operator matrices.
pub trait Real:
    Coefficient + Float + FloatConst + NumAssign + Copy + Default + Display + LowerExp + Sum
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite literal")
    }

    /// Converts a count or index.
    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("representable count")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex amplitude over a real scalar.
pub type C<T> = Complex<T>;

/// Reduced Planck constant. The crate works in units with ħ = c = 1; the
/// constant is kept explicit in formulas so dimensional bookkeeping stays
/// readable.
pub fn hbar<T: Real>() -> T {
    T::one()
}

pub(crate) fn re<T: Real>(v: T) -> C<T> {
    C::new(v, T::zero())
}

pub(crate) fn im<T: Real>(v: T) -> C<T> {
    C::new(T::zero(), v)
}

/// (−1)^n as a scalar.
pub(crate) fn parity_sign<T: Coefficient>(n: usize) -> T {
    if n.is_multiple_of(2) {
        T::one()
    } else {
        -T::one()
    }
}
