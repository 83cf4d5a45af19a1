//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All state vectors, operators and spectra are generic over a real type `T`
//! (`f32` or `f64`); complex amplitudes are `Complex<T>`. The `faer` bound is
//! what lets the dense eigensolver and SVD run on the same type.

use std::fmt::{Debug, Display};

use faer::traits::RealField;
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable throughout the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + RealField<Unit = Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant, panicking only for values no float can hold.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 constant representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("integer representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// A tolerance stated for double precision, widened to what this type can
    /// actually resolve.
    #[inline]
    fn tolerance(f64_tol: f64) -> Self {
        let floor = Self::epsilon() * Self::of(1.0e3);
        Self::of(f64_tol).max(floor)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub(crate) fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Compensated accumulator; keeps long sums over realizations and time
/// points order-stable to the last few ulps.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum<T: Real> {
    sum: T,
    carry: T,
}

impl<T: Real> KahanSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum
    }
}

impl<T: Real> std::iter::FromIterator<T> for KahanSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_on_tenths() {
        let naive: f64 = std::iter::repeat(0.1).take(10).sum();
        let k: KahanSum<f64> = std::iter::repeat(0.1).take(10).collect();
        assert!((k.value() - 1.0).abs() <= (naive - 1.0).abs());
    }

    #[test]
    fn tolerance_widens_for_f32() {
        assert_eq!(<f64 as Real>::tolerance(1e-10), 1e-10);
        assert!(<f32 as Real>::tolerance(1e-10) > 1e-5);
    }
}
