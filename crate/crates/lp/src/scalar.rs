use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

/// Arithmetic used by the dense simplex. Floating point compares against a
/// tolerance; exact rationals compare exactly.
pub trait Scalar: Clone + Debug + PartialOrd + Send + Sync {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn abs(&self) -> Self;
    /// Feasibility/optimality tolerance.
    fn tol() -> Self;
    /// Smallest magnitude accepted as a pivot element.
    fn pivot_tol() -> Self;
    fn is_exact() -> bool;

    fn is_pos(&self) -> bool {
        *self > Self::tol()
    }
    fn is_neg(&self) -> bool {
        *self < Self::tol().neg()
    }
    fn is_zero(&self) -> bool {
        !self.is_pos() && !self.is_neg()
    }
    fn exactly_zero(&self) -> bool {
        *self == Self::zero()
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn tol() -> Self {
        1e-9
    }
    fn pivot_tol() -> Self {
        1e-9
    }
    fn is_exact() -> bool {
        false
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num_traits::One::one()
    }
    fn from_f64(v: f64) -> Self {
        if v.fract() == 0.0 && v.abs() < 9.0e15 {
            BigRational::from_integer(BigInt::from(v as i64))
        } else {
            <BigRational as num_traits::FromPrimitive>::from_f64(v).expect("finite coefficient")
        }
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn tol() -> Self {
        Zero::zero()
    }
    fn pivot_tol() -> Self {
        Zero::zero()
    }
    fn is_exact() -> bool {
        true
    }
    fn is_pos(&self) -> bool {
        Signed::is_positive(self)
    }
    fn is_neg(&self) -> bool {
        Signed::is_negative(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_conversion_is_exact_for_integers_and_halves() {
        assert_eq!(Scalar::to_f64(&<BigRational as Scalar>::from_f64(3.0)), 3.0);
        let h = <BigRational as Scalar>::from_f64(0.5);
        assert_eq!(h.add(&h), <BigRational as Scalar>::one());
    }

    #[test]
    fn float_tolerance_treats_tiny_values_as_zero() {
        assert!(Scalar::is_zero(&1e-12f64));
        assert!(1e-6f64.is_pos());
    }
}
