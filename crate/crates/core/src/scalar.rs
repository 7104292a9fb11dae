//! The numeric atom shared by every series kernel.
//!
//! Two implementations exist: plain `f64`, and [`LnsScalar`](crate::lns::LnsScalar)
//! which keeps a sign and a natural-log magnitude. All series code is generic
//! over [`Scalar`], so the same computation can be run in either representation.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    /// Panics on NaN or infinite input for representations that cannot hold them.
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    /// The positive number `e^ell`, built without leaving log space when possible.
    fn from_ln(ell: f64) -> Self;
    /// `ln |self|`; `-inf` for zero.
    fn ln_abs(self) -> f64;
    fn is_zero(self) -> bool;
    fn is_positive(self) -> bool;
    fn is_finite(self) -> bool;
    fn exp(self) -> Self;
    /// Natural log; caller guarantees `self > 0`.
    fn ln(self) -> Self;
    /// Real power; caller guarantees `self > 0` unless `r` is an integer.
    fn powf(self, r: f64) -> Self;

    /// `n! / m!` for `n >= m`.
    fn factorial_ratio(n: usize, m: usize) -> Self;

    /// `sum_i a_i * b_i`.
    fn dot<I: Iterator<Item = (Self, Self)>>(pairs: I) -> Self {
        pairs.fold(Self::zero(), |acc, (a, b)| acc + a * b)
    }

    fn abs(self) -> Self {
        if self.is_positive() || self.is_zero() {
            self
        } else {
            -self
        }
    }
}

pub fn ln_factorial(n: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn from_ln(ell: f64) -> Self {
        ell.exp()
    }
    fn ln_abs(self) -> f64 {
        self.abs().ln()
    }
    fn is_zero(self) -> bool {
        self == 0.0
    }
    fn is_positive(self) -> bool {
        self > 0.0
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn powf(self, r: f64) -> Self {
        f64::powf(self, r)
    }
    fn factorial_ratio(n: usize, m: usize) -> Self {
        debug_assert!(n >= m);
        if n <= 170 {
            ((m + 1)..=n).fold(1.0, |acc, i| acc * i as f64)
        } else {
            (ln_factorial(n) - ln_factorial(m)).exp()
        }
    }
    fn dot<I: Iterator<Item = (Self, Self)>>(pairs: I) -> Self {
        pairs.fold(0.0, |acc, (a, b)| acc + a * b)
    }
}

/// Relative closeness with an absolute floor.
///
/// Nonzero values of equal sign are compared on log magnitude. Anything else
/// (a zero, or opposite signs) falls back to `|a - b| <= abs_floor` in linear
/// space.
pub fn close<S: Scalar>(a: S, b: S, rel: f64, abs_floor: f64) -> bool {
    if a.is_zero() && b.is_zero() {
        return true;
    }
    let same_sign = !a.is_zero() && !b.is_zero() && a.is_positive() == b.is_positive();
    if same_sign && (a.ln_abs() - b.ln_abs()).abs() <= rel {
        return true;
    }
    (a.to_f64() - b.to_f64()).abs() <= abs_floor
}
