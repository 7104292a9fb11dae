//! Logarithmic number system: signed reals stored as a sign and `ln |x|`.
//!
//! Multiplication, division and powers act on the log magnitude directly.
//! Addition uses `max + ln(1 + e^{-|x - y|})`, and subtraction the matching
//! `ln(1 - e^{-|x - y|})` form, so values far outside the `f64` exponent range
//! (for example `1/300!`) are carried without underflow.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::{ln_factorial, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }

    fn times(self, other: Sign) -> Sign {
        match (self, other) {
            (Sign::Zero, _) | (_, Sign::Zero) => Sign::Zero,
            (a, b) if a == b => Sign::Positive,
            _ => Sign::Negative,
        }
    }
}

/// A signed real `sign * e^logmag`.
///
/// The zero scalar is canonical: its `logmag` is stored as `0.0` and never read.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LnsScalar {
    sign: Sign,
    logmag: f64,
}

impl LnsScalar {
    pub const ZERO: LnsScalar = LnsScalar {
        sign: Sign::Zero,
        logmag: 0.0,
    };
    pub const ONE: LnsScalar = LnsScalar {
        sign: Sign::Positive,
        logmag: 0.0,
    };

    #[inline]
    fn make(sign: Sign, logmag: f64) -> LnsScalar {
        if sign == Sign::Zero {
            return LnsScalar::ZERO;
        }
        assert!(
            logmag.is_finite(),
            "LNS log-magnitude overflow ({logmag}); value not representable"
        );
        LnsScalar { sign, logmag }
    }

    pub fn from_real(x: f64) -> Result<LnsScalar> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("cannot represent {x} in LNS")));
        }
        Ok(if x == 0.0 {
            LnsScalar::ZERO
        } else if x > 0.0 {
            LnsScalar::make(Sign::Positive, x.ln())
        } else {
            LnsScalar::make(Sign::Negative, (-x).ln())
        })
    }

    /// `sign * e^ell`; `sign` must be nonzero.
    pub fn from_log(ell: f64, sign: Sign) -> Result<LnsScalar> {
        if !ell.is_finite() {
            return Err(Error::Domain(format!("log-magnitude {ell} is not finite")));
        }
        if sign == Sign::Zero {
            return Err(Error::Domain("from_log requires a nonzero sign".into()));
        }
        Ok(LnsScalar { sign, logmag: ell })
    }

    pub fn to_real(self) -> f64 {
        match self.sign {
            Sign::Zero => 0.0,
            Sign::Positive => self.logmag.exp(),
            Sign::Negative => -self.logmag.exp(),
        }
    }

    pub fn sign(self) -> Sign {
        self.sign
    }

    /// `ln |x|`, or `None` for zero.
    pub fn logmag(self) -> Option<f64> {
        (self.sign != Sign::Zero).then_some(self.logmag)
    }

    pub fn is_zero(self) -> bool {
        self.sign == Sign::Zero
    }

    pub fn try_div(self, rhs: LnsScalar) -> Result<LnsScalar> {
        if rhs.is_zero() {
            return Err(Error::Domain("LNS division by zero".into()));
        }
        Ok(LnsScalar::make(
            self.sign.times(rhs.sign),
            self.logmag - rhs.logmag,
        ))
    }

    pub fn try_pow(self, r: f64) -> Result<LnsScalar> {
        if !r.is_finite() {
            return Err(Error::Domain(format!("non-finite exponent {r}")));
        }
        let integral = r.fract() == 0.0;
        match self.sign {
            Sign::Zero => {
                if r > 0.0 {
                    Ok(LnsScalar::ZERO)
                } else if r == 0.0 {
                    Ok(LnsScalar::ONE)
                } else {
                    Err(Error::Domain("zero raised to a negative power".into()))
                }
            }
            Sign::Negative if !integral => Err(Error::Domain(format!(
                "negative base with fractional exponent {r}"
            ))),
            Sign::Negative => {
                let odd = (r % 2.0).abs() == 1.0;
                let sign = if odd { Sign::Negative } else { Sign::Positive };
                Ok(LnsScalar::make(sign, self.logmag * r))
            }
            Sign::Positive => Ok(LnsScalar::make(Sign::Positive, self.logmag * r)),
        }
    }
}

impl Default for LnsScalar {
    fn default() -> Self {
        LnsScalar::ZERO
    }
}

impl Add for LnsScalar {
    type Output = LnsScalar;

    #[inline]
    fn add(self, rhs: LnsScalar) -> LnsScalar {
        if rhs.sign == Sign::Zero {
            return self;
        }
        if self.sign == Sign::Zero {
            return rhs;
        }
        let (hi, lo) = if self.logmag >= rhs.logmag {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let gap = lo.logmag - hi.logmag;
        if hi.sign == lo.sign {
            LnsScalar::make(hi.sign, hi.logmag + gap.exp().ln_1p())
        } else if gap == 0.0 {
            LnsScalar::ZERO
        } else {
            LnsScalar::make(hi.sign, hi.logmag + (-gap.exp_m1()).ln())
        }
    }
}

impl Sub for LnsScalar {
    type Output = LnsScalar;

    #[inline]
    fn sub(self, rhs: LnsScalar) -> LnsScalar {
        self + (-rhs)
    }
}

impl Neg for LnsScalar {
    type Output = LnsScalar;

    #[inline]
    fn neg(self) -> LnsScalar {
        LnsScalar {
            sign: self.sign.flip(),
            logmag: self.logmag,
        }
    }
}

impl Mul for LnsScalar {
    type Output = LnsScalar;

    #[inline]
    fn mul(self, rhs: LnsScalar) -> LnsScalar {
        let sign = self.sign.times(rhs.sign);
        if sign == Sign::Zero {
            return LnsScalar::ZERO;
        }
        LnsScalar::make(sign, self.logmag + rhs.logmag)
    }
}

/// Panics on a zero divisor; use [`LnsScalar::try_div`] for a checked form.
impl Div for LnsScalar {
    type Output = LnsScalar;

    #[inline]
    fn div(self, rhs: LnsScalar) -> LnsScalar {
        self.try_div(rhs).expect("LNS division by zero")
    }
}

impl PartialOrd for LnsScalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let rank = |s: Sign| match s {
            Sign::Negative => 0,
            Sign::Zero => 1,
            Sign::Positive => 2,
        };
        match rank(self.sign).cmp(&rank(other.sign)) {
            Ordering::Equal => match self.sign {
                Sign::Zero => Some(Ordering::Equal),
                Sign::Positive => self.logmag.partial_cmp(&other.logmag),
                Sign::Negative => other.logmag.partial_cmp(&self.logmag),
            },
            ord => Some(ord),
        }
    }
}

impl fmt::Display for LnsScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            Sign::Zero => write!(f, "0"),
            Sign::Positive => write!(f, "+{:e}", self.logmag),
            Sign::Negative => write!(f, "-{:e}", self.logmag),
        }
    }
}

impl Scalar for LnsScalar {
    fn zero() -> Self {
        LnsScalar::ZERO
    }
    fn one() -> Self {
        LnsScalar::ONE
    }
    fn from_f64(x: f64) -> Self {
        LnsScalar::from_real(x).expect("non-finite value converted to LNS")
    }
    fn to_f64(self) -> f64 {
        self.to_real()
    }
    fn from_ln(ell: f64) -> Self {
        LnsScalar::make(Sign::Positive, ell)
    }
    fn ln_abs(self) -> f64 {
        match self.sign {
            Sign::Zero => f64::NEG_INFINITY,
            _ => self.logmag,
        }
    }
    fn is_zero(self) -> bool {
        self.sign == Sign::Zero
    }
    fn is_positive(self) -> bool {
        self.sign == Sign::Positive
    }
    fn is_finite(self) -> bool {
        true
    }
    fn exp(self) -> Self {
        LnsScalar::make(Sign::Positive, self.to_real())
    }
    fn ln(self) -> Self {
        debug_assert!(self.sign == Sign::Positive);
        LnsScalar::from_f64(self.logmag)
    }
    fn powf(self, r: f64) -> Self {
        self.try_pow(r).expect("LNS power outside its domain")
    }
    fn factorial_ratio(n: usize, m: usize) -> Self {
        debug_assert!(n >= m);
        LnsScalar::from_ln(ln_factorial(n) - ln_factorial(m))
    }

    /// Accumulates relative to a running maximum so each term costs one `exp`.
    #[inline]
    fn dot<I: Iterator<Item = (Self, Self)>>(pairs: I) -> Self {
        let mut top = f64::NEG_INFINITY;
        let mut acc = 0.0f64;
        for (a, b) in pairs {
            let sign = a.sign.times(b.sign);
            if sign == Sign::Zero {
                continue;
            }
            let l = a.logmag + b.logmag;
            let s = if sign == Sign::Positive { 1.0 } else { -1.0 };
            if l <= top {
                acc += s * (l - top).exp();
            } else {
                acc = acc * (top - l).exp() + s;
                top = l;
            }
        }
        if acc == 0.0 {
            LnsScalar::ZERO
        } else if acc > 0.0 {
            LnsScalar::make(Sign::Positive, top + acc.ln())
        } else {
            LnsScalar::make(Sign::Negative, top + (-acc).ln())
        }
    }
}
