//! Truncated Taylor series tagged with their variable of differentiation.
//!
//! A [`TaylorSeries`] of order `p` stores `t_0..t_p` with `t_i = f^(i)/i!`.
//! Raw derivatives only appear through [`TaylorSeries::diff`] and
//! [`TaylorSeries::extract_derivative`], which apply factorials (in log space
//! for LNS scalars). Binary operations require equal tags and orders; mixing
//! series taken with respect to different variables is a hard error.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Identity of a variable of differentiation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarTag(u64);

impl VarTag {
    pub fn fresh() -> VarTag {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        VarTag(NEXT.fetch_add(1, Ordering::Relaxed))
    }

    pub fn id(self) -> u64 {
        self.0
    }
}

/// Per-thread count of scalar multiply-accumulate steps done by series kernels.
///
/// Used to compare the cost of different evaluation strategies without relying
/// on wall-clock time.
pub mod work {
    use std::cell::Cell;

    thread_local! {
        static UNITS: Cell<u64> = const { Cell::new(0) };
    }

    #[inline]
    pub(crate) fn add(n: usize) {
        UNITS.with(|u| u.set(u.get() + n as u64));
    }

    pub fn units() -> u64 {
        UNITS.with(Cell::get)
    }

    /// Runs `f` and returns its result with the work it performed on this thread.
    pub fn measure<R>(f: impl FnOnce() -> R) -> (R, u64) {
        let start = units();
        let out = f();
        (out, units() - start)
    }
}

/// Which power-series composition routine to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ComposeAlgo {
    /// Horner's rule over series products, O(p^3).
    Naive,
    /// Brent-Kung block algorithm 2.1, O(p^2.5).
    #[default]
    Bk21,
}

#[derive(Clone, PartialEq)]
pub struct TaylorSeries<S> {
    tag: VarTag,
    coeffs: Vec<S>,
}

impl<S: Scalar> TaylorSeries<S> {
    /// `(x, 1, 0, ..., 0)` under a fresh tag.
    pub fn lift_var(x: S, order: usize) -> Self {
        Self::lift_var_with(x, order, VarTag::fresh())
    }

    pub fn lift_var_with(x: S, order: usize, tag: VarTag) -> Self {
        let mut coeffs = vec![S::zero(); order + 1];
        coeffs[0] = x;
        if order >= 1 {
            coeffs[1] = S::one();
        }
        TaylorSeries { tag, coeffs }
    }

    /// `(c, 0, ..., 0)`.
    pub fn lift_const(c: S, order: usize, tag: VarTag) -> Self {
        let mut coeffs = vec![S::zero(); order + 1];
        coeffs[0] = c;
        TaylorSeries { tag, coeffs }
    }

    pub fn from_coeffs(tag: VarTag, coeffs: Vec<S>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Precondition("a series needs at least one coefficient".into()));
        }
        Ok(TaylorSeries { tag, coeffs })
    }

    pub fn from_f64s(tag: VarTag, coeffs: &[f64]) -> Result<Self> {
        Self::from_coeffs(tag, coeffs.iter().map(|&c| S::from_f64(c)).collect())
    }

    pub fn tag(&self) -> VarTag {
        self.tag
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<S> {
        self.coeffs
    }

    /// The constant term `t_0`.
    pub fn value(&self) -> S {
        self.coeffs[0]
    }

    pub fn to_f64s(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.to_f64()).collect()
    }

    pub fn retag(mut self, tag: VarTag) -> Self {
        self.tag = tag;
        self
    }

    /// Keeps coefficients `0..=order`.
    pub fn truncate(mut self, order: usize) -> Result<Self> {
        if order > self.order() {
            return Err(Error::Arity {
                requested: order,
                order: self.order(),
            });
        }
        self.coeffs.truncate(order + 1);
        Ok(self)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs[1..].iter().all(|c| c.is_zero())
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.tag != other.tag {
            return Err(Error::TagMismatch {
                expected: self.tag,
                found: other.tag,
            });
        }
        if self.order() != other.order() {
            return Err(Error::OrderMismatch {
                left: self.order(),
                right: other.order(),
            });
        }
        Ok(())
    }

    fn with_coeffs(&self, coeffs: Vec<S>) -> Self {
        TaylorSeries {
            tag: self.tag,
            coeffs,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        work::add(self.coeffs.len());
        Ok(self.with_coeffs(
            self.coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| a + b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        work::add(self.coeffs.len());
        Ok(self.with_coeffs(
            self.coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| a - b)
                .collect(),
        ))
    }

    pub fn neg(&self) -> Self {
        self.with_coeffs(self.coeffs.iter().map(|&a| -a).collect())
    }

    pub fn scale(&self, c: S) -> Self {
        work::add(self.coeffs.len());
        self.with_coeffs(self.coeffs.iter().map(|&a| a * c).collect())
    }

    /// Adds `c` to the constant term.
    pub fn add_scalar(&self, c: S) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0] + c;
        out
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let n = self.coeffs.len();
        Ok(self.with_coeffs(mul_trunc(&self.coeffs, 0, &other.coeffs, 0, n)))
    }

    pub fn recip(&self) -> Result<Self> {
        let one = Self::lift_const(S::one(), self.order(), self.tag);
        one.div(self)
    }

    /// `self / divisor` by the forward-substitution recurrence.
    pub fn div(&self, divisor: &Self) -> Result<Self> {
        self.check(divisor)?;
        let r = &divisor.coeffs;
        if r[0].is_zero() {
            return Err(Error::Singularity);
        }
        let n = r.len();
        let r0 = r[0];
        let mut s: Vec<S> = Vec::with_capacity(n);
        for i in 0..n {
            let acc = S::dot((0..i).map(|j| (s[j], r[i - j])));
            s.push((self.coeffs[i] - acc) / r0);
        }
        work::add(n * (n + 1) / 2);
        Ok(self.with_coeffs(s))
    }

    pub fn exp(&self) -> Self {
        let r = &self.coeffs;
        let n = r.len();
        let jr: Vec<S> = (0..n).map(|j| r[j] * S::from_f64(j as f64)).collect();
        let mut e: Vec<S> = Vec::with_capacity(n);
        e.push(r[0].exp());
        for i in 1..n {
            let acc = S::dot((1..=i).map(|j| (jr[j], e[i - j])));
            e.push(acc / S::from_f64(i as f64));
        }
        work::add(n * (n + 1) / 2);
        self.with_coeffs(e)
    }

    pub fn log(&self) -> Result<Self> {
        let r = &self.coeffs;
        if !r[0].is_positive() {
            return Err(Error::Domain("log of a series with nonpositive constant term".into()));
        }
        let n = r.len();
        let r0 = r[0];
        let mut l: Vec<S> = Vec::with_capacity(n);
        let mut jl: Vec<S> = Vec::with_capacity(n);
        l.push(r0.ln());
        jl.push(S::zero());
        for i in 1..n {
            let acc = S::dot((1..i).map(|j| (jl[j], r[i - j])));
            let li = (r[i] - acc / S::from_f64(i as f64)) / r0;
            l.push(li);
            jl.push(li * S::from_f64(i as f64));
        }
        work::add(n * (n + 1) / 2);
        Ok(self.with_coeffs(l))
    }

    /// `self^a`. Nonnegative integer powers use repeated squaring and accept any
    /// constant term; other exponents need a positive constant term (or nonzero,
    /// for negative integers).
    pub fn pow(&self, a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Domain(format!("non-finite exponent {a}")));
        }
        if a.fract() == 0.0 && a >= 0.0 && a <= u32::MAX as f64 {
            return Ok(self.powi(a as u32));
        }
        let r0 = self.coeffs[0];
        if a.fract() == 0.0 && !r0.is_zero() {
            return Ok(self.recip()?.powi((-a) as u32));
        }
        if !r0.is_positive() {
            return Err(Error::Domain(format!(
                "power {a} of a series with nonpositive constant term"
            )));
        }
        let r = &self.coeffs;
        let n = r.len();
        let mut w: Vec<S> = Vec::with_capacity(n);
        w.push(r0.powf(a));
        for i in 1..n {
            let acc = S::dot(
                (1..=i).map(|j| (r[j] * S::from_f64((a + 1.0) * j as f64 - i as f64), w[i - j])),
            );
            w.push(acc / (S::from_f64(i as f64) * r0));
        }
        work::add(n * (n + 1) / 2);
        Ok(self.with_coeffs(w))
    }

    pub fn powi(&self, mut e: u32) -> Self {
        let n = self.coeffs.len();
        let mut result = Self::lift_const(S::one(), self.order(), self.tag);
        if e == 0 {
            return result;
        }
        let mut base = self.coeffs.clone();
        let mut first = true;
        loop {
            if e & 1 == 1 {
                if first {
                    result.coeffs = base.clone();
                    first = false;
                } else {
                    result.coeffs = mul_trunc(&result.coeffs, 0, &base, 0, n);
                }
            }
            e >>= 1;
            if e == 0 {
                break;
            }
            base = mul_trunc(&base, 0, &base, 0, n);
        }
        result
    }

    /// Shifts the derivative sequence left by `q`: the result of order
    /// `order - q` holds the Taylor coefficients of `d^q f / dv^q`.
    pub fn diff(&self, q: usize) -> Result<Self> {
        let order = self.order();
        if q > order {
            return Err(Error::Arity {
                requested: q,
                order,
            });
        }
        if q == 0 {
            return Ok(self.clone());
        }
        let p = order - q;
        work::add(p + 1);
        Ok(self.with_coeffs(
            (0..=p)
                .map(|j| self.coeffs[q + j] * S::factorial_ratio(q + j, j))
                .collect(),
        ))
    }

    /// `q! * t_q`, the raw `q`-th derivative.
    pub fn extract_derivative(&self, q: usize) -> Result<S> {
        if q > self.order() {
            return Err(Error::Arity {
                requested: q,
                order: self.order(),
            });
        }
        Ok(self.coeffs[q] * S::factorial_ratio(q, 0))
    }

    /// First `p + 1` coefficients of `Q(R(eps))` by Horner's rule.
    ///
    /// `inner` must have a zero constant term; `self`'s constant term is ignored.
    pub fn compose_naive(&self, inner: &Self) -> Result<Self> {
        self.compose_with(inner, ComposeAlgo::Naive)
    }

    /// First `p + 1` coefficients of `Q(R(eps))` by Brent-Kung 2.1.
    pub fn compose_bk21(&self, inner: &Self) -> Result<Self> {
        self.compose_with(inner, ComposeAlgo::Bk21)
    }

    pub fn compose_with(&self, inner: &Self, algo: ComposeAlgo) -> Result<TaylorSeries<S>> {
        if self.order() != inner.order() {
            return Err(Error::OrderMismatch {
                left: self.order(),
                right: inner.order(),
            });
        }
        if !inner.coeffs[0].is_zero() {
            return Err(Error::Precondition(
                "inner series of a composition must have zero constant term".into(),
            ));
        }
        let coeffs = match algo {
            ComposeAlgo::Naive => compose_naive_coeffs(&self.coeffs, &inner.coeffs),
            ComposeAlgo::Bk21 => compose_bk21_coeffs(&self.coeffs, &inner.coeffs),
        };
        Ok(TaylorSeries {
            tag: inner.tag,
            coeffs,
        })
    }

    /// Chain rule on series: given `<u, dv>_p` and `<v, dx>_p`, returns `<u, dx>_p`.
    pub fn compose_dual(&self, v: &Self) -> Result<Self> {
        self.compose_dual_with(v, ComposeAlgo::Bk21)
    }

    pub fn compose_dual_with(&self, v: &Self, algo: ComposeAlgo) -> Result<Self> {
        if self.order() != v.order() {
            return Err(Error::OrderMismatch {
                left: self.order(),
                right: v.order(),
            });
        }
        let mut r = v.coeffs.clone();
        r[0] = S::zero();
        let tail = if self.order() == 0 || self.is_constant() || r.iter().all(|c| c.is_zero()) {
            vec![S::zero(); r.len()]
        } else {
            match algo {
                ComposeAlgo::Naive => compose_naive_coeffs(&self.coeffs, &r),
                ComposeAlgo::Bk21 => compose_bk21_coeffs(&self.coeffs, &r),
            }
        };
        let mut coeffs = tail;
        coeffs[0] = self.coeffs[0];
        Ok(TaylorSeries { tag: v.tag, coeffs })
    }
}

/// First `n` coefficients of `a * b`, where `a_i = 0` for `i < va` and
/// `b_i = 0` for `i < vb`.
pub(crate) fn mul_trunc<S: Scalar>(a: &[S], va: usize, b: &[S], vb: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n];
    let mut ops = 0;
    for (i, slot) in out.iter_mut().enumerate().skip(va + vb) {
        let lo = va.max(i.saturating_sub(b.len() - 1));
        let hi = (i - vb).min(a.len() - 1);
        if lo > hi {
            continue;
        }
        ops += hi - lo + 1;
        *slot = S::dot((lo..=hi).map(|j| (a[j], b[i - j])));
    }
    crate::series::work::add(ops);
    out
}

fn compose_naive_coeffs<S: Scalar>(q: &[S], r: &[S]) -> Vec<S> {
    let n = q.len();
    let p = n - 1;
    if p == 0 {
        return vec![S::zero()];
    }
    // Q(t) = t (q_1 + t (q_2 + ... + t q_p))
    let mut acc = vec![S::zero(); n];
    acc[0] = q[p];
    for i in (1..p).rev() {
        acc = mul_trunc(&acc, 0, r, 1, n);
        acc[0] = acc[0] + q[i];
    }
    mul_trunc(&acc, 0, r, 1, n)
}

/// Block size for Brent-Kung 2.1: the smallest `m` with `m * m >= p + 1`.
pub fn bk21_block_size(p: usize) -> usize {
    let target = p + 1;
    let mut m = (target as f64).sqrt().floor() as usize;
    while m * m < target {
        m += 1;
    }
    while m > 1 && (m - 1) * (m - 1) >= target {
        m -= 1;
    }
    m.max(1)
}

fn compose_bk21_coeffs<S: Scalar>(q: &[S], r: &[S]) -> Vec<S> {
    let n = q.len();
    let p = n - 1;
    if p == 0 {
        return vec![S::zero()];
    }
    let m = bk21_block_size(p);

    // R^0 ..= R^m; R^i vanishes below index i.
    let mut powers: Vec<Vec<S>> = Vec::with_capacity(m + 1);
    let mut unit = vec![S::zero(); n];
    unit[0] = S::one();
    powers.push(unit);
    powers.push(r.to_vec());
    for i in 2..=m {
        let next = mul_trunc(&powers[i - 1], i - 1, r, 1, n);
        powers.push(next);
    }

    let coeff = |idx: usize| if idx == 0 || idx > p { S::zero() } else { q[idx] };
    let n_blocks = n.div_ceil(m);

    // Block b evaluates sum_{i<m} q_{bm+i} R^i.
    let block = |b: usize| -> Vec<S> {
        let base = b * m;
        let mut out = vec![S::zero(); n];
        let terms: Vec<usize> = (0..m).filter(|&i| !coeff(base + i).is_zero()).collect();
        if terms.is_empty() {
            return out;
        }
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = S::dot(
                terms
                    .iter()
                    .filter(|&&i| i <= j)
                    .map(|&i| (coeff(base + i), powers[i][j])),
            );
        }
        crate::series::work::add(terms.len() * n);
        out
    };

    let rm = &powers[m];
    let mut acc = block(n_blocks - 1);
    for b in (0..n_blocks - 1).rev() {
        let shifted = mul_trunc(&acc, 0, rm, m, n);
        let blk = block(b);
        acc = shifted.iter().zip(&blk).map(|(&x, &y)| x + y).collect();
    }
    acc
}

impl<S: fmt::Debug> fmt::Debug for TaylorSeries<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TaylorSeries[{}](", self.tag.0)?;
        for (i, c) in self.coeffs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:?}", c)?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lns::LnsScalar;

    fn s64(tag: VarTag, c: &[f64]) -> TaylorSeries<f64> {
        TaylorSeries::from_f64s(tag, c).unwrap()
    }

    fn assert_coeffs(s: &TaylorSeries<f64>, want: &[f64], tol: f64) {
        assert_eq!(s.order() + 1, want.len(), "{s:?}");
        for (i, (&a, &b)) in s.coeffs().iter().zip(want).enumerate() {
            assert!((a - b).abs() <= tol * (1.0 + b.abs()), "coeff {i}: {a} vs {b} in {s:?}");
        }
    }

    fn exp_series(order: usize, scale: f64, tag: VarTag) -> TaylorSeries<f64> {
        let mut c = Vec::new();
        let mut f = 1.0;
        for i in 0..=order {
            if i > 0 {
                f *= scale / i as f64;
            }
            c.push(f);
        }
        s64(tag, &c)
    }

    #[test]
    fn lifting() {
        let x = TaylorSeries::lift_var(3.0, 2);
        assert_eq!(x.coeffs(), &[3.0, 1.0, 0.0]);
        let c = TaylorSeries::lift_const(5.0, 2, x.tag());
        assert_eq!(c.coeffs(), &[5.0, 0.0, 0.0]);
        let x0 = TaylorSeries::lift_var(7.0, 0);
        assert_eq!(x0.coeffs(), &[7.0]);
        assert_ne!(TaylorSeries::lift_var(1.0, 1).tag(), TaylorSeries::lift_var(1.0, 1).tag());
    }

    #[test]
    fn products() {
        let t = VarTag::fresh();
        let a = s64(t, &[1.0, 1.0]);
        assert_coeffs(&a.mul(&a).unwrap(), &[1.0, 2.0], 0.0);

        let e = exp_series(3, 1.0, t);
        assert_coeffs(&e.mul(&e).unwrap(), &[1.0, 2.0, 2.0, 4.0 / 3.0], 1e-15);

        let long = s64(t, &[0.0, 0.0, 0.0, 1.0]);
        let short = s64(t, &[0.0, 1.0]);
        assert!(matches!(long.mul(&short), Err(Error::OrderMismatch { .. })));
        let other = s64(VarTag::fresh(), &[0.0, 1.0]);
        assert!(matches!(short.mul(&other), Err(Error::TagMismatch { .. })));
    }

    #[test]
    fn division() {
        let t = VarTag::fresh();
        let r = s64(t, &[2.0, 1.0]);
        assert_coeffs(&r.recip().unwrap(), &[0.5, -0.25], 0.0);
        assert_coeffs(&r.div(&r).unwrap(), &[1.0, 0.0], 0.0);
        let e = exp_series(3, 1.0, t);
        assert_coeffs(&e.recip().unwrap(), &[1.0, -1.0, 0.5, -1.0 / 6.0], 1e-15);
        assert_eq!(s64(t, &[0.0, 1.0]).recip(), Err(Error::Singularity));
    }

    #[test]
    fn elementary_functions() {
        let t = VarTag::fresh();
        assert_coeffs(&s64(t, &[0.0, 1.0, 0.0, 0.0]).exp(), &[1.0, 1.0, 0.5, 1.0 / 6.0], 1e-15);
        let r = s64(t, &[0.3, 1.0, 0.0]);
        assert_coeffs(&r.exp().log().unwrap(), &[0.3, 1.0, 0.0], 1e-12);
        assert_coeffs(&s64(t, &[1.0, 1.0, 0.0]).pow(0.5).unwrap(), &[1.0, 0.5, -0.125], 1e-15);
        assert!(s64(t, &[-1.0, 1.0]).log().is_err());
        assert!(s64(t, &[-1.0, 1.0]).pow(0.5).is_err());
        // integer powers tolerate a zero constant term
        assert_coeffs(&s64(t, &[0.0, 1.0, 0.0, 0.0]).pow(3.0).unwrap(), &[0.0, 0.0, 0.0, 1.0], 0.0);
        assert_coeffs(&s64(t, &[2.0, 1.0, 0.0]).pow(-1.0).unwrap(), &[0.5, -0.25, 0.125], 1e-15);
        assert_coeffs(&s64(t, &[3.0, 1.0]).pow(0.0).unwrap(), &[1.0, 0.0], 0.0);
    }

    #[test]
    fn diff_and_extract() {
        let t = VarTag::fresh();
        let cube = s64(t, &[0.0, 0.0, 0.0, 1.0]);
        assert_coeffs(&cube.diff(2).unwrap(), &[0.0, 6.0], 0.0);
        assert_eq!(cube.diff(0).unwrap(), cube);
        assert!(matches!(cube.diff(4), Err(Error::Arity { .. })));
        let e = exp_series(5, 1.0, t);
        assert_coeffs(&e.diff(3).unwrap(), &[1.0, 1.0, 0.5], 1e-15);

        assert_eq!(s64(t, &[3.0, 1.0, 0.0]).extract_derivative(0).unwrap(), 3.0);
        assert!((e.extract_derivative(5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cube.extract_derivative(3).unwrap(), 6.0);
        assert!(cube.extract_derivative(4).is_err());
    }

    #[test]
    fn composition_examples() {
        let t = VarTag::fresh();
        let q = s64(t, &[0.0, 0.0, 1.0]);
        let r = s64(t, &[0.0, 1.0, 1.0]);
        for algo in [ComposeAlgo::Naive, ComposeAlgo::Bk21] {
            assert_coeffs(&q.compose_with(&r, algo).unwrap(), &[0.0, 0.0, 1.0], 0.0);
        }

        let q = s64(t, &[0.0, 0.7, -1.3, 2.0, 0.25]);
        let id = s64(t, &[0.0, 1.0, 0.0, 0.0, 0.0]);
        for algo in [ComposeAlgo::Naive, ComposeAlgo::Bk21] {
            assert_coeffs(&q.compose_with(&id, algo).unwrap(), q.coeffs(), 1e-15);
        }

        // e^tau - 1 composed with ln(1 + eps) is eps
        let mut expm1 = exp_series(6, 1.0, t).into_coeffs();
        expm1[0] = 0.0;
        let log1p: Vec<f64> = (0..=6)
            .map(|i| if i == 0 { 0.0 } else { (if i % 2 == 1 { 1.0 } else { -1.0 }) / i as f64 })
            .collect();
        let q = s64(t, &expm1);
        let r = s64(t, &log1p);
        for algo in [ComposeAlgo::Naive, ComposeAlgo::Bk21] {
            assert_coeffs(&q.compose_with(&r, algo).unwrap(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1e-15);
        }

        assert!(q.compose_naive(&s64(t, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn compose_dual_examples() {
        let v_tag = VarTag::fresh();
        let x = TaylorSeries::lift_var(1.0, 3);
        // v(x) = x^2 around x = 1
        let v = x.mul(&x).unwrap();
        assert_coeffs(&v, &[1.0, 2.0, 1.0, 0.0], 0.0);
        // u(v) = e^v around v = 1
        let e = std::f64::consts::E;
        let u = s64(v_tag, &[e, e, e / 2.0, e / 6.0]);
        let ux = u.compose_dual(&v).unwrap();
        assert_eq!(ux.tag(), x.tag());
        assert_coeffs(&ux, &[e, 2.0 * e, 3.0 * e, 10.0 * e / 3.0], 1e-14);

        let c = s64(v_tag, &[4.0, 0.0, 0.0, 0.0]);
        assert_coeffs(&c.compose_dual(&v).unwrap(), &[4.0, 0.0, 0.0, 0.0], 0.0);

        let arbitrary = s64(v_tag, &[0.3, -1.0, 2.5, 0.125]);
        let through = arbitrary.compose_dual(&x).unwrap();
        assert_eq!(through.tag(), x.tag());
        assert_coeffs(&through, arbitrary.coeffs(), 1e-15);
    }

    #[test]
    fn block_size_is_ceil_sqrt() {
        assert_eq!(bk21_block_size(0), 1);
        assert_eq!(bk21_block_size(3), 2);
        assert_eq!(bk21_block_size(4), 3);
        assert_eq!(bk21_block_size(8), 3);
        assert_eq!(bk21_block_size(9), 4);
        assert_eq!(bk21_block_size(255), 16);
        assert_eq!(bk21_block_size(256), 17);
    }

    #[test]
    fn lns_series_match_float_series() {
        let t = VarTag::fresh();
        let vals = [0.4, -1.2, 0.3, 2.0, -0.7, 0.05];
        let f = s64(t, &vals);
        let l: TaylorSeries<LnsScalar> = TaylorSeries::from_f64s(t, &vals).unwrap();
        let pairs = [
            (f.exp().to_f64s(), l.exp().to_f64s()),
            (f.mul(&f).unwrap().to_f64s(), l.mul(&l).unwrap().to_f64s()),
            (f.recip().unwrap().to_f64s(), l.recip().unwrap().to_f64s()),
            (f.diff(2).unwrap().to_f64s(), l.diff(2).unwrap().to_f64s()),
        ];
        for (a, b) in pairs {
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn work_counter_tracks_kernels() {
        let t = VarTag::fresh();
        let a = s64(t, &[1.0; 11]);
        let (_, units) = work::measure(|| a.mul(&a).unwrap());
        assert_eq!(units, 66);
    }
}
