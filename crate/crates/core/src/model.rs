//! Integer hidden Markov models and their likelihood through probability
//! generating functions.
//!
//! The latent count evolves as `n_k = sum_{i <= n_{k-1}} z_{k,i} + m_k` with
//! `n_0 = 0`, offspring `z_{k,i} ~ F_k` and immigrants `m_k ~ G_k`, and is
//! observed as `y_k ~ Binomial(n_k, rho_k)`. With `A_0 = 1`,
//!
//! ```text
//! Gamma_k(u) = A_{k-1}(F_k(u)) * G_k(u)
//! A_k(s)     = (s rho_k)^{y_k} / y_k! * Gamma_k^{(y_k)}(s (1 - rho_k))
//! ```
//!
//! and the likelihood is `A_K(1)`. The derivative in `A_k` is a nested node, so
//! the whole recursion is a nested AD computation of total order `sum y_k`.
//!
//! Parameters are packed as `theta = [rho_1..rho_K, delta_1..delta_K,
//! lambda_1..lambda_K]`, where `delta_k` and `lambda_k` are the single
//! parameters of `F_k` and `G_k`. Since `n_0 = 0`, `delta_1` never affects the
//! likelihood.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lns::LnsScalar;
use crate::nested::{Forward, InnerFn, Scope, Value};
use crate::scalar::{ln_factorial, Scalar};
use crate::series::TaylorSeries;
use crate::tape::{record_forward, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    /// PGF `(1 - p) + p s`.
    Bernoulli,
    /// PGF `exp(lambda (s - 1))`.
    Poisson,
    /// Failures before the first success, PGF `p / (1 - (1 - p) s)`.
    Geometric,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
            Family::Geometric => "geometric",
        }
    }

    /// Whether `x` lies in the parameter domain.
    pub fn admits(self, x: f64) -> bool {
        match self {
            Family::Bernoulli => (0.0..=1.0).contains(&x),
            Family::Poisson => x >= 0.0 && x.is_finite(),
            Family::Geometric => x > 0.0 && x <= 1.0,
        }
    }

    /// Mean of one draw.
    pub fn mean(self, x: f64) -> f64 {
        match self {
            Family::Bernoulli | Family::Poisson => x,
            Family::Geometric => (1.0 - x) / x,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Family> {
        match s.to_ascii_lowercase().as_str() {
            "bernoulli" => Ok(Family::Bernoulli),
            "poisson" => Ok(Family::Poisson),
            "geometric" => Ok(Family::Geometric),
            other => Err(Error::InvalidModel(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistSpec {
    pub family: Family,
    pub param: f64,
}

impl DistSpec {
    pub fn new(family: Family, param: f64) -> DistSpec {
        DistSpec { family, param }
    }

    pub fn bernoulli(p: f64) -> DistSpec {
        DistSpec::new(Family::Bernoulli, p)
    }

    pub fn poisson(lambda: f64) -> DistSpec {
        DistSpec::new(Family::Poisson, lambda)
    }

    pub fn geometric(p: f64) -> DistSpec {
        DistSpec::new(Family::Geometric, p)
    }

    pub fn mean(&self) -> f64 {
        self.family.mean(self.param)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub rho: Vec<f64>,
    pub offspring: Vec<DistSpec>,
    pub immigration: Vec<DistSpec>,
}

/// Which block of `theta` a coordinate belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Rho,
    Offspring,
    Immigration,
}

impl ModelParams {
    pub fn new(rho: Vec<f64>, offspring: Vec<DistSpec>, immigration: Vec<DistSpec>) -> Result<ModelParams> {
        let m = ModelParams {
            rho,
            offspring,
            immigration,
        };
        m.validate()?;
        Ok(m)
    }

    /// The same families and parameters at every step.
    pub fn homogeneous(k: usize, rho: f64, offspring: DistSpec, immigration: DistSpec) -> Result<ModelParams> {
        ModelParams::new(vec![rho; k], vec![offspring; k], vec![immigration; k])
    }

    pub fn k(&self) -> usize {
        self.rho.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.rho.len();
        if k == 0 {
            return Err(Error::InvalidModel("K must be at least 1".into()));
        }
        if self.offspring.len() != k || self.immigration.len() != k {
            return Err(Error::InvalidModel(format!(
                "length mismatch: {} detection, {} offspring, {} immigration",
                k,
                self.offspring.len(),
                self.immigration.len()
            )));
        }
        for (i, &r) in self.rho.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidModel(format!("rho_{} = {r} outside [0, 1]", i + 1)));
            }
        }
        for (name, specs) in [("offspring", &self.offspring), ("immigration", &self.immigration)] {
            for (i, d) in specs.iter().enumerate() {
                if !d.family.admits(d.param) {
                    return Err(Error::InvalidModel(format!(
                        "{name}_{} = {} outside the {} domain",
                        i + 1,
                        d.param,
                        d.family
                    )));
                }
            }
        }
        Ok(())
    }

    /// `[rho_1..rho_K, delta_1..delta_K, lambda_1..lambda_K]`.
    pub fn theta(&self) -> Vec<f64> {
        self.rho
            .iter()
            .copied()
            .chain(self.offspring.iter().map(|d| d.param))
            .chain(self.immigration.iter().map(|d| d.param))
            .collect()
    }

    /// Copy with parameters replaced; families are kept.
    pub fn with_theta(&self, theta: &[f64]) -> Result<ModelParams> {
        let k = self.k();
        if theta.len() != 3 * k {
            return Err(Error::InvalidModel(format!(
                "theta has {} entries, expected {}",
                theta.len(),
                3 * k
            )));
        }
        let mut m = self.clone();
        m.rho.copy_from_slice(&theta[..k]);
        for i in 0..k {
            m.offspring[i].param = theta[k + i];
            m.immigration[i].param = theta[2 * k + i];
        }
        m.validate()?;
        Ok(m)
    }

    pub fn param_kind(&self, index: usize) -> (ParamKind, usize) {
        let k = self.k();
        match index / k {
            0 => (ParamKind::Rho, index),
            1 => (ParamKind::Offspring, index - k),
            _ => (ParamKind::Immigration, index - 2 * k),
        }
    }

    /// `rho_1, .., delta_1, .., lambda_1, ..`.
    pub fn param_names(&self) -> Vec<String> {
        (0..3 * self.k())
            .map(|i| {
                let (kind, step) = self.param_kind(i);
                let base = match kind {
                    ParamKind::Rho => "rho",
                    ParamKind::Offspring => "delta",
                    ParamKind::Immigration => "lambda",
                };
                format!("{base}_{}", step + 1)
            })
            .collect()
    }

    /// `E[n_k]` for each step.
    pub fn expected_population(&self) -> Vec<f64> {
        let mut prev = 0.0;
        (0..self.k())
            .map(|i| {
                prev = self.offspring[i].mean() * prev + self.immigration[i].mean();
                prev
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observations {
    pub y: Vec<u64>,
}

impl Observations {
    pub fn new(y: Vec<u64>) -> Observations {
        Observations { y }
    }

    pub fn k(&self) -> usize {
        self.y.len()
    }

    /// `sum_k y_k`, the total differentiation order.
    pub fn total_order(&self) -> usize {
        self.y.iter().map(|&v| v as usize).sum()
    }
}

fn check(params: &ModelParams, obs: &Observations) -> Result<()> {
    params.validate()?;
    if obs.k() != params.k() {
        return Err(Error::InvalidModel(format!(
            "{} observations for a model with K = {}",
            obs.k(),
            params.k()
        )));
    }
    Ok(())
}

/// PGF of `family` at `u` with parameter `param`, built from lifted primitives.
pub fn pgf<C: Scope>(cx: &mut C, family: Family, u: &C::Val, param: &C::Val) -> Result<C::Val> {
    let one = cx.constant(C::Scalar::one());
    match family {
        Family::Bernoulli => {
            let fail = cx.sub(&one, param)?;
            let pu = cx.mul(param, u)?;
            cx.add(&fail, &pu)
        }
        Family::Poisson => {
            let um1 = cx.sub(u, &one)?;
            let e = cx.mul(param, &um1)?;
            cx.exp(&e)
        }
        Family::Geometric => {
            let fail = cx.sub(&one, param)?;
            let fu = cx.mul(&fail, u)?;
            let c = cx.value_of(&fu)?;
            if !(c.abs().ln_abs() < 0.0) {
                return Err(Error::Domain(format!(
                    "geometric PGF needs |(1 - p) u_0| < 1, got {:e}",
                    c.to_f64()
                )));
            }
            let den = cx.sub(&one, &fu)?;
            cx.div(param, &den)
        }
    }
}

/// [`pgf`] on a bare series.
pub fn pgf_eval<S: Scalar>(spec: &DistSpec, u: &TaylorSeries<S>) -> Result<TaylorSeries<S>> {
    let mut cx = Forward::<S>::with_tag(u.tag(), u.order());
    let p = Value::Const(S::from_f64(spec.param));
    let out = pgf(&mut cx, spec.family, &Value::Series(u.clone()), &p)?;
    out.to_series(u.order(), u.tag())
}

/// `Gamma_k(u)` for `1 <= k <= K`.
pub fn gamma_k<C: Scope>(
    cx: &mut C,
    u: &C::Val,
    k: usize,
    params: &ModelParams,
    obs: &Observations,
    theta: &[C::Val],
) -> Result<C::Val> {
    let kk = params.k();
    let i = k - 1;
    let g = pgf(cx, params.immigration[i].family, u, &theta[2 * kk + i])?;
    if k == 1 {
        return Ok(g);
    }
    let f = pgf(cx, params.offspring[i].family, u, &theta[kk + i])?;
    let a = a_k(cx, &f, k - 1, params, obs, theta)?;
    cx.mul(&a, &g)
}

/// `A_k(s)` for `0 <= k <= K`.
pub fn a_k<C: Scope>(
    cx: &mut C,
    s: &C::Val,
    k: usize,
    params: &ModelParams,
    obs: &Observations,
    theta: &[C::Val],
) -> Result<C::Val> {
    if k == 0 {
        return Ok(cx.constant(C::Scalar::one()));
    }
    let i = k - 1;
    let y = obs.y[i] as usize;
    let rho = &theta[i];
    let one = cx.constant(C::Scalar::one());
    let miss = cx.sub(&one, rho)?;
    let arg = cx.mul(s, &miss)?;
    let deriv = if y == 0 {
        gamma_k(cx, &arg, k, params, obs, theta)?
    } else {
        let g: &InnerFn<'_, C> = &|c, u, th| gamma_k(c, &u, k, params, obs, th);
        cx.nested(g, &arg, y, theta)?
    };
    if y == 0 {
        return Ok(deriv);
    }
    let rho_y = cx.pow(rho, y as f64)?;
    let coef = cx.scale(&rho_y, C::Scalar::from_ln(-ln_factorial(y)))?;
    let s_y = cx.pow(s, y as f64)?;
    let t = cx.mul(&coef, &deriv)?;
    cx.mul(&t, &s_y)
}

/// `A_K(1)` in scalar type `S`, tape-free.
pub fn likelihood<S: Scalar>(params: &ModelParams, obs: &Observations) -> Result<S> {
    check(params, obs)?;
    let mut cx = Forward::<S>::new(0);
    let s = cx.input(S::one());
    let theta: Vec<Value<S>> = params.theta().into_iter().map(|t| Value::Const(S::from_f64(t))).collect();
    let a = a_k(&mut cx, &s, params.k(), params, obs, &theta)?;
    Ok(a.value())
}

/// `ln p(y_{1:K})`, computed in log space. A structurally zero likelihood gives
/// `-inf`.
pub fn log_likelihood(params: &ModelParams, obs: &Observations) -> Result<f64> {
    let a: LnsScalar = likelihood(params, obs)?;
    if a.is_zero() {
        return Ok(f64::NEG_INFINITY);
    }
    if !a.is_positive() {
        return Err(Error::Domain(format!("negative likelihood {a}")));
    }
    Ok(a.ln_abs())
}

/// The same computation in plain floating point. Over- or underflow anywhere
/// is reported as [`Error::NumericOverflow`].
pub fn log_likelihood_float(params: &ModelParams, obs: &Observations) -> Result<f64> {
    let a: f64 = likelihood(params, obs).map_err(|e| match e {
        Error::Domain(m) => Error::NumericOverflow(m),
        other => other,
    })?;
    if !a.is_finite() || a <= 0.0 {
        return Err(Error::NumericOverflow(format!("likelihood evaluated to {a:e}")));
    }
    Ok(a.ln())
}

#[derive(Clone, Debug)]
pub struct LogLikGrad {
    pub loglik: f64,
    /// `d/dtheta_i ln p`, in `theta` order.
    pub grad: Vec<f64>,
}

/// Log-likelihood and its exact gradient by forward-over-reverse AD.
pub fn grad_log_likelihood(params: &ModelParams, obs: &Observations) -> Result<LogLikGrad> {
    check(params, obs)?;
    let theta: Vec<LnsScalar> = params.theta().into_iter().map(LnsScalar::from_f64).collect();
    let kk = params.k();
    let (tape, out) = record_forward(
        |t: &mut Tape<LnsScalar>, x, th| a_k(t, &x, kk, params, obs, th),
        LnsScalar::ONE,
        &theta,
        0,
    )?;
    let a = tape.value_of(&out)?;
    if a.is_zero() {
        return Err(Error::ZeroLikelihood);
    }
    let adj = tape.backward(out)?;
    let grad = adj.params().iter().map(|g| (g.value() / a).to_real()).collect();
    Ok(LogLikGrad {
        loglik: a.ln_abs(),
        grad,
    })
}
