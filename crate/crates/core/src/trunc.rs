//! Truncated forward algorithm: the classical HMM forward recursion with the
//! latent count capped at `N`, computed in log space.
//!
//! Used as an independent oracle for the PGF likelihood, and as the baseline in
//! benchmarks. Truncation discards mass above `N`, so the value is biased low
//! until `N` is large enough; [`adaptive_loglik`] doubles `N` until the value
//! settles.

use std::time::Instant;

use rayon::prelude::*;

use crate::model::{DistSpec, Family, ModelParams, Observations};
use crate::scalar::ln_factorial;

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `x * ln(p)` with the convention `0 * ln 0 = 0`.
fn xlogy(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * p.ln()
    }
}

pub fn ln_poisson_pmf(k: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_factorial(k)
}

pub fn ln_binomial_pmf(k: usize, n: usize, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let a = xlogy(k as f64, p);
    let b = xlogy((n - k) as f64, 1.0 - p);
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    ln_choose(n, k) + a + b
}

/// Failures before the `r`-th success.
pub fn ln_negbin_pmf(k: usize, r: usize, p: f64) -> f64 {
    if r == 0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let b = xlogy(k as f64, 1.0 - p);
    if b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    ln_choose(k + r - 1, k) + r as f64 * p.ln() + b
}

/// Log pmf, over `0..=n_max`, of the sum of `n` iid draws from `spec`.
pub fn ln_sum_pmf(spec: &DistSpec, n: usize, n_max: usize) -> Vec<f64> {
    (0..=n_max)
        .map(|z| match spec.family {
            Family::Bernoulli => ln_binomial_pmf(z, n, spec.param),
            Family::Poisson => ln_poisson_pmf(z, n as f64 * spec.param),
            Family::Geometric => ln_negbin_pmf(z, n, spec.param),
        })
        .collect()
}

/// Stable `ln sum exp` with a max pass; `-inf` for an empty or all-zero sum.
pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = xs.filter(|x| *x > f64::NEG_INFINITY).map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// `ln P_k(n, n')` for `n' = 0..=N`: offspring sum convolved with immigration.
/// `k` is 1-based.
pub fn log_transition_row(n: usize, k: usize, params: &ModelParams, n_max: usize) -> Vec<f64> {
    let off = ln_sum_pmf(&params.offspring[k - 1], n, n_max);
    let imm = ln_sum_pmf(&params.immigration[k - 1], 1, n_max);
    convolve_row(&off, &imm)
}

fn convolve_row(off: &[f64], imm: &[f64]) -> Vec<f64> {
    (0..off.len())
        .map(|np| log_sum_exp((0..=np).map(|z| off[z] + imm[np - z])))
        .collect()
}

/// [`log_transition_row`] in linear space.
pub fn transition_row(n: usize, k: usize, params: &ModelParams, n_max: usize) -> Vec<f64> {
    log_transition_row(n, k, params, n_max).into_iter().map(f64::exp).collect()
}

fn ln_emission(y: usize, n: usize, rho: f64) -> f64 {
    ln_binomial_pmf(y, n, rho)
}

/// Forward recursion with the population capped at `n_max`.
pub fn truncated_loglik(params: &ModelParams, obs: &Observations, n_max: usize) -> f64 {
    let size = n_max + 1;
    let mut alpha: Vec<f64> = vec![f64::NEG_INFINITY; size];
    alpha[0] = 0.0;
    for k in 1..=params.k() {
        let y = obs.y[k - 1] as usize;
        let rho = params.rho[k - 1];
        let imm = ln_sum_pmf(&params.immigration[k - 1], 1, n_max);
        let live: Vec<usize> = (0..size).filter(|&n| alpha[n] > f64::NEG_INFINITY).collect();
        let rows: Vec<Vec<f64>> = live
            .par_iter()
            .map(|&n| convolve_row(&ln_sum_pmf(&params.offspring[k - 1], n, n_max), &imm))
            .collect();
        alpha = (0..size)
            .into_par_iter()
            .map(|np| {
                let e = ln_emission(y, np, rho);
                if e == f64::NEG_INFINITY {
                    return e;
                }
                let s = log_sum_exp(live.iter().zip(&rows).map(|(&n, row)| alpha[n] + row[np]));
                s + e
            })
            .collect();
    }
    log_sum_exp(alpha.iter().copied())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncConfig {
    /// Starting bound; `None` uses `max(2 max y, 16)`.
    pub n0: Option<usize>,
    pub cap: usize,
    /// Successive values must agree to this many decimal places.
    pub digits: u32,
}

impl Default for TruncConfig {
    fn default() -> Self {
        TruncConfig {
            n0: None,
            cap: 2500,
            digits: 5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TruncStep {
    pub n: usize,
    pub loglik: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TruncResult {
    pub loglik: f64,
    pub n: usize,
    pub converged: bool,
    pub steps: Vec<TruncStep>,
}

impl TruncResult {
    pub fn final_seconds(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.seconds)
    }

    pub fn total_seconds(&self) -> f64 {
        self.steps.iter().map(|s| s.seconds).sum()
    }
}

/// Doubles `N` until two successive values agree or the cap is reached.
pub fn adaptive_loglik(params: &ModelParams, obs: &Observations, cfg: &TruncConfig) -> TruncResult {
    let max_y = obs.y.iter().copied().max().unwrap_or(0) as usize;
    let tol = 0.5 * 10f64.powi(-(cfg.digits as i32));
    let mut n = cfg.n0.unwrap_or((2 * max_y).max(16)).min(cfg.cap).max(max_y);
    let mut steps: Vec<TruncStep> = Vec::new();
    loop {
        let t = Instant::now();
        let ll = truncated_loglik(params, obs, n);
        steps.push(TruncStep {
            n,
            loglik: ll,
            seconds: t.elapsed().as_secs_f64(),
        });
        if steps.len() >= 2 {
            let prev = steps[steps.len() - 2].loglik;
            if ll.is_finite() && (ll - prev).abs() < tol {
                return TruncResult {
                    loglik: ll,
                    n,
                    converged: true,
                    steps,
                };
            }
        }
        if n >= cfg.cap {
            return TruncResult {
                loglik: ll,
                n,
                converged: false,
                steps,
            };
        }
        n = (2 * n).min(cfg.cap);
    }
}
