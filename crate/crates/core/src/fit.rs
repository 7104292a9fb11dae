//! Maximum-likelihood fitting by L-BFGS over reparameterized variables.
//!
//! Every free parameter is mapped to an unconstrained coordinate `z`:
//! probabilities (detection, Bernoulli and geometric parameters) through the
//! logit, nonnegative rates (Poisson) through the log. A free parameter may tie
//! several entries of `theta` together, e.g. one offspring mean shared by all
//! steps.
//!
//! Cost is accounted in series work units (see [`crate::series::work`]), so
//! gradient strategies can be compared in objective-equivalent evaluations
//! independent of wall-clock noise.

pub mod lbfgs;

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{grad_log_likelihood, log_likelihood, Family, ModelParams, Observations, ParamKind};
use crate::series::work;

pub use lbfgs::{LbfgsOptions, StopReason};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradMode {
    Exact,
    NumericCentral,
    NumericForward,
}

impl GradMode {
    pub fn name(self) -> &'static str {
        match self {
            GradMode::Exact => "exact",
            GradMode::NumericCentral => "numeric-central",
            GradMode::NumericForward => "numeric-forward",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Central,
    Forward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    Logit,
    Log,
}

impl Transform {
    pub fn to_theta(self, z: f64) -> f64 {
        match self {
            Transform::Logit => 1.0 / (1.0 + (-z).exp()),
            Transform::Log => z.exp(),
        }
    }

    pub fn to_z(self, theta: f64) -> f64 {
        match self {
            Transform::Logit => (theta / (1.0 - theta)).ln(),
            Transform::Log => theta.ln(),
        }
    }

    /// `d theta / d z`.
    pub fn jacobian(self, z: f64) -> f64 {
        let t = self.to_theta(z);
        match self {
            Transform::Logit => t * (1.0 - t),
            Transform::Log => t,
        }
    }
}

/// One optimization coordinate driving one or more entries of `theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeParam {
    pub name: String,
    pub indices: Vec<usize>,
}

impl FreeParam {
    pub fn single(params: &ModelParams, index: usize) -> FreeParam {
        FreeParam {
            name: params.param_names()[index].clone(),
            indices: vec![index],
        }
    }

    /// One parameter per listed `theta` index.
    pub fn each(params: &ModelParams, indices: impl IntoIterator<Item = usize>) -> Vec<FreeParam> {
        indices.into_iter().map(|i| FreeParam::single(params, i)).collect()
    }

    /// Every `theta` entry that can influence the likelihood.
    pub fn all_live(params: &ModelParams) -> Vec<FreeParam> {
        let k = params.k();
        FreeParam::each(params, (0..3 * k).filter(|&i| i != k))
    }
}

fn transform_for(params: &ModelParams, index: usize) -> Transform {
    let (kind, step) = params.param_kind(index);
    let family = match kind {
        ParamKind::Rho => return Transform::Logit,
        ParamKind::Offspring => params.offspring[step].family,
        ParamKind::Immigration => params.immigration[step].family,
    };
    match family {
        Family::Poisson => Transform::Log,
        Family::Bernoulli | Family::Geometric => Transform::Logit,
    }
}

#[derive(Clone, Debug)]
pub struct FitProblem {
    /// Families and the values of fixed parameters.
    pub model: ModelParams,
    pub datasets: Vec<Observations>,
    pub free: Vec<FreeParam>,
    /// Starting point in unconstrained coordinates; `None` starts from the
    /// template model's values.
    pub init: Option<Vec<f64>>,
    pub grad_mode: GradMode,
    pub options: LbfgsOptions,
}

impl FitProblem {
    pub fn new(model: ModelParams, datasets: Vec<Observations>, free: Vec<FreeParam>, grad_mode: GradMode) -> FitProblem {
        FitProblem {
            model,
            datasets,
            free,
            init: None,
            grad_mode,
            options: LbfgsOptions::default(),
        }
    }

    fn transforms(&self) -> Result<Vec<Transform>> {
        self.free
            .iter()
            .map(|fp| {
                let first = *fp
                    .indices
                    .first()
                    .ok_or_else(|| Error::Precondition(format!("free parameter {} drives nothing", fp.name)))?;
                let t = transform_for(&self.model, first);
                if fp.indices.iter().any(|&i| i >= 3 * self.model.k() || transform_for(&self.model, i) != t) {
                    return Err(Error::Precondition(format!(
                        "free parameter {} ties incompatible entries",
                        fp.name
                    )));
                }
                Ok(t)
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::Precondition("no free parameters".into()));
        }
        if self.datasets.is_empty() {
            return Err(Error::Precondition("no datasets".into()));
        }
        self.transforms()?;
        Ok(())
    }

    /// Unconstrained coordinates of the template model.
    pub fn default_init(&self) -> Result<Vec<f64>> {
        let t = self.transforms()?;
        let theta = self.model.theta();
        let z: Vec<f64> = self
            .free
            .iter()
            .zip(&t)
            .map(|(fp, tr)| tr.to_z(theta[fp.indices[0]]))
            .collect();
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Initialization(format!(
                "starting values lie on a parameter boundary: {z:?}"
            )));
        }
        Ok(z)
    }

    /// Model at unconstrained coordinates `z`.
    pub fn params_at(&self, z: &[f64]) -> Result<ModelParams> {
        let t = self.transforms()?;
        let mut theta = self.model.theta();
        for ((fp, tr), &zi) in self.free.iter().zip(&t).zip(z) {
            for &i in &fp.indices {
                theta[i] = tr.to_theta(zi);
            }
        }
        self.model.with_theta(&theta)
    }

    /// `-sum_d ln p(y_d)` at `z`; `+inf` when any dataset is impossible.
    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        let m = self.params_at(z)?;
        let mut total = 0.0;
        for obs in &self.datasets {
            total -= log_likelihood(&m, obs)?;
        }
        Ok(total)
    }

    /// Objective and its exact gradient in `z`.
    pub fn objective_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let t = self.transforms()?;
        let m = self.params_at(z)?;
        let mut f = 0.0;
        let mut g_theta = vec![0.0; 3 * m.k()];
        for obs in &self.datasets {
            let lg = grad_log_likelihood(&m, obs)?;
            f -= lg.loglik;
            for (a, b) in g_theta.iter_mut().zip(&lg.grad) {
                *a -= b;
            }
        }
        let g = self
            .free
            .iter()
            .zip(&t)
            .zip(z)
            .map(|((fp, tr), &zi)| fp.indices.iter().map(|&i| g_theta[i]).sum::<f64>() * tr.jacobian(zi))
            .collect();
        Ok((f, g))
    }
}

/// Finite-difference gradient with step `h_i = 1e-5 max(1, |x_i|)`.
///
/// A non-finite probe shrinks that coordinate's step tenfold once; a second
/// failure is an error. Returns the gradient and the number of evaluations of
/// `f`; `fx` is reused by the forward scheme and evaluated if absent.
pub fn numeric_gradient(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    fx: Option<f64>,
    scheme: Scheme,
) -> Result<(Vec<f64>, usize)> {
    let mut evals = 0usize;
    let mut eval = |p: &[f64], evals: &mut usize| -> Option<f64> {
        *evals += 1;
        f(p).ok().filter(|v| v.is_finite())
    };
    let f0 = match scheme {
        Scheme::Forward => match fx {
            Some(v) => v,
            None => eval(x, &mut evals).ok_or_else(|| Error::Domain("objective not finite at base point".into()))?,
        },
        Scheme::Central => f64::NAN,
    };
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let mut h = 1e-5 * x[i].abs().max(1.0);
        let mut value = None;
        for _attempt in 0..2 {
            probe[i] = x[i] + h;
            let up = eval(&probe, &mut evals);
            let down = match scheme {
                Scheme::Central => {
                    probe[i] = x[i] - h;
                    eval(&probe, &mut evals)
                }
                Scheme::Forward => Some(f0),
            };
            probe[i] = x[i];
            if let (Some(u), Some(d)) = (up, down) {
                value = Some(match scheme {
                    Scheme::Central => (u - d) / (2.0 * h),
                    Scheme::Forward => (u - d) / h,
                });
                break;
            }
            h *= 0.1;
        }
        grad.push(value.ok_or_else(|| {
            Error::Domain(format!("finite-difference probe of coordinate {i} is not finite"))
        })?);
    }
    Ok((grad, evals))
}

/// Finite-difference gradient of `sum_d ln p(y_d)` with respect to `theta`
/// entries `indices`.
pub fn loglik_numeric_gradient(
    params: &ModelParams,
    datasets: &[Observations],
    indices: &[usize],
    scheme: Scheme,
) -> Result<(Vec<f64>, usize)> {
    let theta = params.theta();
    let x: Vec<f64> = indices.iter().map(|&i| theta[i]).collect();
    let mut f = |v: &[f64]| -> Result<f64> {
        let mut t = theta.clone();
        for (&i, &vi) in indices.iter().zip(v) {
            t[i] = vi;
        }
        let m = params.with_theta(&t)?;
        datasets.iter().map(|o| log_likelihood(&m, o)).sum()
    };
    numeric_gradient(&mut f, &x, None, scheme)
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub theta_hat: ModelParams,
    pub z: Vec<f64>,
    pub objective: f64,
    /// Negative log-likelihood at the start and after each accepted step.
    pub objective_trace: Vec<f64>,
    /// Objective evaluations, including those made by finite differences.
    pub n_obj_evals: usize,
    pub n_grad_evals: usize,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub wall_time: f64,
    /// Series work performed by the whole fit.
    pub work_units: u64,
    /// Series work of a single objective evaluation at the start point.
    pub objective_work_units: u64,
}

impl FitResult {
    /// Total cost measured in objective evaluations.
    pub fn objective_equivalents(&self) -> f64 {
        self.work_units as f64 / self.objective_work_units.max(1) as f64
    }
}

/// Runs the fit. An impossible start point is an [`Error::Initialization`].
pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let z0 = match &problem.init {
        Some(z) => z.clone(),
        None => problem.default_init()?,
    };
    if z0.len() != problem.free.len() || z0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Initialization(format!("bad start vector {z0:?}")));
    }
    let (f0, objective_work_units) = work::measure(|| problem.objective(&z0));
    match f0 {
        Ok(v) if v.is_finite() => {}
        Ok(_) => {
            return Err(Error::Initialization(
                "log-likelihood is -inf at the start point; some dataset is impossible under it".into(),
            ))
        }
        Err(e) => return Err(Error::Initialization(format!("objective failed at the start point: {e}"))),
    }

    let start = Instant::now();
    let units0 = work::units();
    let mut n_obj = 0usize;
    let mut n_grad = 0usize;
    let mode = problem.grad_mode;
    let mut obj = |z: &[f64]| -> Option<(f64, Vec<f64>)> {
        n_grad += 1;
        match mode {
            GradMode::Exact => {
                n_obj += 1;
                problem.objective_grad(z).ok()
            }
            GradMode::NumericCentral | GradMode::NumericForward => {
                n_obj += 1;
                let f = problem.objective(z).ok().filter(|v| v.is_finite())?;
                let scheme = if mode == GradMode::NumericCentral {
                    Scheme::Central
                } else {
                    Scheme::Forward
                };
                let mut fz = |p: &[f64]| problem.objective(p);
                let (g, evals) = numeric_gradient(&mut fz, z, Some(f), scheme).ok()?;
                n_obj += evals;
                Some((f, g))
            }
        }
    };
    let res = lbfgs::minimize(&mut obj, &z0, &problem.options)
        .ok_or_else(|| Error::Initialization("objective or gradient failed at the start point".into()))?;
    let wall_time = start.elapsed().as_secs_f64();
    let work_units = work::units() - units0;
    Ok(FitResult {
        theta_hat: problem.params_at(&res.x)?,
        z: res.x,
        objective: res.f,
        objective_trace: res.trace,
        n_obj_evals: n_obj,
        n_grad_evals: n_grad,
        iterations: res.iterations,
        converged: res.stop.converged(),
        stop: res.stop,
        wall_time,
        work_units,
        objective_work_units,
    })
}
