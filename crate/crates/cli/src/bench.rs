//! Benchmark suites. Independent cells run on a rayon pool; rows are
//! collected in grid order before writing, so output order never depends on
//! scheduling.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use pgfad::fit::{fit, FitProblem, GradMode};
use pgfad::model::{log_likelihood, log_likelihood_float, Family, ModelParams, Observations};
use pgfad::protocols::{
    accuracy_model, learning_single_delta, learning_time_varying, scaling_model, LearningSetup,
};
use pgfad::sim::simulate;
use pgfad::trunc::{adaptive_loglik, TruncConfig};
use pgfad::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    AdLns,
    AdFloat,
    Trunc,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::AdLns, Method::AdFloat, Method::Trunc];

    pub fn name(self) -> &'static str {
        match self {
            Method::AdLns => "ad-lns",
            Method::AdFloat => "ad-float",
            Method::Trunc => "trunc",
        }
    }
}

/// Seconds rounded to microseconds.
pub fn micros(secs: f64) -> f64 {
    (secs * 1e6).round() / 1e6
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub loglik: Option<f64>,
    /// For the truncated method, the final iteration only.
    pub seconds: f64,
    pub total_seconds: f64,
    pub status: String,
    pub trunc_n: Option<usize>,
}

impl Outcome {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn status_of(e: &Error) -> String {
    match e {
        Error::NumericOverflow(_) => "numeric-overflow".into(),
        Error::ZeroLikelihood => "zero-likelihood".into(),
        other => format!("error: {other}"),
    }
}

pub fn run_method(method: Method, params: &ModelParams, obs: &Observations, cap: usize) -> Outcome {
    let start = Instant::now();
    match method {
        Method::AdLns | Method::AdFloat => {
            let r = if method == Method::AdLns {
                log_likelihood(params, obs)
            } else {
                log_likelihood_float(params, obs)
            };
            let secs = micros(start.elapsed().as_secs_f64());
            let (loglik, status) = match r {
                Ok(v) if v.is_finite() => (Some(v), "ok".to_string()),
                Ok(v) => (Some(v), "zero-likelihood".to_string()),
                Err(e) => (None, status_of(&e)),
            };
            Outcome {
                loglik,
                seconds: secs,
                total_seconds: secs,
                status,
                trunc_n: None,
            }
        }
        Method::Trunc => {
            let cfg = TruncConfig {
                cap,
                ..TruncConfig::default()
            };
            let r = adaptive_loglik(params, obs, &cfg);
            Outcome {
                loglik: Some(r.loglik),
                seconds: micros(r.final_seconds()),
                total_seconds: micros(r.total_seconds()),
                status: if r.converged { "ok" } else { "not-converged" }.into(),
                trunc_n: Some(r.n),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceRow {
    pub family: String,
    pub method: String,
    pub lambda: f64,
    pub total_order: usize,
    pub loglik: Option<f64>,
    pub seconds: f64,
    pub total_seconds: f64,
    pub status: String,
    pub trunc_n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub family: String,
    pub method: String,
    pub delta: f64,
    pub loglik: Option<f64>,
    pub seconds: f64,
    pub status: String,
    pub trunc_n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRow {
    pub protocol: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub mode: String,
    pub objective: f64,
    pub objective_equivalents: f64,
    pub n_obj_evals: usize,
    pub n_grad_evals: usize,
    pub iterations: usize,
    pub seconds: f64,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub protocol: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub mode: String,
    pub iteration: usize,
    pub objective: f64,
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[cfg(test)]
pub fn from_csv<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.context("malformed CSV row")).collect()
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, to_csv(rows)?).with_context(|| format!("writing {}", path.display()))
}

const FAMILIES: [Family; 2] = [Family::Bernoulli, Family::Poisson];

pub struct InferenceOptions<'a> {
    pub lambdas: &'a [f64],
    pub methods: &'a [Method],
    pub seed: u64,
    pub cap: usize,
}

pub fn inference_scaling(opts: &InferenceOptions<'_>) -> Vec<InferenceRow> {
    let cells: Vec<(Family, f64, Method)> = FAMILIES
        .iter()
        .flat_map(|&f| {
            opts.lambdas
                .iter()
                .flat_map(move |&l| opts.methods.iter().map(move |&m| (f, l, m)))
        })
        .collect();
    cells
        .par_iter()
        .map(|&(family, lambda, method)| {
            let m = scaling_model(family, lambda);
            let obs = simulate(&m, opts.seed).observations();
            let o = run_method(method, &m, &obs, opts.cap);
            InferenceRow {
                family: family.name().into(),
                method: method.name().into(),
                lambda,
                total_order: obs.total_order(),
                loglik: o.loglik,
                seconds: o.seconds,
                total_seconds: o.total_seconds,
                status: o.status,
                trunc_n: o.trunc_n,
            }
        })
        .collect()
}

pub struct AccuracyOptions<'a> {
    pub deltas: &'a [f64],
    pub methods: &'a [Method],
    pub seed: u64,
    pub cap: usize,
}

pub fn accuracy_sweep(opts: &AccuracyOptions<'_>) -> Vec<AccuracyRow> {
    let cells: Vec<(Family, f64, Method)> = FAMILIES
        .iter()
        .flat_map(|&f| {
            opts.deltas
                .iter()
                .flat_map(move |&d| opts.methods.iter().map(move |&m| (f, d, m)))
        })
        .collect();
    cells
        .par_iter()
        .map(|&(family, delta, method)| {
            let obs = simulate(&accuracy_model(family, 0.5), opts.seed).observations();
            let o = run_method(method, &accuracy_model(family, delta), &obs, opts.cap);
            AccuracyRow {
                family: family.name().into(),
                method: method.name().into(),
                delta,
                loglik: o.loglik,
                seconds: o.seconds,
                status: o.status,
                trunc_n: o.trunc_n,
            }
        })
        .collect()
}

pub struct LearningOptions<'a> {
    pub ks: &'a [usize],
    pub seed: u64,
}

fn learning_cell(protocol: &str, k: usize, setup: &LearningSetup, mode: GradMode) -> (LearningRow, Vec<TraceRow>) {
    let p = FitProblem::new(setup.start.clone(), setup.datasets.clone(), setup.free.clone(), mode);
    let start = Instant::now();
    match fit(&p) {
        Ok(r) => {
            let traces = r
                .objective_trace
                .iter()
                .enumerate()
                .map(|(i, &f)| TraceRow {
                    protocol: protocol.into(),
                    k,
                    mode: mode.name().into(),
                    iteration: i,
                    objective: f,
                })
                .collect();
            let row = LearningRow {
                protocol: protocol.into(),
                k,
                mode: mode.name().into(),
                objective: r.objective,
                objective_equivalents: r.objective_equivalents(),
                n_obj_evals: r.n_obj_evals,
                n_grad_evals: r.n_grad_evals,
                iterations: r.iterations,
                seconds: micros(r.wall_time),
                status: r.stop.name().into(),
            };
            (row, traces)
        }
        Err(e) => (
            LearningRow {
                protocol: protocol.into(),
                k,
                mode: mode.name().into(),
                objective: f64::NAN,
                objective_equivalents: f64::NAN,
                n_obj_evals: 0,
                n_grad_evals: 0,
                iterations: 0,
                seconds: micros(start.elapsed().as_secs_f64()),
                status: status_of(&e),
            },
            vec![],
        ),
    }
}

pub fn learning(opts: &LearningOptions<'_>) -> (Vec<LearningRow>, Vec<TraceRow>) {
    let mut cells = Vec::new();
    for &k in opts.ks {
        for protocol in ["single-delta", "time-varying"] {
            for mode in [GradMode::Exact, GradMode::NumericCentral] {
                cells.push((protocol, k, mode));
            }
        }
    }
    let out: Vec<(LearningRow, Vec<TraceRow>)> = cells
        .par_iter()
        .map(|&(protocol, k, mode)| {
            let seed = opts.seed.wrapping_add(k as u64);
            let setup = if protocol == "single-delta" {
                learning_single_delta(k, seed)
            } else {
                learning_time_varying(k, seed)
            };
            learning_cell(protocol, k, &setup, mode)
        })
        .collect();
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for (r, t) in out {
        rows.push(r);
        traces.extend(t);
    }
    (rows, traces)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    InferenceScaling,
    AccuracySweep,
    Learning,
}

pub struct BenchConfig {
    pub suite: Suite,
    pub lambdas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub ks: Vec<usize>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub cap: usize,
}

/// Runs a suite and writes its CSV files into `out`; returns the file names.
pub fn run(cfg: &BenchConfig, out: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match cfg.suite {
        Suite::InferenceScaling => {
            let rows = inference_scaling(&InferenceOptions {
                lambdas: &cfg.lambdas,
                methods: &cfg.methods,
                seed: cfg.seed,
                cap: cfg.cap,
            });
            write_csv(out, "inference_scaling.csv", &rows)?;
            Ok(vec!["inference_scaling.csv".into()])
        }
        Suite::AccuracySweep => {
            let rows = accuracy_sweep(&AccuracyOptions {
                deltas: &cfg.deltas,
                methods: &cfg.methods,
                seed: cfg.seed,
                cap: cfg.cap,
            });
            write_csv(out, "accuracy_sweep.csv", &rows)?;
            Ok(vec!["accuracy_sweep.csv".into()])
        }
        Suite::Learning => {
            let (rows, traces) = learning(&LearningOptions {
                ks: &cfg.ks,
                seed: cfg.seed,
            });
            write_csv(out, "learning.csv", &rows)?;
            write_csv(out, "learning_traces.csv", &traces)?;
            Ok(vec!["learning.csv".into(), "learning_traces.csv".into()])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            AccuracyRow {
                family: "bernoulli".into(),
                method: "ad-lns".into(),
                delta: 0.45,
                loglik: Some(-15.246936930621104),
                seconds: micros(0.001234567),
                status: "ok".into(),
                trunc_n: None,
            },
            AccuracyRow {
                family: "poisson".into(),
                method: "ad-float".into(),
                delta: 0.5,
                loglik: None,
                seconds: 0.0,
                status: "numeric-overflow".into(),
                trunc_n: Some(64),
            },
        ];
        let text = to_csv(&rows).unwrap();
        let back: Vec<AccuracyRow> = from_csv(&text).unwrap();
        assert_eq!(back, rows);
        assert_eq!(to_csv(&back).unwrap(), text);
        assert!(text.starts_with("family,method,delta,loglik,seconds,status,trunc_n\n"));
    }

    #[test]
    fn accuracy_at_truth_agrees() {
        let rows = accuracy_sweep(&AccuracyOptions {
            deltas: &[0.5],
            methods: &Method::ALL,
            seed: 1,
            cap: 2500,
        });
        for family in ["bernoulli", "poisson"] {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.family == family && r.status == "ok")
                .map(|r| r.loglik.unwrap())
                .collect();
            assert!(vals.len() >= 2);
            for v in &vals {
                assert!((v - vals[0]).abs() <= 1e-5, "{family}: {vals:?}");
            }
        }
    }

    #[test]
    fn inference_rows_cover_grid() {
        let lambdas = [10.0, 25.0];
        let rows = inference_scaling(&InferenceOptions {
            lambdas: &lambdas,
            methods: &Method::ALL,
            seed: 3,
            cap: 2500,
        });
        assert_eq!(rows.len(), 2 * lambdas.len() * 3);
        for f in ["bernoulli", "poisson"] {
            for l in lambdas {
                for m in Method::ALL {
                    assert!(rows.iter().any(|r| r.family == f && r.lambda == l && r.method == m.name()));
                }
            }
        }
    }
}
