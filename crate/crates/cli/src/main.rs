mod bench;
mod config;
mod obsfile;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pgfad::fit::{fit, loglik_numeric_gradient, FitProblem, FreeParam, GradMode, Scheme};
use pgfad::model::{grad_log_likelihood, ModelParams, Observations, ParamKind};
use pgfad::protocols::LAMBDA_GRID;
use pgfad::sim::simulate_many;
use serde::Serialize;

use bench::{BenchConfig, Method, Suite};
use config::ModelConfig;

#[derive(Parser)]
#[command(name = "pgfad", version, about = "Exact likelihoods, gradients and MLE for integer HMMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GradArg {
    Exact,
    Numeric,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate observation datasets from a model.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        datasets: usize,
        /// Observation file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write latent populations (header `k,n`).
        #[arg(long)]
        latent: Option<PathBuf>,
    },
    /// Print a model configuration in canonical form.
    Config {
        #[arg(long)]
        config: PathBuf,
    },
    /// Log-likelihood of each dataset.
    Loglik {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, value_enum, default_value = "ad-lns")]
        method: Method,
        #[arg(long, default_value_t = 2500)]
        trunc_cap: usize,
    },
    /// Gradient of the total log-likelihood over all datasets.
    Grad {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        mode: GradArg,
    },
    /// Maximum-likelihood fit starting from the configured model.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        grad: GradArg,
        /// Comma-separated free parameters: `delta_3`, `delta` (one per
        /// step) or `delta:tied` (one shared value). Defaults to every
        /// parameter that affects the likelihood.
        #[arg(long)]
        free: Option<String>,
        /// Objective trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a benchmark suite, writing CSV files into a directory.
    Bench {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        out: PathBuf,
        /// Immigration means for inference-scaling.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Offspring parameters for accuracy-sweep.
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        /// Numbers of steps for learning.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',', value_enum)]
        methods: Option<Vec<Method>>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2500)]
        trunc_cap: usize,
    },
}

fn load_model(path: &Path) -> Result<ModelParams> {
    ModelConfig::load(path)?.to_params().with_context(|| format!("in {}", path.display()))
}

fn load_obs(path: &Path, model: &ModelParams) -> Result<Vec<Observations>> {
    let data = obsfile::load(path)?;
    for (i, d) in data.iter().enumerate() {
        if d.k() != model.k() {
            bail!("dataset {i} has {} steps but the model has K = {}", d.k(), model.k());
        }
    }
    Ok(data)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn kind_name(kind: ParamKind) -> &'static str {
    match kind {
        ParamKind::Rho => "rho",
        ParamKind::Offspring => "delta",
        ParamKind::Immigration => "lambda",
    }
}

/// Parses the `--free` specification.
fn parse_free(spec: &str, model: &ModelParams) -> Result<Vec<FreeParam>> {
    let names = model.param_names();
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (base, tied) = match item.split_once(':') {
            Some((b, "tied")) => (b, true),
            Some((_, other)) => bail!("unknown modifier '{other}' in '{item}'"),
            None => (item, false),
        };
        if let Some(i) = names.iter().position(|n| n == base) {
            if tied {
                bail!("'{item}': only a parameter group can be tied");
            }
            out.push(FreeParam::single(model, i));
            continue;
        }
        let group: Vec<usize> = (0..names.len())
            .filter(|&i| kind_name(model.param_kind(i).0) == base)
            .collect();
        if group.is_empty() {
            bail!("unknown parameter '{base}'; expected rho, delta, lambda or e.g. delta_2");
        }
        if tied {
            out.push(FreeParam {
                name: base.to_string(),
                indices: group,
            });
        } else {
            out.extend(FreeParam::each(model, group));
        }
    }
    if out.is_empty() {
        bail!("no free parameters given");
    }
    let mut seen = std::collections::HashSet::new();
    for f in &out {
        for &i in &f.indices {
            if !seen.insert(i) {
                bail!("parameter {} listed more than once", names[i]);
            }
        }
    }
    Ok(out)
}

fn cmd_simulate(config: &Path, seed: u64, count: usize, out: Option<&Path>, latent: Option<&Path>) -> Result<()> {
    let model = load_model(config)?;
    if count == 0 {
        bail!("--datasets must be at least 1");
    }
    let runs = simulate_many(&model, seed, count);
    let y: Vec<Observations> = runs.iter().map(|t| t.observations()).collect();
    write_out(out, &obsfile::write(&y))?;
    if let Some(p) = latent {
        let n: Vec<Vec<u64>> = runs.iter().map(|t| t.n.clone()).collect();
        write_out(Some(p), &obsfile::write_blocks(&n, "n"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LoglikRow {
    dataset: usize,
    method: &'static str,
    loglik: Option<f64>,
    seconds: f64,
    status: String,
    trunc_n: Option<usize>,
}

fn cmd_loglik(config: &Path, obs: &Path, method: Method, cap: usize) -> Result<ExitCode> {
    let model = load_model(config)?;
    let data = load_obs(obs, &model)?;
    let mut w = csv::Writer::from_writer(std::io::stdout());
    let mut all_ok = true;
    for (i, d) in data.iter().enumerate() {
        let o = bench::run_method(method, &model, d, cap);
        if !o.ok() {
            all_ok = false;
            eprintln!("dataset {i}: {}", o.status);
        }
        w.serialize(LoglikRow {
            dataset: i,
            method: method.name(),
            loglik: o.loglik,
            seconds: o.seconds,
            status: o.status,
            trunc_n: o.trunc_n,
        })?;
    }
    w.flush()?;
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_grad(config: &Path, obs: &Path, mode: GradArg) -> Result<()> {
    let model = load_model(config)?;
    let data = load_obs(obs, &model)?;
    let n = 3 * model.k();
    let grad = match mode {
        GradArg::Exact => {
            let mut total = vec![0.0; n];
            for d in &data {
                let g = grad_log_likelihood(&model, d)?;
                for (t, v) in total.iter_mut().zip(&g.grad) {
                    *t += v;
                }
            }
            total
        }
        GradArg::Numeric => {
            let idx: Vec<usize> = (0..n).collect();
            loglik_numeric_gradient(&model, &data, &idx, Scheme::Central)?.0
        }
    };
    let mut out = String::from("param,grad\n");
    for (name, g) in model.param_names().iter().zip(&grad) {
        let _ = writeln!(out, "{name},{g}");
    }
    print!("{out}");
    Ok(())
}

#[derive(Serialize)]
struct FitSummary {
    grad_mode: &'static str,
    converged: bool,
    stop: &'static str,
    objective: f64,
    iterations: usize,
    n_obj_evals: usize,
    n_grad_evals: usize,
    objective_equivalents: f64,
    wall_time: f64,
    free: Vec<String>,
    theta: serde_json::Map<String, serde_json::Value>,
}

fn cmd_fit(config: &Path, obs: &Path, grad: GradArg, free: Option<&str>, trace: Option<&Path>) -> Result<()> {
    let model = load_model(config)?;
    let data = load_obs(obs, &model)?;
    let free = match free {
        Some(s) => parse_free(s, &model)?,
        None => FreeParam::all_live(&model),
    };
    let mode = match grad {
        GradArg::Exact => GradMode::Exact,
        GradArg::Numeric => GradMode::NumericCentral,
    };
    let free_names = free.iter().map(|f| f.name.clone()).collect();
    let r = fit(&FitProblem::new(model, data, free, mode))?;
    let mut theta = serde_json::Map::new();
    for (name, v) in r.theta_hat.param_names().into_iter().zip(r.theta_hat.theta()) {
        theta.insert(name, v.into());
    }
    let summary = FitSummary {
        grad_mode: mode.name(),
        converged: r.converged,
        stop: r.stop.name(),
        objective: r.objective,
        iterations: r.iterations,
        n_obj_evals: r.n_obj_evals,
        n_grad_evals: r.n_grad_evals,
        objective_equivalents: r.objective_equivalents(),
        wall_time: bench::micros(r.wall_time),
        free: free_names,
        theta,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(p) = trace {
        let mut text = String::from("iteration,objective\n");
        for (i, f) in r.objective_trace.iter().enumerate() {
            let _ = writeln!(text, "{i},{f}");
        }
        write_out(Some(p), &text)?;
    }
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PGFAD_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("PGFAD_THREADS='{v}' is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    init_threads()?;
    match cli.command {
        Command::Simulate {
            config,
            seed,
            datasets,
            out,
            latent,
        } => cmd_simulate(&config, seed, datasets, out.as_deref(), latent.as_deref())?,
        Command::Config { config } => {
            let canon = ModelConfig::from_params(&load_model(&config)?)?;
            print!("{}", canon.to_toml()?);
        }
        Command::Loglik {
            config,
            obs,
            method,
            trunc_cap,
        } => return cmd_loglik(&config, &obs, method, trunc_cap),
        Command::Grad { config, obs, mode } => cmd_grad(&config, &obs, mode)?,
        Command::Fit {
            config,
            obs,
            grad,
            free,
            trace,
        } => cmd_fit(&config, &obs, grad, free.as_deref(), trace.as_deref())?,
        Command::Bench {
            suite,
            out,
            lambdas,
            deltas,
            ks,
            methods,
            seed,
            trunc_cap,
        } => {
            let cfg = BenchConfig {
                suite,
                lambdas: lambdas.unwrap_or_else(|| LAMBDA_GRID.to_vec()),
                deltas: deltas.unwrap_or_else(|| (1..=19).map(|i| i as f64 * 0.05).collect()),
                ks: ks.unwrap_or_else(|| vec![2, 4, 6, 8, 10]),
                methods: methods.unwrap_or_else(|| Method::ALL.to_vec()),
                seed,
                cap: trunc_cap,
            };
            for f in bench::run(&cfg, &out)? {
                eprintln!("wrote {}", out.join(f).display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
