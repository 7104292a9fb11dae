//! Experiment configurations shared by the benchmarks, the CLI and the tests.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};

use crate::fit::FreeParam;
use crate::model::{DistSpec, Family, ModelParams, Observations};
use crate::sim::simulate_many;

/// Immigration means of the accuracy model.
pub const ACCURACY_LAMBDAS: [f64; 5] = [12.5, 55.0, 105.0, 75.0, 20.0];

/// Immigration rates swept by the stability and scaling benchmarks.
pub const LAMBDA_GRID: [f64; 7] = [10.0, 25.0, 50.0, 100.0, 250.0, 500.0, 1000.0];

/// Steps in the scaling model.
pub const SCALING_K: usize = 4;

/// Realizations per learning trial.
pub const LEARNING_REALIZATIONS: usize = 20;

/// Starting offspring parameter for every learning fit.
pub const LEARNING_START_DELTA: f64 = 0.5;

/// `K = 5`, `rho = 0.5`, offspring `family(delta)` and immigration
/// `Poisson(ACCURACY_LAMBDAS)`.
pub fn accuracy_model(family: Family, delta: f64) -> ModelParams {
    ModelParams::new(
        vec![0.5; 5],
        vec![DistSpec::new(family, delta); 5],
        ACCURACY_LAMBDAS.iter().map(|&l| DistSpec::poisson(l)).collect(),
    )
    .expect("valid accuracy model")
}

/// `K = SCALING_K`, `rho = 0.5`, offspring `family(0.5)`, immigration
/// `Poisson(lambda)`.
pub fn scaling_model(family: Family, lambda: f64) -> ModelParams {
    ModelParams::homogeneous(SCALING_K, 0.5, DistSpec::new(family, 0.5), DistSpec::poisson(lambda))
        .expect("valid scaling model")
}

#[derive(Clone, Debug)]
pub struct LearningSetup {
    pub truth: ModelParams,
    /// Template for the fit: true detection and immigration, offspring at
    /// [`LEARNING_START_DELTA`].
    pub start: ModelParams,
    pub datasets: Vec<Observations>,
    pub free: Vec<FreeParam>,
}

fn learning_base(k: usize, offspring: Vec<DistSpec>) -> ModelParams {
    ModelParams::new(vec![0.6; k], offspring, vec![DistSpec::poisson(5.0); k]).expect("valid learning model")
}

fn finish(truth: ModelParams, seed: u64, free: impl FnOnce(&ModelParams) -> Vec<FreeParam>) -> LearningSetup {
    let k = truth.k();
    let datasets = simulate_many(&truth, seed, LEARNING_REALIZATIONS)
        .into_iter()
        .map(|t| t.observations())
        .collect();
    let start = learning_base(k, vec![DistSpec::poisson(LEARNING_START_DELTA); k]);
    let free = free(&start);
    LearningSetup {
        truth,
        start,
        datasets,
        free,
    }
}

/// Time-varying `Poisson(delta_k)` offspring with `delta_k ~ Exp(1)`; every
/// `delta_k` is free.
pub fn learning_time_varying(k: usize, seed: u64) -> LearningSetup {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_de17a);
    let exp = Exp::new(1.0).expect("valid rate");
    let deltas: Vec<DistSpec> = (0..k).map(|_| DistSpec::poisson(exp.sample(&mut rng))).collect();
    finish(learning_base(k, deltas), seed, |m| FreeParam::each(m, k..2 * k))
}

/// Constant `Poisson(1.2)` offspring; a single `delta` tied across steps.
pub fn learning_single_delta(k: usize, seed: u64) -> LearningSetup {
    finish(learning_base(k, vec![DistSpec::poisson(1.2); k]), seed, |_| {
        vec![FreeParam {
            name: "delta".into(),
            indices: (k..2 * k).collect(),
        }]
    })
}
