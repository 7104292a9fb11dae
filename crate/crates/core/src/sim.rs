//! Forward simulation of the integer HMM.
//!
//! The generator is ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64`, so trajectories are reproducible across platforms. Dataset
//! `i` of a batch uses stream `i` of the same seed. Samplers come from
//! `rand_distr`: `Binomial` (inversion for small means, BTPE otherwise),
//! `Poisson` (inversion for small means, rejection otherwise) and `Geometric`.
//! Offspring totals are drawn directly from their closed forms: a binomial for
//! Bernoulli offspring, a Poisson with mean `n delta` for Poisson offspring,
//! and a sum of `n` geometric draws.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, Geometric, Poisson};

use crate::model::{DistSpec, Family, ModelParams, Observations};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    /// Latent counts `n_1..n_K`.
    pub n: Vec<u64>,
    pub y: Vec<u64>,
    pub seed: u64,
}

impl Trajectory {
    pub fn observations(&self) -> Observations {
        Observations::new(self.y.clone())
    }
}

fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("valid poisson").sample(rng) as u64
}

/// Sum of `n` iid draws from `spec`.
fn draw_sum<R: Rng>(rng: &mut R, spec: &DistSpec, n: u64) -> u64 {
    match spec.family {
        Family::Bernoulli => binomial(rng, n, spec.param),
        Family::Poisson => poisson(rng, n as f64 * spec.param),
        Family::Geometric => {
            if spec.param >= 1.0 {
                return 0;
            }
            let g = Geometric::new(spec.param).expect("valid geometric");
            (0..n).map(|_| g.sample(rng)).sum()
        }
    }
}

fn run<R: Rng>(params: &ModelParams, rng: &mut R, seed: u64) -> Trajectory {
    let mut prev = 0u64;
    let mut n = Vec::with_capacity(params.k());
    let mut y = Vec::with_capacity(params.k());
    for k in 0..params.k() {
        let survivors = draw_sum(rng, &params.offspring[k], prev);
        let immigrants = draw_sum(rng, &params.immigration[k], 1);
        let nk = survivors + immigrants;
        n.push(nk);
        y.push(binomial(rng, nk, params.rho[k]));
        prev = nk;
    }
    Trajectory { n, y, seed }
}

/// One trajectory, deterministic in `seed`.
pub fn simulate(params: &ModelParams, seed: u64) -> Trajectory {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    run(params, &mut rng, seed)
}

/// `count` independent trajectories from one seed.
pub fn simulate_many(params: &ModelParams, seed: u64, count: usize) -> Vec<Trajectory> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            run(params, &mut rng, seed)
        })
        .collect()
}
