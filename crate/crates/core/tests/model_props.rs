mod common;

use common::{ln_poisson, random_instance, rng};
use pgfad::fit::{fit, FitProblem, FreeParam, GradMode};
use pgfad::model::{
    grad_log_likelihood, likelihood, log_likelihood, log_likelihood_float, pgf_eval, DistSpec, Family, ModelParams,
    Observations,
};
use pgfad::series::{TaylorSeries, VarTag};
use pgfad::sim::{simulate, simulate_many};
use pgfad::trunc::{adaptive_loglik, transition_row, truncated_loglik, TruncConfig};
use proptest::prelude::*;
use rand::Rng;

const ALL: [Family; 3] = [Family::Bernoulli, Family::Poisson, Family::Geometric];

#[test]
fn exact_likelihood_matches_truncated_forward() {
    for seed in 0..20u64 {
        let (m, obs) = random_instance(seed, 4, 25.0, &ALL);
        let exact = log_likelihood(&m, &obs).unwrap();
        let cap = 2 * obs.y.iter().copied().max().unwrap_or(0) as usize + 150;
        let trunc = truncated_loglik(&m, &obs, cap);
        assert!((exact - trunc).abs() < 1e-8, "seed {seed}: {exact} vs {trunc}");
        let adaptive = adaptive_loglik(&m, &obs, &TruncConfig::default());
        assert!(adaptive.converged);
        assert!((adaptive.loglik - exact).abs() < 1e-5);
    }
}

#[test]
fn float_and_lns_agree_where_float_is_safe() {
    for seed in 100..120u64 {
        let (m, obs) = random_instance(seed, 4, 15.0, &ALL);
        let a = log_likelihood(&m, &obs).unwrap();
        let b = log_likelihood_float(&m, &obs).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "seed {seed}: {a} vs {b}");
    }
}

#[test]
fn likelihood_is_a_probability() {
    for seed in 200..240u64 {
        let (m, obs) = random_instance(seed, 5, 20.0, &ALL);
        let p: f64 = likelihood(&m, &obs).unwrap();
        assert!(p > 0.0 && p <= 1.0, "seed {seed}: {p}");
    }
}

/// Summing the likelihood over every value of the last observation gives the
/// likelihood of the shorter series.
#[test]
fn marginalising_last_step_drops_it() {
    for seed in 300..306u64 {
        let (m, obs) = random_instance(seed, 3, 6.0, &ALL);
        if m.k() < 2 {
            continue;
        }
        let k = m.k();
        let short = ModelParams::new(m.rho[..k - 1].to_vec(), m.offspring[..k - 1].to_vec(), m.immigration[..k - 1].to_vec()).unwrap();
        let want: f64 = likelihood(&short, &Observations::new(obs.y[..k - 1].to_vec())).unwrap();
        let mut total = 0.0;
        for y in 0..80 {
            let mut ys = obs.y.clone();
            ys[k - 1] = y;
            total += likelihood::<f64>(&m, &Observations::new(ys)).unwrap();
        }
        assert!((total - want).abs() < 1e-10 * want.max(1e-300), "seed {seed}: {total} vs {want}");
    }
}

/// More evidence can only lower the probability of the data.
#[test]
fn evidence_is_monotone_in_prefix_length() {
    for seed in 400..420u64 {
        let (m, obs) = random_instance(seed, 5, 20.0, &ALL);
        let mut prev = 0.0;
        for k in 1..=m.k() {
            let sub = ModelParams::new(m.rho[..k].to_vec(), m.offspring[..k].to_vec(), m.immigration[..k].to_vec()).unwrap();
            let ll = log_likelihood(&sub, &Observations::new(obs.y[..k].to_vec())).unwrap();
            assert!(ll <= prev + 1e-12, "seed {seed} k {k}");
            prev = ll;
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 500..515u64 {
        let (m, obs) = random_instance(seed, 4, 15.0, &ALL);
        let g = grad_log_likelihood(&m, &obs).unwrap();
        let t0 = m.theta();
        let k = m.k();
        for (i, gi) in g.grad.iter().enumerate() {
            if i == k {
                assert_eq!(*gi, 0.0);
                continue;
            }
            let h = 1e-6 * t0[i].max(1e-2);
            let eval = |v: f64| {
                let mut t = t0.clone();
                t[i] = v;
                log_likelihood(&m.with_theta(&t).unwrap(), &obs).unwrap()
            };
            let fd = (eval(t0[i] + h) - eval(t0[i] - h)) / (2.0 * h);
            assert!((gi - fd).abs() <= 2e-5 * fd.abs().max(1.0), "seed {seed} i {i}: {gi} vs {fd}");
        }
    }
}

#[test]
fn single_step_is_thinned_poisson() {
    let mut r = rng(9);
    for _ in 0..50 {
        let rho = r.random_range(0.05..0.95);
        let lambda = r.random_range(0.1..60.0);
        let y = r.random_range(0..80);
        let m = ModelParams::homogeneous(1, rho, DistSpec::geometric(0.5), DistSpec::poisson(lambda)).unwrap();
        let ll = log_likelihood(&m, &Observations::new(vec![y])).unwrap();
        assert!((ll - ln_poisson(y, rho * lambda)).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pgfs_are_normalised(family in 0usize..3, p in 0.05f64..0.95, lam in 0.1f64..30.0) {
        let spec = match family {
            0 => DistSpec::bernoulli(p),
            1 => DistSpec::poisson(lam),
            _ => DistSpec::geometric(p),
        };
        let one = TaylorSeries::<f64>::lift_var_with(1.0, 2, VarTag::fresh());
        let s = pgf_eval(&spec, &one).unwrap();
        prop_assert!((s.value() - 1.0).abs() < 1e-12);
        // F'(1) is the mean.
        prop_assert!((s.extract_derivative(1).unwrap() - spec.mean()).abs() < 1e-9 * spec.mean().max(1.0));
    }

    #[test]
    fn transition_rows_are_distributions(n in 0usize..40, which in 0usize..3, p in 0.1f64..0.9, lam in 0.5f64..8.0) {
        let off = match which {
            0 => DistSpec::bernoulli(p),
            1 => DistSpec::poisson(p),
            _ => DistSpec::geometric(0.5 + p / 2.0),
        };
        let m = ModelParams::homogeneous(2, 0.5, off, DistSpec::poisson(lam)).unwrap();
        let row = transition_row(n, 2, &m, 400);
        let mass: f64 = row.iter().sum();
        prop_assert!((mass - 1.0).abs() < 1e-9, "mass {}", mass);
        prop_assert!(row.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn simulation_is_seeded_and_consistent() {
    let m = ModelParams::homogeneous(6, 0.4, DistSpec::poisson(0.8), DistSpec::poisson(7.0)).unwrap();
    assert_eq!(simulate(&m, 3).y, simulate(&m, 3).y);
    let many = simulate_many(&m, 3, 5);
    assert_eq!(many.len(), 5);
    assert_eq!(many, simulate_many(&m, 3, 5));
    for t in &many {
        assert!(t.y.iter().zip(&t.n).all(|(y, n)| y <= n));
    }
    // Distinct streams differ.
    assert!(many.windows(2).any(|w| w[0].y != w[1].y));
}

/// Simulated data has positive likelihood, and the fitted objective is no
/// worse than the truth.
#[test]
fn fit_improves_on_truth() {
    let truth = ModelParams::homogeneous(3, 0.6, DistSpec::poisson(0.9), DistSpec::poisson(6.0)).unwrap();
    let data: Vec<Observations> = simulate_many(&truth, 11, 15).into_iter().map(|t| t.observations()).collect();
    let nll_truth: f64 = -data.iter().map(|o| log_likelihood(&truth, o).unwrap()).sum::<f64>();
    let start = truth.with_theta(&{
        let mut t = truth.theta();
        t[4] = 0.4;
        t[5] = 0.4;
        t
    })
    .unwrap();
    for mode in [GradMode::Exact, GradMode::NumericCentral] {
        let r = fit(&FitProblem::new(start.clone(), data.clone(), FreeParam::each(&start, [4, 5]), mode)).unwrap();
        assert!(r.converged, "{mode:?}: {:?}", r.stop);
        assert!(r.objective <= nll_truth + 1e-9);
        assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
