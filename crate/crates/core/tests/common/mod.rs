#![allow(dead_code)]

use pgfad::model::{DistSpec, Family, ModelParams, Observations};
use pgfad::nested::{InnerFn, Scope};
use pgfad::scalar::Scalar;
use pgfad::sim::simulate;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// `ln Poisson(y; mean)`.
pub fn ln_poisson(y: u64, mean: f64) -> f64 {
    y as f64 * mean.ln() - mean - libm::lgamma(y as f64 + 1.0)
}

/// `|a - b| <= max(rel |b|, floor)`.
pub fn rel_close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= (rel * b.abs()).max(floor)
}

/// Random model with every step's expected population at most `max_pop`.
pub fn random_model(r: &mut ChaCha20Rng, max_k: usize, max_pop: f64, families: &[Family]) -> ModelParams {
    loop {
        let k = r.random_range(1..=max_k);
        let rho = (0..k).map(|_| r.random_range(0.15..0.9)).collect();
        let offspring = (0..k)
            .map(|_| {
                let fam = families[r.random_range(0..families.len())];
                let p = match fam {
                    Family::Geometric => r.random_range(0.4..0.9),
                    _ => r.random_range(0.1..0.9),
                };
                DistSpec::new(fam, p)
            })
            .collect();
        let immigration = (0..k).map(|_| DistSpec::poisson(r.random_range(0.5..20.0))).collect();
        let m = ModelParams::new(rho, offspring, immigration).unwrap();
        if m.expected_population().iter().all(|&e| e <= max_pop) {
            return m;
        }
    }
}

/// Random model plus data simulated from it.
pub fn random_instance(seed: u64, max_k: usize, max_pop: f64, families: &[Family]) -> (ModelParams, Observations) {
    let mut r = rng(seed);
    let m = random_model(&mut r, max_k, max_pop, families);
    let obs = simulate(&m, seed.wrapping_mul(31).wrapping_add(7)).observations();
    (m, obs)
}

/// Dense polynomial with exact small-integer coefficients, lowest degree first.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.0.len().max(o.0.len());
        Poly((0..n)
            .map(|i| self.0.get(i).unwrap_or(&0.0) + o.0.get(i).unwrap_or(&0.0))
            .collect())
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        if self.0.is_empty() || o.0.is_empty() {
            return Poly(vec![]);
        }
        let mut out = vec![0.0; self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn deriv(&self, q: usize) -> Poly {
        let mut p = self.clone();
        for _ in 0..q {
            p = Poly(p.0.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect());
        }
        p
    }

    /// `self(inner(x))`.
    pub fn compose(&self, inner: &Poly) -> Poly {
        self.0
            .iter()
            .rev()
            .fold(Poly(vec![]), |acc, c| acc.mul(inner).add(&Poly(vec![*c])))
    }

    pub fn random(r: &mut ChaCha20Rng, max_degree: usize) -> Poly {
        let d = r.random_range(0..=max_degree);
        Poly((0..=d).map(|_| r.random_range(-3i32..=3) as f64).collect())
    }

    /// Horner evaluation on lifted values.
    pub fn lifted<C: Scope>(&self, c: &mut C, w: &C::Val) -> pgfad::Result<C::Val> {
        let mut acc = c.constant(C::Scalar::zero());
        for &coef in self.0.iter().rev() {
            let k = c.constant(C::Scalar::from_f64(coef));
            let m = c.mul(&acc, w)?;
            acc = c.add(&m, &k)?;
        }
        Ok(acc)
    }
}

/// Nested chain of polynomial derivative nodes:
/// `g_L = P_L`, `g_j(w) = P_j(w) * g_{j+1}^{(q_{j+1})}(R_j(w))`, and
/// `f = g_1^{(q_1)}`.
#[derive(Clone, Debug)]
pub struct NestedPoly {
    pub p: Vec<Poly>,
    pub r: Vec<Poly>,
    pub q: Vec<usize>,
}

impl NestedPoly {
    pub fn random(rng: &mut ChaCha20Rng, depth: usize) -> NestedPoly {
        NestedPoly {
            p: (0..depth).map(|_| Poly::random(rng, 2)).collect(),
            r: (0..depth).map(|_| Poly::random(rng, 2)).collect(),
            q: (0..depth).map(|_| rng.random_range(0..=2)).collect(),
        }
    }

    fn g_symbolic(&self, j: usize) -> Poly {
        if j + 1 == self.p.len() {
            return self.p[j].clone();
        }
        let inner = self.g_symbolic(j + 1).deriv(self.q[j + 1]);
        self.p[j].mul(&inner.compose(&self.r[j]))
    }

    /// `f` as an explicit polynomial.
    pub fn symbolic(&self) -> Poly {
        self.g_symbolic(0).deriv(self.q[0])
    }

    pub fn g_lifted<C: Scope>(&self, c: &mut C, w: &C::Val, j: usize) -> pgfad::Result<C::Val> {
        let pj = self.p[j].lifted(c, w)?;
        if j + 1 == self.p.len() {
            return Ok(pj);
        }
        let rj = self.r[j].lifted(c, w)?;
        let g: &InnerFn<'_, C> = &|c2, v, _| self.g_lifted(c2, &v, j + 1);
        let phi = c.nested(g, &rj, self.q[j + 1], &[])?;
        c.mul(&pj, &phi)
    }

    pub fn f_lifted<C: Scope>(&self, c: &mut C, x: &C::Val) -> pgfad::Result<C::Val> {
        let g: &InnerFn<'_, C> = &|c2, v, _| self.g_lifted(c2, &v, 0);
        c.nested(g, x, self.q[0], &[])
    }

    /// Total order of differentiation, as nested nodes see it.
    pub fn total_q(&self) -> usize {
        self.q.iter().sum()
    }
}

/// `max_i |a_i - b_i| / max(1, |b_i|)`.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}
