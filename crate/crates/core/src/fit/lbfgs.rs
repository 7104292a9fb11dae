//! Limited-memory BFGS with a strong-Wolfe line search (bracketing and zoom
//! with safeguarded cubic interpolation).

use std::collections::VecDeque;

#[derive(Clone, Copy, Debug)]
pub struct LbfgsOptions {
    pub history: usize,
    pub max_iter: usize,
    /// Stop when the gradient's Euclidean norm falls below this.
    pub grad_tol: f64,
    /// Stop when `|f_prev - f| / max(|f_prev|, |f|, 1)` falls below this.
    pub rel_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_evals: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            history: 10,
            max_iter: 500,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            c1: 1e-4,
            c2: 0.9,
            max_line_evals: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    GradientNorm,
    RelativeChange,
    MaxIterations,
    LineSearchFailed,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(self, StopReason::GradientNorm | StopReason::RelativeChange)
    }

    pub fn name(self) -> &'static str {
        match self {
            StopReason::GradientNorm => "gradient-norm",
            StopReason::RelativeChange => "relative-change",
            StopReason::MaxIterations => "max-iterations",
            StopReason::LineSearchFailed => "line-search-failed",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Objective returning value and gradient; `None` marks a point outside the
/// domain (treated as `+inf`).
pub trait Objective {
    fn eval(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
}

impl<F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>> Objective for F {
    fn eval(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self(x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + a * di).collect()
}

#[derive(Clone)]
struct Point {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

/// Minimizer of the cubic through two points with known slopes, kept inside
/// the middle 80% of the bracket; otherwise bisection.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let mid = 0.5 * (a + b);
    let guess = if hi.f.is_finite() {
        let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
        let disc = d1 * d1 - lo.slope * hi.slope;
        if disc >= 0.0 {
            let d2 = (b - a).signum() * disc.sqrt();
            b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2)
        } else {
            mid
        }
    } else {
        mid
    };
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    if guess.is_finite() && guess > left + margin && guess < right - margin {
        guess
    } else {
        mid
    }
}

struct LineSearch<'a, O: Objective> {
    obj: &'a mut O,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    opts: &'a LbfgsOptions,
    evals: usize,
}

impl<O: Objective> LineSearch<'_, O> {
    fn probe(&mut self, alpha: f64) -> Point {
        self.evals += 1;
        let xt = axpy(self.x, alpha, self.d);
        match self.obj.eval(&xt) {
            Some((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => {
                let slope = dot(&g, self.d);
                Point { alpha, f, g, slope }
            }
            _ => Point {
                alpha,
                f: f64::INFINITY,
                g: vec![],
                slope: f64::NAN,
            },
        }
    }

    fn sufficient(&self, p: &Point) -> bool {
        p.f <= self.f0 + self.opts.c1 * p.alpha * self.slope0
    }

    fn curvature(&self, p: &Point) -> bool {
        p.slope.abs() <= -self.opts.c2 * self.slope0
    }

    fn run(&mut self, alpha0: f64) -> Option<Point> {
        let mut prev = Point {
            alpha: 0.0,
            f: self.f0,
            g: vec![],
            slope: self.slope0,
        };
        let mut alpha = alpha0;
        let mut first = true;
        while self.evals < self.opts.max_line_evals {
            let cur = self.probe(alpha);
            if !self.sufficient(&cur) || (!first && cur.f >= prev.f) {
                return self.zoom(prev, cur);
            }
            if self.curvature(&cur) {
                return Some(cur);
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev);
            }
            first = false;
            prev = cur;
            alpha *= 2.0;
        }
        (prev.alpha > 0.0).then_some(prev)
    }

    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Option<Point> {
        while self.evals < self.opts.max_line_evals {
            let alpha = interpolate(&lo, &hi);
            if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(1.0) {
                break;
            }
            let cur = self.probe(alpha);
            if !self.sufficient(&cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if self.curvature(&cur) {
                    return Some(cur);
                }
                if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        (lo.alpha > 0.0).then_some(lo)
    }
}

/// Minimizes `obj` from `x0`. Returns `None` if the start is outside the
/// domain.
pub fn minimize<O: Objective>(obj: &mut O, x0: &[f64], opts: &LbfgsOptions) -> Option<LbfgsResult> {
    let (mut f, mut g) = obj.eval(x0)?;
    if !f.is_finite() {
        return None;
    }
    let mut x = x0.to_vec();
    let mut trace = vec![f];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        if norm(&g) < opts.grad_tol {
            stop = StopReason::GradientNorm;
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            q = axpy(&q, -a, y);
            alphas.push(a);
        }
        let gamma = match mem.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0,
        };
        let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &r);
            r = axpy(&r, a - b, s);
        }
        let mut d: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            mem.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let alpha0 = if mem.is_empty() { (1.0 / norm(&g)).min(1.0) } else { 1.0 };

        let mut ls = LineSearch {
            obj,
            x: &x,
            d: &d,
            f0: f,
            slope0: slope,
            opts,
            evals: 0,
        };
        let Some(step) = ls.run(alpha0) else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        iterations = it + 1;
        let x_new = axpy(&x, step.alpha, &d);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if mem.len() == opts.history {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let f_prev = f;
        x = x_new;
        f = step.f;
        g = step.g;
        trace.push(f);
        if (f_prev - f).abs() / f_prev.abs().max(f.abs()).max(1.0) < opts.rel_tol {
            stop = StopReason::RelativeChange;
            break;
        }
    }
    if stop == StopReason::MaxIterations && norm(&g) < opts.grad_tol {
        stop = StopReason::GradientNorm;
    }
    Some(LbfgsResult {
        x,
        f,
        grad: g,
        trace,
        iterations,
        stop,
    })
}
