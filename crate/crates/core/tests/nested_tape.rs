mod common;

use common::{max_rel_err, random_instance, rng, NestedPoly};
use pgfad::lns::LnsScalar;
use pgfad::model::{a_k, grad_log_likelihood, log_likelihood, Family};
use pgfad::nested::{probe_inner_orders, Forward, InnerFn, Scope};
use pgfad::scalar::Scalar;
use pgfad::tape::{record_forward, Tape, Var};
use pgfad::ComposeAlgo;
use rand::Rng;

/// Nested chains up to depth 4 against their symbolic expansion, with
/// derivatives in `x` up to order 3.
#[test]
fn nested_chains_match_symbolic_oracle() {
    let mut r = rng(404);
    for case in 0..300 {
        let depth = 1 + case % 4;
        let np = NestedPoly::random(&mut r, depth);
        let f = np.symbolic();
        let x: f64 = r.random_range(-1.5..1.5);
        let order = r.random_range(0..=3);
        for algo in [ComposeAlgo::Naive, ComposeAlgo::Bk21] {
            let mut cx = Forward::<f64>::new(order).with_compose(algo);
            let xin = cx.input(x);
            let out = np.f_lifted(&mut cx, &xin).unwrap();
            let got = out.to_series(order, cx.tag()).unwrap();
            let want: Vec<f64> = (0..=order).map(|j| f.deriv(j).eval(x)).collect();
            let got_d: Vec<f64> = (0..=order).map(|j| got.extract_derivative(j).unwrap()).collect();
            assert!(max_rel_err(&got_d, &want) < 1e-9, "case {case}: {got_d:?} vs {want:?}");
        }
        let mut lx = Forward::<LnsScalar>::new(order);
        let lin = lx.input(LnsScalar::from_f64(x));
        let lv = np.f_lifted(&mut lx, &lin).unwrap().value().to_real();
        assert!((lv - f.eval(x)).abs() <= 1e-9 * f.eval(x).abs().max(1.0), "case {case} lns");
    }
}

/// Inner evaluations of nested nodes run at the outer order plus `q`.
#[test]
fn inner_order_adds_derivative_count() {
    let mut r = rng(77);
    for _ in 0..50 {
        let np = NestedPoly::random(&mut r, 3);
        let p = r.random_range(0..=3);
        let ((), orders) = probe_inner_orders(|| {
            let mut cx = Forward::<f64>::new(p);
            let x = cx.input(0.3);
            np.f_lifted(&mut cx, &x).unwrap();
        });
        // One evaluation per level; each level's order adds its own q.
        assert_eq!(orders.len(), 3);
        let mut want = p;
        for (level, got) in orders.iter().enumerate() {
            want += np.q[level];
            assert_eq!(*got, want);
        }
    }
}

/// On a tape, a nested node records one inner tape at `q + p + 1`.
#[test]
fn tape_inner_order_is_q_plus_p_plus_one() {
    for p in 0..4 {
        for q in 0..4 {
            let f = |t: &mut Tape<f64>, x: Var, th: &[Var]| {
                let g: &InnerFn<'_, Tape<f64>> = &|c, v, pi| {
                    let e = c.exp(&v)?;
                    c.mul(&pi[0], &e)
                };
                t.nested(g, &x, q, th)
            };
            let (res, orders) = probe_inner_orders(|| record_forward(f, 0.4, &[1.5], p));
            res.unwrap();
            assert_eq!(orders, vec![q + p + 1]);
        }
    }
}

/// `f(x, theta) = theta_0 * [d^q/dv^q (theta_1 v^3 + exp(theta_0 v))](x theta_2) + theta_1 x^2`.
fn test_fn<C: Scope>(c: &mut C, x: &C::Val, th: &[C::Val], q: usize) -> pgfad::Result<C::Val> {
    let g: &InnerFn<'_, C> = &|c, v, pi| {
        let v3 = c.pow(&v, 3.0)?;
        let a = c.mul(&pi[1], &v3)?;
        let av = c.mul(&pi[0], &v)?;
        let e = c.exp(&av)?;
        c.add(&a, &e)
    };
    let arg = c.mul(x, &th[2])?;
    let inner = c.nested(g, &arg, q, th)?;
    let t0 = c.mul(&th[0], &inner)?;
    let x2 = c.mul(x, x)?;
    let t1 = c.mul(&th[1], &x2)?;
    c.add(&t0, &t1)
}

fn forward_derivs(x: f64, th: &[f64], q: usize, order: usize) -> Vec<f64> {
    let mut cx = Forward::<f64>::new(order);
    let xin = cx.input(x);
    let thv: Vec<_> = th.iter().map(|&t| cx.constant(t)).collect();
    let out = test_fn(&mut cx, &xin, &thv, q).unwrap();
    let s = out.to_series(order, cx.tag()).unwrap();
    (0..=order).map(|j| s.extract_derivative(j).unwrap()).collect()
}

/// Parameter adjoints at order `p` hold `d/dtheta d^j/dx^j f`; compare each
/// with a central difference of the forward derivative.
#[test]
fn order_switch_identity_by_finite_differences() {
    let mut r = rng(5150);
    for _ in 0..40 {
        let x = r.random_range(-0.8..0.8);
        let th: Vec<f64> = (0..3).map(|_| r.random_range(0.3..1.2)).collect();
        let q = r.random_range(0..=2);
        let p = r.random_range(0..=3);
        let (tape, out) = record_forward(|t, xv, tv| test_fn(t, &xv, tv, q), x, &th, p).unwrap();
        let adj = tape.backward(out).unwrap();
        for j in 0..=p {
            let d = adj.derivatives(j).unwrap();
            for (i, di) in d.iter().enumerate() {
                let h = 1e-5;
                let mut up = th.clone();
                up[i] += h;
                let mut dn = th.clone();
                dn[i] -= h;
                let fd = (forward_derivs(x, &up, q, p)[j] - forward_derivs(x, &dn, q, p)[j]) / (2.0 * h);
                assert!((di - fd).abs() <= 1e-5 * fd.abs().max(1.0), "q={q} p={p} j={j} i={i}: {di} vs {fd}");
            }
        }
        // The tape's primal matches tape-free evaluation.
        let primal = tape.value(out).unwrap();
        let want = forward_derivs(x, &th, q, p);
        let got: Vec<f64> = (0..=p).map(|j| primal.extract_derivative(j).unwrap()).collect();
        assert!(max_rel_err(&got, &want) < 1e-12);
    }
}

/// The model evaluated on a tape matches the tape-free likelihood, and its
/// gradient matches finite differences.
#[test]
fn tape_model_matches_forward_model() {
    for seed in 0..12u64 {
        let (m, obs) = random_instance(seed, 3, 12.0, &[Family::Bernoulli, Family::Poisson, Family::Geometric]);
        let theta: Vec<LnsScalar> = m.theta().into_iter().map(LnsScalar::from_f64).collect();
        let kk = m.k();
        let (tape, out) = record_forward(
            |t: &mut Tape<LnsScalar>, x, th| a_k(t, &x, kk, &m, &obs, th),
            LnsScalar::ONE,
            &theta,
            0,
        )
        .unwrap();
        let ll = log_likelihood(&m, &obs).unwrap();
        let tv = tape.value_of(&out).unwrap().ln_abs();
        assert!((tv - ll).abs() < 1e-10, "seed {seed}: {tv} vs {ll}");
        let g = grad_log_likelihood(&m, &obs).unwrap();
        assert!((g.loglik - ll).abs() < 1e-10);
        let t0 = m.theta();
        for (i, gi) in g.grad.iter().enumerate() {
            let h = 1e-6 * t0[i].abs().max(1e-2);
            let eval = |v: f64| {
                let mut t = t0.clone();
                t[i] = v;
                log_likelihood(&m.with_theta(&t).unwrap(), &obs).unwrap()
            };
            let fd = (eval(t0[i] + h) - eval(t0[i] - h)) / (2.0 * h);
            assert!((gi - fd).abs() <= 1e-5 * fd.abs().max(1.0), "seed {seed} i {i}: {gi} vs {fd}");
        }
    }
}
