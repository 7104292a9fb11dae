//! Forward-over-reverse AD with series-valued adjoints.
//!
//! A [`Tape`] records each lifted operation together with its primal value (a
//! series in the tape's input `x`). [`Tape::backward`] sweeps it in reverse
//! topological order, multiplying adjoints by lifted local partials, so that
//! the adjoint of parameter `theta_i` is the series `<df/dtheta_i, dx>_p`.
//!
//! Nested derivative nodes record an inner tape of their function `g` at
//! order `q + p + 1`. One inner recording serves both partials:
//!
//! * with respect to the argument `v`: `d^{q+1} g / dv^{q+1}`, the inner output
//!   shifted by `q + 1`, composed onto the argument;
//! * with respect to the bundle `pi`: one recursive reverse sweep of the inner
//!   tape gives `dg/dpi_i` for every `i` at once, which is shifted by `q`,
//!   truncated to order `p` and composed onto the argument.
//!
//! The bundle must not depend on `x`; this is checked when the node is
//! recorded.

use crate::error::{Error, Result};
use crate::nested::{record_inner_order, InnerFn, Scope, Value};
use crate::scalar::Scalar;
use crate::series::{ComposeAlgo, TaylorSeries, VarTag};

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: VarTag,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Parameter,
    Constant,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    Exp,
    Log,
    Pow,
    Nested,
}

#[derive(Debug)]
enum Op<S> {
    Input,
    Parameter,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, S),
    Exp(usize),
    Log(usize),
    Pow(usize, f64),
    Nested(Box<NestedRecord<S>>),
}

#[derive(Debug)]
struct NestedRecord<S> {
    arg: usize,
    pi: Vec<usize>,
    q: usize,
    inner: Tape<S>,
    inner_out: usize,
}

#[derive(Debug)]
struct Node<S> {
    op: Op<S>,
    primal: Value<S>,
    /// Some parameter reaches this node.
    param_dep: bool,
    /// The input reaches this node.
    input_dep: bool,
}

impl<S> Node<S> {
    fn preds(&self) -> Vec<usize> {
        match &self.op {
            Op::Input | Op::Parameter | Op::Constant => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
            Op::Scale(a, _) | Op::Exp(a) | Op::Log(a) | Op::Pow(a, _) => vec![*a],
            Op::Nested(rec) => {
                let mut p = vec![rec.arg];
                p.extend(&rec.pi);
                p
            }
        }
    }
}

#[derive(Debug)]
pub struct Tape<S> {
    tag: VarTag,
    order: usize,
    nodes: Vec<Node<S>>,
    input: usize,
    params: Vec<usize>,
    compose: ComposeAlgo,
}

/// Result of a reverse sweep.
#[derive(Clone, Debug)]
pub struct Adjoints<S> {
    params: Vec<TaylorSeries<S>>,
    /// Partial evaluations performed, one per (node, predecessor) edge whose
    /// predecessor depends on a parameter.
    pub edges_visited: usize,
}

impl<S: Scalar> Adjoints<S> {
    /// `<df/dtheta_i, dx>_p` for every parameter.
    pub fn params(&self) -> &[TaylorSeries<S>] {
        &self.params
    }

    pub fn into_params(self) -> Vec<TaylorSeries<S>> {
        self.params
    }

    /// `d/dtheta_i d^q/dx^q f` for every parameter.
    pub fn derivatives(&self, q: usize) -> Result<Vec<S>> {
        self.params.iter().map(|s| s.extract_derivative(q)).collect()
    }
}

impl<S: Scalar> Tape<S> {
    /// A tape with input `x` (order `p`) and one parameter node per `theta`.
    pub fn new(x: S, theta: &[S], order: usize) -> Tape<S> {
        let tag = VarTag::fresh();
        let mut tape = Tape {
            tag,
            order,
            nodes: Vec::new(),
            input: 0,
            params: Vec::with_capacity(theta.len()),
            compose: ComposeAlgo::Bk21,
        };
        tape.nodes.push(Node {
            op: Op::Input,
            primal: Value::Series(TaylorSeries::lift_var_with(x, order, tag)),
            param_dep: false,
            input_dep: true,
        });
        for &t in theta {
            tape.params.push(tape.nodes.len());
            tape.nodes.push(Node {
                op: Op::Parameter,
                primal: Value::Const(t),
                param_dep: true,
                input_dep: false,
            });
        }
        tape
    }

    pub fn with_compose(mut self, algo: ComposeAlgo) -> Tape<S> {
        self.compose = algo;
        self
    }

    pub fn tag(&self) -> VarTag {
        self.tag
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&self) -> Var {
        self.var(self.input)
    }

    pub fn params(&self) -> Vec<Var> {
        self.params.iter().map(|&i| self.var(i)).collect()
    }

    pub fn op_kind(&self, v: Var) -> Result<OpKind> {
        let i = self.resolve(v)?;
        Ok(match &self.nodes[i].op {
            Op::Input => OpKind::Input,
            Op::Parameter => OpKind::Parameter,
            Op::Constant => OpKind::Constant,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Div(..) => OpKind::Div,
            Op::Scale(..) => OpKind::Scale,
            Op::Exp(_) => OpKind::Exp,
            Op::Log(_) => OpKind::Log,
            Op::Pow(..) => OpKind::Pow,
            Op::Nested(_) => OpKind::Nested,
        })
    }

    /// Count of nodes of each kind, in [`OpKind`] order of first appearance.
    pub fn kinds(&self) -> Vec<OpKind> {
        (0..self.nodes.len())
            .map(|i| self.op_kind(self.var(i)).expect("own node"))
            .collect()
    }

    /// Primal series of a node.
    pub fn value(&self, v: Var) -> Result<TaylorSeries<S>> {
        let i = self.resolve(v)?;
        self.nodes[i].primal.to_series(self.order, self.tag)
    }

    fn var(&self, index: usize) -> Var {
        Var {
            tape: self.tag,
            index,
        }
    }

    fn resolve(&self, v: Var) -> Result<usize> {
        if v.tape != self.tag {
            return Err(Error::PerturbationConfusion(format!(
                "value from tape {} used on tape {}",
                v.tape.id(),
                self.tag.id()
            )));
        }
        debug_assert!(v.index < self.nodes.len());
        Ok(v.index)
    }

    fn push(&mut self, op: Op<S>, primal: Value<S>) -> Var {
        let preds = {
            let tmp = Node {
                op,
                primal,
                param_dep: false,
                input_dep: false,
            };
            let p = tmp.preds();
            (tmp, p)
        };
        let (mut node, preds) = preds;
        node.param_dep = preds.iter().any(|&p| self.nodes[p].param_dep);
        node.input_dep = preds.iter().any(|&p| self.nodes[p].input_dep);
        self.nodes.push(node);
        self.var(self.nodes.len() - 1)
    }

    fn primal(&self, i: usize) -> &Value<S> {
        &self.nodes[i].primal
    }

    fn series_of(&self, i: usize) -> Result<TaylorSeries<S>> {
        self.nodes[i].primal.to_series(self.order, self.tag)
    }

    /// Composes a series in an inner variable onto node `arg`'s primal.
    fn compose_onto(&self, inner: TaylorSeries<S>, arg: usize) -> Result<Value<S>> {
        let u = self.primal(arg);
        if u.is_const() {
            return Ok(Value::Const(inner.value()));
        }
        let u = self.series_of(arg)?;
        Ok(Value::Series(inner.compose_dual_with(&u, self.compose)?))
    }

    /// Reverse sweep from `out`, seeding its adjoint with the unit series.
    pub fn backward(&self, out: Var) -> Result<Adjoints<S>> {
        let out = self.resolve(out)?;
        let mut adj: Vec<Option<Value<S>>> = vec![None; out + 1];
        adj[out] = Some(Value::Const(S::one()));
        let mut edges = 0usize;

        for j in (0..=out).rev() {
            let Some(bar) = adj[j].take() else { continue };
            let node = &self.nodes[j];
            if !node.param_dep {
                continue;
            }
            let mut give = |i: usize, contrib: Value<S>, adj: &mut Vec<Option<Value<S>>>| -> Result<()> {
                edges += 1;
                adj[i] = Some(match adj[i].take() {
                    None => contrib,
                    Some(prev) => prev.add(&contrib)?,
                });
                Ok(())
            };
            let dep = |i: usize| self.nodes[i].param_dep;
            match &node.op {
                Op::Input | Op::Constant => {}
                Op::Parameter => {
                    adj[j] = Some(bar);
                }
                Op::Add(a, b) => {
                    if dep(*a) {
                        give(*a, bar.clone(), &mut adj)?;
                    }
                    if dep(*b) {
                        give(*b, bar.clone(), &mut adj)?;
                    }
                }
                Op::Sub(a, b) => {
                    if dep(*a) {
                        give(*a, bar.clone(), &mut adj)?;
                    }
                    if dep(*b) {
                        give(*b, bar.neg(), &mut adj)?;
                    }
                }
                Op::Mul(a, b) => {
                    if dep(*a) {
                        give(*a, bar.mul(self.primal(*b))?, &mut adj)?;
                    }
                    if dep(*b) {
                        give(*b, bar.mul(self.primal(*a))?, &mut adj)?;
                    }
                }
                Op::Div(a, b) => {
                    let over_b = bar.div(self.primal(*b))?;
                    if dep(*b) {
                        let c = over_b.mul(&node.primal)?.neg();
                        give(*b, c, &mut adj)?;
                    }
                    if dep(*a) {
                        give(*a, over_b, &mut adj)?;
                    }
                }
                Op::Scale(a, c) => give(*a, bar.scale(*c), &mut adj)?,
                Op::Exp(a) => give(*a, bar.mul(&node.primal)?, &mut adj)?,
                Op::Log(a) => give(*a, bar.div(self.primal(*a))?, &mut adj)?,
                Op::Pow(a, r) => {
                    let partial = if *r == 0.0 {
                        Value::Const(S::zero())
                    } else {
                        self.primal(*a).pow(r - 1.0)?.scale(S::from_f64(*r))
                    };
                    give(*a, bar.mul(&partial)?, &mut adj)?;
                }
                Op::Nested(rec) => {
                    self.backward_nested(rec, &bar, &mut |i, c, adj| give(i, c, adj), &mut adj)?;
                }
            }
        }

        let params = self
            .params
            .iter()
            .map(|&i| match adj.get(i).cloned().flatten() {
                Some(v) => v.to_series(self.order, self.tag),
                None => Ok(TaylorSeries::lift_const(S::zero(), self.order, self.tag)),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Adjoints {
            params,
            edges_visited: edges,
        })
    }

    fn backward_nested(
        &self,
        rec: &NestedRecord<S>,
        bar: &Value<S>,
        give: &mut dyn FnMut(usize, Value<S>, &mut Vec<Option<Value<S>>>) -> Result<()>,
        adj: &mut Vec<Option<Value<S>>>,
    ) -> Result<()> {
        let p = self.order;
        let inner_out = rec.inner.value(rec.inner.var(rec.inner_out))?;
        if self.nodes[rec.arg].param_dep {
            let dv = inner_out.diff(rec.q + 1)?;
            debug_assert_eq!(dv.order(), p);
            let partial = self.compose_onto(dv, rec.arg)?;
            give(rec.arg, bar.mul(&partial)?, adj)?;
        }
        if rec.pi.iter().any(|&i| self.nodes[i].param_dep) {
            let inner_adj = rec.inner.backward(rec.inner.var(rec.inner_out))?;
            for (k, &pi) in rec.pi.iter().enumerate() {
                if !self.nodes[pi].param_dep {
                    continue;
                }
                let g = &inner_adj.params[k];
                if g.coeffs().iter().all(|c| c.is_zero()) {
                    continue;
                }
                let shifted = g.diff(rec.q)?.truncate(p)?;
                let partial = self.compose_onto(shifted, rec.arg)?;
                give(pi, bar.mul(&partial)?, adj)?;
            }
        }
        Ok(())
    }

    fn unary(&mut self, a: &Var, f: impl FnOnce(&Value<S>) -> Result<Value<S>>, op: impl FnOnce(usize) -> Op<S>) -> Result<Var> {
        let i = self.resolve(*a)?;
        let primal = f(self.primal(i))?;
        Ok(self.push(op(i), primal))
    }

    fn binary(
        &mut self,
        a: &Var,
        b: &Var,
        f: impl FnOnce(&Value<S>, &Value<S>) -> Result<Value<S>>,
        op: impl FnOnce(usize, usize) -> Op<S>,
    ) -> Result<Var> {
        let i = self.resolve(*a)?;
        let j = self.resolve(*b)?;
        let primal = f(self.primal(i), self.primal(j))?;
        Ok(self.push(op(i, j), primal))
    }
}

impl<S: Scalar> Scope for Tape<S> {
    type Scalar = S;
    type Val = Var;

    fn order(&self) -> usize {
        self.order
    }

    fn value_of(&self, a: &Var) -> Result<S> {
        Ok(self.primal(self.resolve(*a)?).value())
    }

    fn constant(&mut self, c: S) -> Var {
        self.push(Op::Constant, Value::Const(c))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.binary(a, b, Value::add, Op::Add)
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.binary(a, b, Value::sub, Op::Sub)
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.binary(a, b, Value::mul, Op::Mul)
    }

    fn div(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.binary(a, b, Value::div, Op::Div)
    }

    fn scale(&mut self, a: &Var, c: S) -> Result<Var> {
        self.unary(a, |v| Ok(v.scale(c)), |i| Op::Scale(i, c))
    }

    fn exp(&mut self, a: &Var) -> Result<Var> {
        self.unary(a, Value::exp, Op::Exp)
    }

    fn log(&mut self, a: &Var) -> Result<Var> {
        self.unary(a, Value::log, Op::Log)
    }

    fn pow(&mut self, a: &Var, r: f64) -> Result<Var> {
        self.unary(a, |v| v.pow(r), |i| Op::Pow(i, r))
    }

    fn nested(&mut self, g: &InnerFn<'_, Self>, u: &Var, q: usize, pi: &[Var]) -> Result<Var> {
        let arg = self.resolve(*u)?;
        let pi_idx = pi.iter().map(|v| self.resolve(*v)).collect::<Result<Vec<_>>>()?;
        if let Some(k) = pi_idx.iter().position(|&i| self.nodes[i].input_dep) {
            return Err(Error::PerturbationConfusion(format!(
                "parameter {k} of a nested node depends on the tape input"
            )));
        }
        let theta: Vec<S> = pi_idx.iter().map(|&i| self.primal(i).value()).collect();

        let inner_order = q + self.order + 1;
        record_inner_order(inner_order);
        let mut inner = Tape::new(self.primal(arg).value(), &theta, inner_order).with_compose(self.compose);
        let x = inner.input();
        let inner_params = inner.params();
        let y = g(&mut inner, x, &inner_params)?;
        let inner_out = inner.resolve(y)?;

        let shifted = inner.value(y)?.diff(q)?.truncate(self.order)?;
        let primal = self.compose_onto(shifted, arg)?;
        Ok(self.push(
            Op::Nested(Box::new(NestedRecord {
                arg,
                pi: pi_idx,
                q,
                inner,
                inner_out,
            })),
            primal,
        ))
    }
}

/// Records `f(x, theta)` at order `p` and returns the tape with its output.
pub fn record_forward<S, F>(f: F, x: S, theta: &[S], order: usize) -> Result<(Tape<S>, Var)>
where
    S: Scalar,
    F: FnOnce(&mut Tape<S>, Var, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new(x, theta, order);
    let input = tape.input();
    let params = tape.params();
    let out = f(&mut tape, input, &params)?;
    tape.resolve(out)?;
    Ok((tape, out))
}
