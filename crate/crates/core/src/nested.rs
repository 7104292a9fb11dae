//! Nested derivative nodes: `phi(v, pi) = d^q/dv^q g(v, pi)` lifted onto a
//! series in an outer variable.
//!
//! Lifting proceeds in four steps: take the scalar `v` from the outer series,
//! seed a fresh inner variable of order `q + p`, evaluate `g` on it, shift the
//! result left by `q`, and compose back onto the outer series. `g` may itself
//! contain nested nodes.
//!
//! Computations are written once against the [`Scope`] trait and can then be
//! run tape-free through [`Forward`] or recorded with
//! [`Tape`](crate::tape::Tape).

use std::cell::RefCell;
use std::marker::PhantomData;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::series::{ComposeAlgo, TaylorSeries, VarTag};

/// A lifted value: either constant with respect to the scope variable, or a
/// full series in it.
#[derive(Clone, Debug, PartialEq)]
pub enum Value<S> {
    Const(S),
    Series(TaylorSeries<S>),
}

impl<S: Scalar> Value<S> {
    /// The constant term.
    pub fn value(&self) -> S {
        match self {
            Value::Const(c) => *c,
            Value::Series(s) => s.value(),
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Value::Const(_))
    }

    pub fn to_series(&self, order: usize, tag: VarTag) -> Result<TaylorSeries<S>> {
        match self {
            Value::Const(c) => Ok(TaylorSeries::lift_const(*c, order, tag)),
            Value::Series(s) if s.tag() != tag => Err(Error::TagMismatch {
                expected: tag,
                found: s.tag(),
            }),
            Value::Series(s) if s.order() != order => Err(Error::OrderMismatch {
                left: order,
                right: s.order(),
            }),
            Value::Series(s) => Ok(s.clone()),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(match (self, other) {
            (Value::Const(a), Value::Const(b)) => Value::Const(*a + *b),
            (Value::Const(c), Value::Series(s)) | (Value::Series(s), Value::Const(c)) => {
                Value::Series(s.add_scalar(*c))
            }
            (Value::Series(a), Value::Series(b)) => Value::Series(a.add(b)?),
        })
    }

    pub fn neg(&self) -> Self {
        match self {
            Value::Const(c) => Value::Const(-*c),
            Value::Series(s) => Value::Series(s.neg()),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (Value::Series(a), Value::Series(b)) => Ok(Value::Series(a.sub(b)?)),
            _ => self.add(&other.neg()),
        }
    }

    pub fn scale(&self, c: S) -> Self {
        match self {
            Value::Const(a) => Value::Const(*a * c),
            Value::Series(s) => Value::Series(s.scale(c)),
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        Ok(match (self, other) {
            (Value::Const(a), Value::Const(b)) => Value::Const(*a * *b),
            (Value::Const(c), Value::Series(s)) | (Value::Series(s), Value::Const(c)) => {
                Value::Series(s.scale(*c))
            }
            (Value::Series(a), Value::Series(b)) => Value::Series(a.mul(b)?),
        })
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (_, Value::Const(c)) if c.is_zero() => Err(Error::Singularity),
            (Value::Const(a), Value::Const(b)) => Ok(Value::Const(*a / *b)),
            (Value::Series(s), Value::Const(c)) => Ok(Value::Series(s.scale(S::one() / *c))),
            (Value::Const(c), Value::Series(s)) => Ok(Value::Series(s.recip()?.scale(*c))),
            (Value::Series(a), Value::Series(b)) => Ok(Value::Series(a.div(b)?)),
        }
    }

    pub fn exp(&self) -> Result<Self> {
        match self {
            Value::Const(c) => {
                let e = c.exp();
                if !e.is_finite() {
                    return Err(Error::NumericOverflow("exp overflow".into()));
                }
                Ok(Value::Const(e))
            }
            Value::Series(s) => Ok(Value::Series(s.exp())),
        }
    }

    pub fn log(&self) -> Result<Self> {
        match self {
            Value::Const(c) if !c.is_positive() => {
                Err(Error::Domain("log of a nonpositive value".into()))
            }
            Value::Const(c) => Ok(Value::Const(c.ln())),
            Value::Series(s) => Ok(Value::Series(s.log()?)),
        }
    }

    pub fn pow(&self, r: f64) -> Result<Self> {
        match self {
            Value::Const(c) => {
                let integral = r.fract() == 0.0;
                if c.is_zero() && r < 0.0 {
                    return Err(Error::Domain("zero raised to a negative power".into()));
                }
                if !c.is_positive() && !c.is_zero() && !integral {
                    return Err(Error::Domain(format!("negative base with exponent {r}")));
                }
                Ok(Value::Const(c.powf(r)))
            }
            Value::Series(s) => Ok(Value::Series(s.pow(r)?)),
        }
    }

    /// Shifts a series in the scope variable left by `q`.
    pub fn diff(&self, q: usize, order: usize, tag: VarTag) -> Result<TaylorSeries<S>> {
        self.to_series(order, tag)?.diff(q)
    }
}

/// Inner function of a nested node: receives the inner scope, the fresh inner
/// variable and the inner images of the parameter bundle.
pub type InnerFn<'f, C> =
    dyn Fn(&mut C, <C as Scope>::Val, &[<C as Scope>::Val]) -> Result<<C as Scope>::Val> + 'f;

/// An evaluation context for lifted computations.
///
/// Values belong to the scope that produced them; using them in another scope
/// is reported as a tag mismatch or perturbation confusion.
pub trait Scope: Sized {
    type Scalar: Scalar;
    type Val: Clone;

    /// Truncation order of series in this scope.
    fn order(&self) -> usize;
    /// Constant term of a value.
    fn value_of(&self, a: &Self::Val) -> Result<Self::Scalar>;
    fn constant(&mut self, c: Self::Scalar) -> Self::Val;
    fn add(&mut self, a: &Self::Val, b: &Self::Val) -> Result<Self::Val>;
    fn sub(&mut self, a: &Self::Val, b: &Self::Val) -> Result<Self::Val>;
    fn mul(&mut self, a: &Self::Val, b: &Self::Val) -> Result<Self::Val>;
    fn div(&mut self, a: &Self::Val, b: &Self::Val) -> Result<Self::Val>;
    fn scale(&mut self, a: &Self::Val, c: Self::Scalar) -> Result<Self::Val>;
    fn exp(&mut self, a: &Self::Val) -> Result<Self::Val>;
    fn log(&mut self, a: &Self::Val) -> Result<Self::Val>;
    fn pow(&mut self, a: &Self::Val, r: f64) -> Result<Self::Val>;
    /// `d^q/dv^q g(v, pi)` evaluated at `v = u`.
    fn nested(
        &mut self,
        g: &InnerFn<'_, Self>,
        u: &Self::Val,
        q: usize,
        pi: &[Self::Val],
    ) -> Result<Self::Val>;
}

thread_local! {
    static ORDER_PROBE: RefCell<Option<Vec<usize>>> = const { RefCell::new(None) };
}

pub(crate) fn record_inner_order(order: usize) {
    ORDER_PROBE.with(|p| {
        if let Some(log) = p.borrow_mut().as_mut() {
            log.push(order);
        }
    });
}

/// Runs `f` and returns the orders of every inner evaluation started by nested
/// nodes on this thread, in start order.
pub fn probe_inner_orders<R>(f: impl FnOnce() -> R) -> (R, Vec<usize>) {
    let previous = ORDER_PROBE.with(|p| p.borrow_mut().replace(Vec::new()));
    let out = f();
    let log = ORDER_PROBE.with(|p| std::mem::replace(&mut *p.borrow_mut(), previous));
    (out, log.unwrap_or_default())
}

/// Tape-free forward evaluation in one variable.
#[derive(Clone, Debug)]
pub struct Forward<S> {
    tag: VarTag,
    order: usize,
    compose: ComposeAlgo,
    _scalar: PhantomData<S>,
}

impl<S: Scalar> Forward<S> {
    pub fn new(order: usize) -> Self {
        Forward::with_tag(VarTag::fresh(), order)
    }

    pub fn with_tag(tag: VarTag, order: usize) -> Self {
        Forward {
            tag,
            order,
            compose: ComposeAlgo::Bk21,
            _scalar: PhantomData,
        }
    }

    pub fn with_compose(mut self, algo: ComposeAlgo) -> Self {
        self.compose = algo;
        self
    }

    pub fn tag(&self) -> VarTag {
        self.tag
    }

    /// The scope variable itself, `(x, 1, 0, ..., 0)`.
    pub fn input(&self, x: S) -> Value<S> {
        Value::Series(TaylorSeries::lift_var_with(x, self.order, self.tag))
    }

    fn own(&self, a: &Value<S>) -> Result<()> {
        match a {
            Value::Series(s) if s.tag() != self.tag => Err(Error::TagMismatch {
                expected: self.tag,
                found: s.tag(),
            }),
            _ => Ok(()),
        }
    }

    fn binary(
        &self,
        a: &Value<S>,
        b: &Value<S>,
        op: impl FnOnce(&Value<S>, &Value<S>) -> Result<Value<S>>,
    ) -> Result<Value<S>> {
        self.own(a)?;
        self.own(b)?;
        op(a, b)
    }
}

/// Steps 1, 3 and 4 of lifting a nested node around a caller-supplied inner
/// evaluation at order `q + p`.
fn lift_nested<S: Scalar>(
    u: &TaylorSeries<S>,
    q: usize,
    algo: ComposeAlgo,
    inner: impl FnOnce(TaylorSeries<S>) -> Result<TaylorSeries<S>>,
) -> Result<TaylorSeries<S>> {
    let p = u.order();
    let inner_order = q + p;
    record_inner_order(inner_order);
    let seed = TaylorSeries::lift_var(u.value(), inner_order);
    let inner_tag = seed.tag();
    let y = inner(seed)?;
    if y.tag() != inner_tag || y.order() != inner_order {
        return Err(Error::PerturbationConfusion(
            "inner function returned a series outside its own scope".into(),
        ));
    }
    y.diff(q)?.compose_dual_with(u, algo)
}

/// Lifts `d^q/dv^q g(v, pi)` at `v = u`.
///
/// `g` receives the fresh inner variable of order `q + u.order()` and the
/// bundle `pi` re-lifted as constants in the inner variable. No element of
/// `pi` may carry `u`'s tag.
pub fn nested_diff<S, G>(
    g: G,
    u: &TaylorSeries<S>,
    q: usize,
    pi: &[TaylorSeries<S>],
) -> Result<TaylorSeries<S>>
where
    S: Scalar,
    G: FnOnce(&TaylorSeries<S>, &[TaylorSeries<S>]) -> Result<TaylorSeries<S>>,
{
    if let Some(bad) = pi.iter().position(|s| s.tag() == u.tag()) {
        return Err(Error::PerturbationConfusion(format!(
            "parameter {bad} of a nested node depends on the outer variable"
        )));
    }
    lift_nested(u, q, ComposeAlgo::Bk21, |seed| {
        let inner_pi: Vec<_> = pi
            .iter()
            .map(|s| TaylorSeries::lift_const(s.value(), seed.order(), seed.tag()))
            .collect();
        g(&seed, &inner_pi)
    })
}

impl<S: Scalar> Scope for Forward<S> {
    type Scalar = S;
    type Val = Value<S>;

    fn order(&self) -> usize {
        self.order
    }

    fn value_of(&self, a: &Value<S>) -> Result<S> {
        self.own(a)?;
        Ok(a.value())
    }

    fn constant(&mut self, c: S) -> Value<S> {
        Value::Const(c)
    }

    fn add(&mut self, a: &Value<S>, b: &Value<S>) -> Result<Value<S>> {
        self.binary(a, b, Value::add)
    }

    fn sub(&mut self, a: &Value<S>, b: &Value<S>) -> Result<Value<S>> {
        self.binary(a, b, Value::sub)
    }

    fn mul(&mut self, a: &Value<S>, b: &Value<S>) -> Result<Value<S>> {
        self.binary(a, b, Value::mul)
    }

    fn div(&mut self, a: &Value<S>, b: &Value<S>) -> Result<Value<S>> {
        self.binary(a, b, Value::div)
    }

    fn scale(&mut self, a: &Value<S>, c: S) -> Result<Value<S>> {
        self.own(a)?;
        Ok(a.scale(c))
    }

    fn exp(&mut self, a: &Value<S>) -> Result<Value<S>> {
        self.own(a)?;
        a.exp()
    }

    fn log(&mut self, a: &Value<S>) -> Result<Value<S>> {
        self.own(a)?;
        a.log()
    }

    fn pow(&mut self, a: &Value<S>, r: f64) -> Result<Value<S>> {
        self.own(a)?;
        a.pow(r)
    }

    fn nested(
        &mut self,
        g: &InnerFn<'_, Self>,
        u: &Value<S>,
        q: usize,
        pi: &[Value<S>],
    ) -> Result<Value<S>> {
        self.own(u)?;
        if pi.iter().any(|v| !v.is_const()) {
            return Err(Error::PerturbationConfusion(
                "parameter bundle of a nested node depends on the outer variable".into(),
            ));
        }
        let u_series = u.to_series(self.order, self.tag)?;
        let algo = self.compose;
        let out = lift_nested(&u_series, q, algo, |seed| {
            let mut inner = Forward::with_tag(seed.tag(), seed.order()).with_compose(algo);
            let x = inner.input(seed.value());
            let y = g(&mut inner, x, pi)?;
            y.to_series(inner.order, inner.tag)
        })?;
        Ok(if u.is_const() {
            Value::Const(out.value())
        } else {
            Value::Series(out)
        })
    }
}
