//! Stream combinators: replication, product, sum, contraction and map, plus
//! their nested generalizations over a global index order.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::fmt;
use std::rc::Rc;

use crate::error::{BudgetExceeded, ExprError, StreamError};
use crate::oracle::SparseVariable;
use crate::semiring::Semiring;
use crate::stream::{Budget, Empty, IndexedStream, OpCounter, SimplicityReport, SizeMetrics};

/// Position of an index in the global order.
pub type IndexId = usize;

/// The ordered list of index names and their finite domains `{0..size}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexUniverse {
    names: Vec<String>,
    sizes: Vec<usize>,
}

impl IndexUniverse {
    pub fn new(indices: impl IntoIterator<Item = (String, usize)>) -> Result<Self, ExprError> {
        let mut names = Vec::new();
        let mut sizes = Vec::new();
        for (n, d) in indices {
            if names.contains(&n) {
                return Err(ExprError::DuplicateInOrder(n));
            }
            names.push(n);
            sizes.push(d);
        }
        Ok(IndexUniverse { names, sizes })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: IndexId) -> &str {
        &self.names[i]
    }

    pub fn size(&self, i: IndexId) -> usize {
        self.sizes[i]
    }

    pub fn lookup(&self, name: &str) -> Option<IndexId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn ids(&self) -> std::ops::Range<IndexId> {
        0..self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of points of the full indexing set.
    pub fn points(&self) -> u128 {
        self.sizes.iter().map(|&d| d as u128).product()
    }
}

// ---------------------------------------------------------------------------
// Single-level combinators

/// The constant stream `⇑(v)` over the domain `{0..len}`: always ready,
/// emits `v` at every index, and skips in constant time.
#[derive(Clone, Debug)]
pub struct Replicate<V> {
    len: usize,
    pos: usize,
    value: V,
}

pub fn replicate<V: Clone>(len: usize, value: V) -> Replicate<V> {
    Replicate { len, pos: 0, value }
}

impl<V: Clone> IndexedStream for Replicate<V> {
    type Index = usize;
    type Value = V;

    fn valid(&self) -> bool {
        self.pos < self.len
    }
    fn index(&self) -> usize {
        self.pos
    }
    fn ready(&self) -> bool {
        true
    }
    fn value(&self) -> V {
        self.value.clone()
    }
    fn advance(&mut self) {
        if self.pos < self.len {
            self.pos += 1;
        }
    }
    fn searchable(&self) -> bool {
        true
    }
    fn skip(&mut self, target: usize) {
        self.pos = self.pos.max(target.min(self.len));
    }
}

type BinOp<A, B, V> = Rc<dyn Fn(A, B) -> V>;

/// The product stream `a · b`: a merge that is ready only where both
/// operands are ready at the same index.
pub struct Mul<A: IndexedStream, B: IndexedStream, V> {
    a: A,
    b: B,
    op: BinOp<A::Value, B::Value, V>,
    skipping: bool,
}

impl<A, B, V> Clone for Mul<A, B, V>
where
    A: IndexedStream + Clone,
    B: IndexedStream + Clone,
{
    fn clone(&self) -> Self {
        Mul {
            a: self.a.clone(),
            b: self.b.clone(),
            op: Rc::clone(&self.op),
            skipping: self.skipping,
        }
    }
}

/// Product stream that advances the lagging operand one state at a time.
pub fn mul<A, B, V>(a: A, b: B, vmul: impl Fn(A::Value, B::Value) -> V + 'static) -> Mul<A, B, V>
where
    A: IndexedStream,
    B: IndexedStream<Index = A::Index>,
{
    Mul {
        a,
        b,
        op: Rc::new(vmul),
        skipping: false,
    }
}

/// Product stream that moves the lagging operand with `skip` to the leading
/// operand's index. Evaluates to the same function as [`mul`].
pub fn mul_skipping<A, B, V>(a: A, b: B, vmul: impl Fn(A::Value, B::Value) -> V + 'static) -> Mul<A, B, V>
where
    A: IndexedStream,
    B: IndexedStream<Index = A::Index>,
{
    Mul {
        a,
        b,
        op: Rc::new(vmul),
        skipping: true,
    }
}

impl<A, B, V> Mul<A, B, V>
where
    A: IndexedStream,
    B: IndexedStream<Index = A::Index>,
{
    fn with_op(a: A, b: B, op: BinOp<A::Value, B::Value, V>, skipping: bool) -> Self {
        Mul { a, b, op, skipping }
    }

    pub fn is_skipping(&self) -> bool {
        self.skipping
    }

    /// `a ≤ b` in the merge preorder.
    fn a_first(&self) -> bool {
        let (ia, ib) = (self.a.index(), self.b.index());
        ia < ib || (ia == ib && !self.a.ready())
    }
}

impl<A, B, V> IndexedStream for Mul<A, B, V>
where
    A: IndexedStream,
    B: IndexedStream<Index = A::Index>,
{
    type Index = A::Index;
    type Value = V;

    fn valid(&self) -> bool {
        self.a.valid() && self.b.valid()
    }
    fn index(&self) -> A::Index {
        self.a.index().max(self.b.index())
    }
    fn ready(&self) -> bool {
        self.a.ready() && self.b.ready() && self.a.index() == self.b.index()
    }
    fn value(&self) -> V {
        (self.op)(self.a.value(), self.b.value())
    }
    fn advance(&mut self) {
        if !self.valid() {
            return;
        }
        let (ia, ib) = (self.a.index(), self.b.index());
        if self.a_first() {
            // skip(δ(a), ι(b)) is one skip when a lags strictly, one advance on a tie
            if self.skipping && ia < ib {
                self.a.skip(ib);
            } else {
                self.a.advance();
            }
        } else if self.skipping && ib < ia {
            self.b.skip(ia);
        } else {
            self.b.advance();
        }
    }
    fn searchable(&self) -> bool {
        self.a.searchable() && self.b.searchable()
    }
    fn skip(&mut self, target: A::Index) {
        if !self.valid() {
            return;
        }
        self.a.skip(target);
        if self.a.valid() {
            let ia = self.a.index();
            self.b.skip(ia);
        }
    }
}

/// The sum stream `a + b`: a merge over the union of both supports.
///
/// The state is ready when every operand sitting at the minimum index is
/// ready there; an operand that is not at the minimum contributes `zero`.
pub struct Add<A: IndexedStream, B: IndexedStream<Value = A::Value>> {
    a: A,
    b: B,
    op: BinOp<A::Value, A::Value, A::Value>,
    zero: A::Value,
}

impl<A, B> Clone for Add<A, B>
where
    A: IndexedStream + Clone,
    B: IndexedStream<Value = A::Value> + Clone,
    A::Value: Clone,
{
    fn clone(&self) -> Self {
        Add {
            a: self.a.clone(),
            b: self.b.clone(),
            op: Rc::clone(&self.op),
            zero: self.zero.clone(),
        }
    }
}

pub fn add<A, B>(a: A, b: B, vadd: impl Fn(A::Value, A::Value) -> A::Value + 'static, vzero: A::Value) -> Add<A, B>
where
    A: IndexedStream,
    B: IndexedStream<Index = A::Index, Value = A::Value>,
{
    Add {
        a,
        b,
        op: Rc::new(vadd),
        zero: vzero,
    }
}

impl<A, B> Add<A, B>
where
    A: IndexedStream,
    B: IndexedStream<Index = A::Index, Value = A::Value>,
{
    fn with_op(a: A, b: B, op: BinOp<A::Value, A::Value, A::Value>, zero: A::Value) -> Self {
        Add { a, b, op, zero }
    }

    /// Which operands sit at the minimum index. Each operand's index is
    /// read once: nested sums build deep trees of `Add`.
    fn at_min(&self) -> (bool, bool) {
        let ia = self.a.valid().then(|| self.a.index());
        let ib = self.b.valid().then(|| self.b.index());
        match (ia, ib) {
            (Some(x), Some(y)) => (x <= y, y <= x),
            (a, b) => (a.is_some(), b.is_some()),
        }
    }
}


impl<A, B> IndexedStream for Add<A, B>
where
    A: IndexedStream,
    B: IndexedStream<Index = A::Index, Value = A::Value>,
    A::Value: Clone,
{
    type Index = A::Index;
    type Value = A::Value;

    fn valid(&self) -> bool {
        self.a.valid() || self.b.valid()
    }
    fn index(&self) -> A::Index {
        match (self.a.valid(), self.b.valid()) {
            (true, true) => self.a.index().min(self.b.index()),
            (true, false) => self.a.index(),
            _ => self.b.index(),
        }
    }
    fn ready(&self) -> bool {
        let (at_a, at_b) = self.at_min();
        (at_a || at_b) && (!at_a || self.a.ready()) && (!at_b || self.b.ready())
    }
    fn value(&self) -> A::Value {
        let (at_a, at_b) = self.at_min();
        let va = if at_a { self.a.value() } else { self.zero.clone() };
        let vb = if at_b { self.b.value() } else { self.zero.clone() };
        (self.op)(va, vb)
    }
    fn advance(&mut self) {
        // the strict merge preorder; a terminal operand is above every valid one
        match (self.a.valid(), self.b.valid()) {
            (false, false) => {}
            (true, false) => self.a.advance(),
            (false, true) => self.b.advance(),
            (true, true) => {
                let (ia, ib) = (self.a.index(), self.b.index());
                let (ra, rb) = if ia == ib {
                    (self.a.ready(), self.b.ready())
                } else {
                    (false, false)
                };
                if ia < ib || (ia == ib && !ra && rb) {
                    self.a.advance();
                } else if ib < ia || (ia == ib && !rb && ra) {
                    self.b.advance();
                } else {
                    self.a.advance();
                    self.b.advance();
                }
            }
        }
    }
    fn searchable(&self) -> bool {
        self.a.searchable() && self.b.searchable()
    }
    fn skip(&mut self, target: A::Index) {
        self.a.skip(target);
        self.b.skip(target);
    }
}

/// Folds `vadd` over the values at every ready state, starting from `vzero`.
pub fn contract<S: IndexedStream>(
    mut q: S,
    vadd: impl Fn(S::Value, S::Value) -> S::Value,
    vzero: S::Value,
    budget: &mut Budget,
) -> Result<S::Value, BudgetExceeded> {
    let mut acc = vzero;
    while q.valid() {
        budget.tick()?;
        if q.ready() {
            acc = vadd(acc, q.value());
        }
        q.advance();
    }
    Ok(acc)
}

/// `map f`: applies `f` to every value, leaving the state machine alone.
pub struct Map<S: IndexedStream, W> {
    inner: S,
    f: Rc<dyn Fn(S::Value) -> W>,
}

impl<S: IndexedStream + Clone, W> Clone for Map<S, W> {
    fn clone(&self) -> Self {
        Map {
            inner: self.inner.clone(),
            f: Rc::clone(&self.f),
        }
    }
}

pub fn map<S: IndexedStream, W>(inner: S, f: impl Fn(S::Value) -> W + 'static) -> Map<S, W> {
    Map { inner, f: Rc::new(f) }
}

impl<S: IndexedStream, W> IndexedStream for Map<S, W> {
    type Index = S::Index;
    type Value = W;

    fn valid(&self) -> bool {
        self.inner.valid()
    }
    fn index(&self) -> S::Index {
        self.inner.index()
    }
    fn ready(&self) -> bool {
        self.inner.ready()
    }
    fn value(&self) -> W {
        (self.f)(self.inner.value())
    }
    fn advance(&mut self) {
        self.inner.advance()
    }
    fn searchable(&self) -> bool {
        self.inner.searchable()
    }
    fn skip(&mut self, target: S::Index) {
        self.inner.skip(target)
    }
}

// ---------------------------------------------------------------------------
// Nested streams

/// A value of a nested stream: a scalar at the innermost level, otherwise a
/// cursor over the next index.
pub enum Nested<T> {
    Scalar(T),
    Stream(BoxStream<T>),
}

pub trait NestedCursor<T>: IndexedStream<Index = usize, Value = Nested<T>> {
    fn clone_box(&self) -> BoxStream<T>;
}

pub type BoxStream<T> = Box<dyn NestedCursor<T>>;

impl<T, S> NestedCursor<T> for S
where
    S: IndexedStream<Index = usize, Value = Nested<T>> + Clone + 'static,
{
    fn clone_box(&self) -> BoxStream<T> {
        Box::new(self.clone())
    }
}

impl<T: 'static> Clone for BoxStream<T> {
    fn clone(&self) -> Self {
        (**self).clone_box()
    }
}

impl<T: Clone> Clone for Nested<T> {
    fn clone(&self) -> Self {
        match self {
            Nested::Scalar(x) => Nested::Scalar(x.clone()),
            Nested::Stream(q) => Nested::Stream((**q).clone_box()),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Nested<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nested::Scalar(x) => write!(f, "Scalar({x:?})"),
            Nested::Stream(q) if q.valid() => write!(f, "Stream(@{})", q.index()),
            Nested::Stream(_) => write!(f, "Stream(terminal)"),
        }
    }
}

impl<T> Nested<T> {
    pub fn boxed<S: NestedCursor<T> + 'static>(s: S) -> Self {
        Nested::Stream(Box::new(s))
    }

    pub fn empty() -> Self
    where
        T: 'static,
    {
        Nested::Stream(Box::new(Empty::<usize, Nested<T>>::new()))
    }

    pub fn searchable(&self) -> bool {
        match self {
            Nested::Scalar(_) => true,
            Nested::Stream(q) => q.searchable(),
        }
    }
}

/// Shared state for one nested evaluation: the semiring, whether products
/// use skipping, and the transition budget that lazily-evaluated inner
/// contractions draw from.
pub struct StreamCtx<S: Semiring> {
    pub semiring: S,
    pub skipping: bool,
    limit: u64,
    used: Cell<u64>,
    exceeded: Cell<bool>,
}

impl<S: Semiring> StreamCtx<S> {
    pub fn new(semiring: S, skipping: bool, budget: u64) -> Rc<Self> {
        Rc::new(StreamCtx {
            semiring,
            skipping,
            limit: budget,
            used: Cell::new(0),
            exceeded: Cell::new(false),
        })
    }

    /// Records one transition; false once the budget is spent.
    pub fn tick(&self) -> bool {
        let used = self.used.get() + 1;
        self.used.set(used);
        if used > self.limit {
            self.exceeded.set(true);
        }
        !self.exceeded.get()
    }

    pub fn used(&self) -> u64 {
        self.used.get()
    }

    pub fn check(&self) -> Result<(), BudgetExceeded> {
        if self.exceeded.get() {
            Err(BudgetExceeded { budget: self.limit })
        } else {
            Ok(())
        }
    }
}

type NestedOp<T> = BinOp<Nested<T>, Nested<T>, Nested<T>>;

/// Product of two nested values of the same depth.
pub fn mul_values<S: Semiring>(ctx: &Rc<StreamCtx<S>>, a: Nested<S::Elem>, b: Nested<S::Elem>) -> Nested<S::Elem> {
    match (a, b) {
        (Nested::Scalar(x), Nested::Scalar(y)) => Nested::Scalar(ctx.semiring.mul(&x, &y)),
        (Nested::Stream(x), Nested::Stream(y)) => {
            let skipping = ctx.skipping && x.searchable() && y.searchable();
            Nested::boxed(Mul::with_op(x, y, nested_mul_op(ctx), skipping))
        }
        _ => panic!("product of nested values of different depth"),
    }
}

fn nested_mul_op<S: Semiring>(ctx: &Rc<StreamCtx<S>>) -> NestedOp<S::Elem> {
    let ctx = Rc::clone(ctx);
    Rc::new(move |a, b| mul_values(&ctx, a, b))
}

/// Zero of a nested value with `depth` remaining levels.
pub fn zero_value<S: Semiring>(s: &S, depth: usize) -> Nested<S::Elem> {
    if depth == 0 {
        Nested::Scalar(s.zero())
    } else {
        Nested::empty()
    }
}

/// Sum of two nested values with `depth` remaining levels.
pub fn add_values<S: Semiring>(
    ctx: &Rc<StreamCtx<S>>,
    depth: usize,
    a: Nested<S::Elem>,
    b: Nested<S::Elem>,
) -> Nested<S::Elem> {
    match (a, b) {
        (Nested::Scalar(x), Nested::Scalar(y)) => Nested::Scalar(ctx.semiring.add(&x, &y)),
        (Nested::Stream(x), Nested::Stream(y)) => {
            let inner = depth - 1;
            let c = Rc::clone(ctx);
            let op: NestedOp<S::Elem> = Rc::new(move |u, v| add_values(&c, inner, u, v));
            Nested::boxed(Add::with_op(x, y, op, zero_value(&ctx.semiring, inner)))
        }
        _ => panic!("sum of nested values of different depth"),
    }
}

/// `Σ` on a nested value whose top level is being contracted: folds the
/// values at ready states with nested addition. `depth` counts the levels
/// of `q`, including the contracted one.
pub fn contract_value<S: Semiring>(ctx: &Rc<StreamCtx<S>>, depth: usize, q: Nested<S::Elem>) -> Nested<S::Elem> {
    let mut q = match q {
        Nested::Stream(q) => q,
        Nested::Scalar(_) => panic!("contracting a scalar"),
    };
    let inner = depth - 1;
    if inner == 0 {
        let mut acc = ctx.semiring.zero();
        while q.valid() {
            if !ctx.tick() {
                break;
            }
            if q.ready() {
                if let Nested::Scalar(x) = q.value() {
                    acc = ctx.semiring.add(&acc, &x);
                }
            }
            q.advance();
        }
        return Nested::Scalar(acc);
    }
    // pairwise, like a binary counter, so the tree of sums stays shallow
    let mut partial: Vec<Option<Nested<S::Elem>>> = Vec::new();
    while q.valid() {
        if !ctx.tick() {
            break;
        }
        if q.ready() {
            let mut carry = q.value();
            let mut k = 0;
            loop {
                if k == partial.len() {
                    partial.push(None);
                }
                match partial[k].take() {
                    Some(p) => {
                        carry = add_values(ctx, inner, p, carry);
                        k += 1;
                    }
                    None => {
                        partial[k] = Some(carry);
                        break;
                    }
                }
            }
        }
        q.advance();
    }
    partial
        .into_iter()
        .flatten()
        .reduce(|hi, lo| add_values(ctx, inner, lo, hi))
        .unwrap_or_else(|| zero_value(&ctx.semiring, inner))
}

/// Applies `f` to the values found `depth` levels down.
pub fn map_depth<T: Clone + 'static>(
    v: Nested<T>,
    depth: usize,
    f: Rc<dyn Fn(Nested<T>) -> Nested<T>>,
) -> Nested<T> {
    if depth == 0 {
        return f(v);
    }
    match v {
        Nested::Stream(q) => Nested::boxed(Map {
            inner: q,
            f: Rc::new(move |x| map_depth(x, depth - 1, Rc::clone(&f))),
        }),
        Nested::Scalar(_) => panic!("map below the scalar level"),
    }
}

/// A nested stream together with its index sequence (ascending ids).
pub struct NestedStream<T> {
    pub indices: Vec<IndexId>,
    pub root: Nested<T>,
}

impl<T: Clone + 'static> Clone for NestedStream<T> {
    fn clone(&self) -> Self {
        NestedStream {
            indices: self.indices.clone(),
            root: self.root.clone(),
        }
    }
}

impl<T: Clone + 'static> NestedStream<T> {
    pub fn new(indices: Vec<IndexId>, root: Nested<T>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        NestedStream { indices, root }
    }

    pub fn scalar(x: T) -> Self {
        NestedStream {
            indices: Vec::new(),
            root: Nested::Scalar(x),
        }
    }

    pub fn depth(&self) -> usize {
        self.indices.len()
    }

    /// `map_prefix f`: rewrites the values below `prefix` with `f`.
    pub fn map_at(
        self,
        universe: &IndexUniverse,
        prefix: &[IndexId],
        new_indices: Vec<IndexId>,
        f: Rc<dyn Fn(Nested<T>) -> Nested<T>>,
    ) -> Result<Self, StreamError> {
        if prefix.len() > self.indices.len() || self.indices[..prefix.len()] != *prefix {
            return Err(StreamError::PrefixMismatch {
                prefix: prefix.iter().map(|&i| universe.name(i).to_string()).collect(),
                indices: self.indices.iter().map(|&i| universe.name(i).to_string()).collect(),
            });
        }
        Ok(NestedStream {
            indices: new_indices,
            root: map_depth(self.root, prefix.len(), f),
        })
    }
}

fn names(universe: &IndexUniverse, ids: &[IndexId]) -> Vec<String> {
    ids.iter().map(|&i| universe.name(i).to_string()).collect()
}

/// Nested product; both operands must share their index sequence.
pub fn mul_nested<S: Semiring>(
    ctx: &Rc<StreamCtx<S>>,
    universe: &IndexUniverse,
    a: NestedStream<S::Elem>,
    b: NestedStream<S::Elem>,
) -> Result<NestedStream<S::Elem>, StreamError> {
    if a.indices != b.indices {
        return Err(StreamError::ShapeMismatch {
            left: names(universe, &a.indices),
            right: names(universe, &b.indices),
        });
    }
    Ok(NestedStream {
        indices: a.indices,
        root: mul_values(ctx, a.root, b.root),
    })
}

/// Nested sum; both operands must share their index sequence.
pub fn add_nested<S: Semiring>(
    ctx: &Rc<StreamCtx<S>>,
    universe: &IndexUniverse,
    a: NestedStream<S::Elem>,
    b: NestedStream<S::Elem>,
) -> Result<NestedStream<S::Elem>, StreamError> {
    if a.indices != b.indices {
        return Err(StreamError::ShapeMismatch {
            left: names(universe, &a.indices),
            right: names(universe, &b.indices),
        });
    }
    let depth = a.indices.len();
    Ok(NestedStream {
        indices: a.indices,
        root: add_values(ctx, depth, a.root, b.root),
    })
}

/// `Σ_i = map_prefix(Σ)`, where the prefix is every index before `i`.
pub fn sum_nested<S: Semiring>(
    ctx: &Rc<StreamCtx<S>>,
    universe: &IndexUniverse,
    i: IndexId,
    q: NestedStream<S::Elem>,
) -> Result<NestedStream<S::Elem>, StreamError> {
    let at = q
        .indices
        .iter()
        .position(|&x| x == i)
        .ok_or_else(|| StreamError::UnknownLevel(universe.name(i).to_string()))?;
    let depth = q.indices.len() - at;
    let prefix = q.indices[..at].to_vec();
    let mut rest = q.indices.clone();
    rest.remove(at);
    let c = Rc::clone(ctx);
    q.map_at(universe, &prefix, rest, Rc::new(move |v| contract_value(&c, depth, v)))
}

/// `⇑_i = map_prefix(⇑)`, where the prefix is every index before `i`.
pub fn rep_nested<T: Clone + 'static>(
    universe: &IndexUniverse,
    i: IndexId,
    q: NestedStream<T>,
) -> Result<NestedStream<T>, StreamError> {
    if q.indices.contains(&i) {
        return Err(StreamError::LevelPresent(universe.name(i).to_string()));
    }
    let at = q.indices.partition_point(|&x| x < i);
    let prefix = q.indices[..at].to_vec();
    let mut all = q.indices.clone();
    all.insert(at, i);
    let len = universe.size(i);
    q.map_at(universe, &prefix, all, Rc::new(move |v| Nested::boxed(replicate(len, v))))
}

/// Evaluates a nested stream to the variable it denotes.
pub fn eval_nested<S: Semiring>(
    ctx: &Rc<StreamCtx<S>>,
    universe: &IndexUniverse,
    q: NestedStream<S::Elem>,
) -> Result<SparseVariable<S::Elem>, BudgetExceeded> {
    let mut out = SparseVariable::zero_in(universe, q.indices.clone());
    let mut prefix = Vec::with_capacity(q.indices.len());
    eval_into(ctx, q.root, &mut prefix, &mut out)?;
    ctx.check()?;
    out.normalize(&ctx.semiring);
    Ok(out)
}

fn eval_into<S: Semiring>(
    ctx: &Rc<StreamCtx<S>>,
    v: Nested<S::Elem>,
    prefix: &mut Vec<usize>,
    out: &mut SparseVariable<S::Elem>,
) -> Result<(), BudgetExceeded> {
    match v {
        Nested::Scalar(x) => {
            out.accumulate(&ctx.semiring, prefix.clone(), x);
            Ok(())
        }
        Nested::Stream(mut q) => {
            while q.valid() {
                if !ctx.tick() {
                    return ctx.check();
                }
                if q.ready() {
                    prefix.push(q.index());
                    eval_into(ctx, q.value(), prefix, out)?;
                    prefix.pop();
                }
                q.advance();
            }
            ctx.check()
        }
    }
}

/// Size metrics of a nested value, recursing through ready states.
/// `advances` counts every advance this traversal issued, at all levels.
pub fn measure_nested<T: 'static>(v: Nested<T>, budget: &mut Budget) -> Result<SizeMetrics, BudgetExceeded> {
    let mut q = match v {
        Nested::Scalar(_) => {
            return Ok(SizeMetrics {
                size0: 1,
                size: 1,
                ..SizeMetrics::default()
            })
        }
        Nested::Stream(q) => q,
    };
    let mut m = SizeMetrics {
        size0: 1,
        ..SizeMetrics::default()
    };
    while q.valid() {
        budget.tick()?;
        if q.ready() {
            let sub = measure_nested(q.value(), budget)?;
            m.size += sub.size;
            m.advances += sub.advances;
        } else {
            m.size += 1;
        }
        m.size0 += 1;
        q.advance();
        m.advances += 1;
    }
    Ok(m)
}

/// Checks simplicity of every level of a nested stream.
pub fn check_simple_nested<T: 'static>(v: Nested<T>, budget: u64) -> SimplicityReport {
    let mut report = SimplicityReport {
        finite: true,
        monotonic: true,
        reduced: true,
        steps_used: 0,
    };
    let mut q = match v {
        Nested::Scalar(_) => return report,
        Nested::Stream(q) => q,
    };
    let mut seen = BTreeSet::new();
    let mut prev: Option<usize> = None;
    while q.valid() {
        if report.steps_used >= budget {
            report.finite = false;
            return report;
        }
        let i = q.index();
        if prev.is_some_and(|p| i < p) {
            report.monotonic = false;
        }
        if q.ready() {
            if !seen.insert(i) {
                report.reduced = false;
            }
            let sub = check_simple_nested(q.value(), budget.saturating_sub(report.steps_used));
            report = report.and(sub);
            if !report.finite {
                return report;
            }
        }
        prev = Some(i);
        q.advance();
        report.steps_used += 1;
    }
    report
}

/// Counts advance/skip calls at every level of a nested stream.
pub struct CountedNested<T> {
    inner: BoxStream<T>,
    counter: Rc<OpCounter>,
}

impl<T: 'static> Clone for CountedNested<T> {
    fn clone(&self) -> Self {
        CountedNested {
            inner: self.inner.clone(),
            counter: Rc::clone(&self.counter),
        }
    }
}

pub fn counted_nested<T: 'static>(v: Nested<T>, counter: &Rc<OpCounter>) -> Nested<T> {
    match v {
        Nested::Scalar(x) => Nested::Scalar(x),
        Nested::Stream(q) => Nested::boxed(CountedNested {
            inner: q,
            counter: Rc::clone(counter),
        }),
    }
}

impl<T: 'static> IndexedStream for CountedNested<T> {
    type Index = usize;
    type Value = Nested<T>;

    fn valid(&self) -> bool {
        self.inner.valid()
    }
    fn index(&self) -> usize {
        self.inner.index()
    }
    fn ready(&self) -> bool {
        self.inner.ready()
    }
    fn value(&self) -> Nested<T> {
        counted_nested(self.inner.value(), &self.counter)
    }
    fn advance(&mut self) {
        self.counter.record_advance();
        self.inner.advance()
    }
    fn searchable(&self) -> bool {
        self.inner.searchable()
    }
    fn skip(&mut self, target: usize) {
        self.counter.record_skip();
        self.inner.skip(target)
    }
}
