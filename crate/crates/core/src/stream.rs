//! Indexed streams: cursors that emit `(index, value)` pairs at ready states.
//!
//! A stream is a state machine. `valid() == false` models the terminal state,
//! on which `advance` is a no-op. `index()` must be defined at every valid
//! state, ready or not, because merges order streams by it. `value()` is only
//! consulted at ready states.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;

use crate::error::BudgetExceeded;
use crate::semiring::Semiring;

/// Default number of transitions one evaluation may take.
pub const DEFAULT_STATE_BUDGET: u64 = 10_000_000;

pub trait IndexedStream {
    type Index: Copy + Ord + fmt::Debug + 'static;
    type Value;

    fn valid(&self) -> bool;

    /// Defined whenever `valid()`.
    fn index(&self) -> Self::Index;

    /// Defined whenever `valid()`.
    fn ready(&self) -> bool;

    /// Defined whenever `valid() && ready()`.
    fn value(&self) -> Self::Value;

    /// Moves to the successor state. No-op on the terminal state.
    fn advance(&mut self);

    /// Whether `skip` is faster than repeated `advance`.
    fn searchable(&self) -> bool {
        false
    }

    /// Moves forward to the first state whose index is `>= target`, never
    /// passing a state with a larger-or-equal index. Streams without an
    /// accelerated implementation fall back to advancing one state at a time.
    fn skip(&mut self, target: Self::Index) {
        while self.valid() && self.index() < target {
            self.advance();
        }
    }
}

impl<S: IndexedStream + ?Sized> IndexedStream for Box<S> {
    type Index = S::Index;
    type Value = S::Value;

    fn valid(&self) -> bool {
        (**self).valid()
    }
    fn index(&self) -> S::Index {
        (**self).index()
    }
    fn ready(&self) -> bool {
        (**self).ready()
    }
    fn value(&self) -> S::Value {
        (**self).value()
    }
    fn advance(&mut self) {
        (**self).advance()
    }
    fn searchable(&self) -> bool {
        (**self).searchable()
    }
    fn skip(&mut self, target: S::Index) {
        (**self).skip(target)
    }
}

/// Caps the number of transitions an evaluation may take.
#[derive(Clone, Debug)]
pub struct Budget {
    limit: u64,
    used: u64,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget { limit, used: 0 }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn tick(&mut self) -> Result<(), BudgetExceeded> {
        self.used += 1;
        if self.used > self.limit {
            Err(BudgetExceeded { budget: self.limit })
        } else {
            Ok(())
        }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::new(DEFAULT_STATE_BUDGET)
    }
}

/// Stream that is terminal from the start.
pub struct Empty<I, V>(std::marker::PhantomData<fn() -> (I, V)>);

impl<I, V> Empty<I, V> {
    pub fn new() -> Self {
        Empty(std::marker::PhantomData)
    }
}

impl<I, V> Default for Empty<I, V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<I, V> Clone for Empty<I, V> {
    fn clone(&self) -> Self {
        Self::new()
    }
}

impl<I: Copy + Ord + fmt::Debug + 'static, V> IndexedStream for Empty<I, V> {
    type Index = I;
    type Value = V;

    fn valid(&self) -> bool {
        false
    }
    fn index(&self) -> I {
        panic!("index() on a terminal stream")
    }
    fn ready(&self) -> bool {
        false
    }
    fn value(&self) -> V {
        panic!("value() on a terminal stream")
    }
    fn advance(&mut self) {}
    fn searchable(&self) -> bool {
        true
    }
    fn skip(&mut self, _target: I) {}
}

/// One explicit state of a [`TraceStream`].
#[derive(Clone, Debug, PartialEq)]
pub struct TraceState<I, V> {
    pub index: I,
    pub ready: bool,
    pub value: V,
}

/// A stream given by its full list of non-terminal states, visited in order.
///
/// The state space is `0..=n` with `n` terminal. Non-ready states, repeated
/// indices and order violations are all representable, which makes this the
/// workhorse for property tests. A sorted list of `(coordinate, value)`
/// pairs with every state ready is the coordinate-list stream.
pub struct TraceStream<I, V> {
    states: Rc<[TraceState<I, V>]>,
    pos: usize,
    sorted: bool,
}

impl<I, V> Clone for TraceStream<I, V> {
    fn clone(&self) -> Self {
        TraceStream {
            states: Rc::clone(&self.states),
            pos: self.pos,
            sorted: self.sorted,
        }
    }
}

impl<I: Copy + Ord, V> TraceStream<I, V> {
    pub fn new(states: Vec<TraceState<I, V>>) -> Self {
        let sorted = states.windows(2).all(|w| w[0].index <= w[1].index);
        TraceStream {
            states: states.into(),
            pos: 0,
            sorted,
        }
    }

    /// Coordinate-list stream: every state ready.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (I, V)>) -> Self {
        Self::new(
            pairs
                .into_iter()
                .map(|(index, value)| TraceState {
                    index,
                    ready: true,
                    value,
                })
                .collect(),
        )
    }

    pub fn states(&self) -> &[TraceState<I, V>] {
        &self.states
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}

impl<I: Copy + Ord + fmt::Debug + 'static, V: Clone> IndexedStream for TraceStream<I, V> {
    type Index = I;
    type Value = V;

    fn valid(&self) -> bool {
        self.pos < self.states.len()
    }
    fn index(&self) -> I {
        self.states[self.pos].index
    }
    fn ready(&self) -> bool {
        self.states[self.pos].ready
    }
    fn value(&self) -> V {
        self.states[self.pos].value.clone()
    }
    fn advance(&mut self) {
        if self.pos < self.states.len() {
            self.pos += 1;
        }
    }
    fn searchable(&self) -> bool {
        self.sorted
    }
    fn skip(&mut self, target: I) {
        if !self.sorted {
            while self.valid() && self.index() < target {
                self.advance();
            }
            return;
        }
        let rest = &self.states[self.pos..];
        self.pos += rest.partition_point(|s| s.index < target);
    }
}

/// Advance/skip call counts shared between instrumented cursors.
#[derive(Debug, Default)]
pub struct OpCounter {
    advances: Cell<u64>,
    skips: Cell<u64>,
}

impl OpCounter {
    pub fn new() -> Rc<Self> {
        Rc::new(OpCounter::default())
    }

    pub fn advances(&self) -> u64 {
        self.advances.get()
    }

    pub fn skips(&self) -> u64 {
        self.skips.get()
    }

    pub fn total(&self) -> u64 {
        self.advances() + self.skips()
    }

    pub fn record_advance(&self) {
        self.advances.set(self.advances.get() + 1);
    }

    pub fn record_skip(&self) {
        self.skips.set(self.skips.get() + 1);
    }

    pub fn reset(&self) {
        self.advances.set(0);
        self.skips.set(0);
    }
}

/// Wraps a stream and records every `advance` and `skip` call made on it.
#[derive(Clone)]
pub struct Counted<S> {
    inner: S,
    counter: Rc<OpCounter>,
}

impl<S> Counted<S> {
    pub fn new(inner: S, counter: Rc<OpCounter>) -> Self {
        Counted { inner, counter }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: IndexedStream> IndexedStream for Counted<S> {
    type Index = S::Index;
    type Value = S::Value;

    fn valid(&self) -> bool {
        self.inner.valid()
    }
    fn index(&self) -> S::Index {
        self.inner.index()
    }
    fn ready(&self) -> bool {
        self.inner.ready()
    }
    fn value(&self) -> S::Value {
        self.inner.value()
    }
    fn advance(&mut self) {
        self.counter.record_advance();
        self.inner.advance()
    }
    fn searchable(&self) -> bool {
        self.inner.searchable()
    }
    fn skip(&mut self, target: S::Index) {
        self.counter.record_skip();
        self.inner.skip(target)
    }
}

/// The single-state term: `index ↦ f(value)` when ready, nothing otherwise.
pub fn state_term<S, R>(q: &S, f: &mut impl FnMut(S::Value) -> R) -> Option<(S::Index, R)>
where
    S: IndexedStream,
{
    if q.valid() && q.ready() {
        Some((q.index(), f(q.value())))
    } else {
        None
    }
}

/// Evaluates a stream into the function it denotes, summing `f(value)` over
/// every reachable ready state. Repeated indices accumulate with `s.add`, so
/// the stream need not be reduced.
pub fn eval_stream<St, Sr>(
    mut q: St,
    mut f: impl FnMut(St::Value) -> Sr::Elem,
    s: &Sr,
    budget: &mut Budget,
) -> Result<BTreeMap<St::Index, Sr::Elem>, BudgetExceeded>
where
    St: IndexedStream,
    Sr: Semiring,
{
    let mut out: BTreeMap<St::Index, Sr::Elem> = BTreeMap::new();
    while q.valid() {
        budget.tick()?;
        if let Some((i, v)) = state_term(&q, &mut f) {
            match out.get_mut(&i) {
                Some(acc) => *acc = s.add(acc, &v),
                None => {
                    out.insert(i, v);
                }
            }
        }
        q.advance();
    }
    Ok(out)
}

/// Result of [`check_simple`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimplicityReport {
    pub finite: bool,
    pub monotonic: bool,
    pub reduced: bool,
    pub steps_used: u64,
}

impl SimplicityReport {
    pub fn is_simple(&self) -> bool {
        self.finite && self.monotonic && self.reduced
    }

    pub fn and(self, other: SimplicityReport) -> SimplicityReport {
        SimplicityReport {
            finite: self.finite && other.finite,
            monotonic: self.monotonic && other.monotonic,
            reduced: self.reduced && other.reduced,
            steps_used: self.steps_used + other.steps_used,
        }
    }
}

/// Runs the stream to its terminal state and reports whether it is finite,
/// monotonic and reduced. Only the top level is inspected; see
/// [`crate::combinators::check_simple_nested`] for nested streams.
pub fn check_simple<S: IndexedStream>(mut q: S, budget: u64) -> SimplicityReport {
    let mut monotonic = true;
    let mut reduced = true;
    let mut seen = BTreeSet::new();
    let mut prev: Option<S::Index> = None;
    let mut steps = 0u64;
    while q.valid() {
        if steps >= budget {
            return SimplicityReport {
                finite: false,
                monotonic,
                reduced,
                steps_used: steps,
            };
        }
        let i = q.index();
        if let Some(p) = prev {
            if i < p {
                monotonic = false;
            }
        }
        if q.ready() && !seen.insert(i) {
            reduced = false;
        }
        prev = Some(i);
        q.advance();
        steps += 1;
    }
    SimplicityReport {
        finite: true,
        monotonic,
        reduced,
        steps_used: steps,
    }
}

/// Size measurements of a stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SizeMetrics {
    /// Reachable states, terminal included.
    pub size0: u64,
    /// Work to reach every term: each non-ready state counts one, each ready
    /// state counts the size of its value, and a scalar value counts one.
    pub size: u64,
    pub advances: u64,
    pub skips: u64,
}

/// Measures a single-level stream, sizing each ready value with `value_size`.
pub fn measure<S: IndexedStream>(
    mut q: S,
    mut value_size: impl FnMut(S::Value) -> Result<u64, BudgetExceeded>,
    budget: &mut Budget,
) -> Result<SizeMetrics, BudgetExceeded> {
    let mut m = SizeMetrics {
        size0: 1,
        ..SizeMetrics::default()
    };
    while q.valid() {
        budget.tick()?;
        m.size += if q.ready() { value_size(q.value())? } else { 1 };
        m.size0 += 1;
        q.advance();
        m.advances += 1;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiring::{Arithmetic, Integer};

    fn coords(pairs: &[(u32, f64)]) -> TraceStream<u32, f64> {
        TraceStream::from_pairs(pairs.iter().copied())
    }

    #[test]
    fn eval_coordinate_list() {
        let out = eval_stream(coords(&[(2, 5.0), (7, 3.0)]), |v| v, &Arithmetic, &mut Budget::default()).unwrap();
        assert_eq!(out, BTreeMap::from([(2, 5.0), (7, 3.0)]));
    }

    #[test]
    fn eval_empty_is_zero_map() {
        let out = eval_stream(Empty::<u32, i64>::new(), |v| v, &Integer, &mut Budget::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn eval_sums_repeated_index() {
        let q = TraceStream::from_pairs([(4u32, 1i64), (4, 2)]);
        let out = eval_stream(q, |v| v, &Integer, &mut Budget::default()).unwrap();
        assert_eq!(out, BTreeMap::from([(4, 3)]));
    }

    #[test]
    fn eval_respects_budget() {
        let q = TraceStream::from_pairs((0..10u32).map(|i| (i, 1i64)));
        let err = eval_stream(q, |v| v, &Integer, &mut Budget::new(5)).unwrap_err();
        assert_eq!(err.budget, 5);
    }

    #[test]
    fn simple_reports() {
        assert!(check_simple(coords(&[(1, 1.0), (4, 2.0), (9, 3.0)]), 100).is_simple());
        let r = check_simple(coords(&[(3, 1.0), (1, 1.0)]), 100);
        assert!(!r.monotonic && r.reduced && r.finite);
        let r = check_simple(coords(&[(2, 1.0), (2, 1.0)]), 100);
        assert!(r.monotonic && !r.reduced);
        let r = check_simple(coords(&[(2, 1.0), (3, 1.0)]), 1);
        assert!(!r.finite);
    }

    #[test]
    fn non_ready_repeat_is_still_reduced() {
        let q = TraceStream::new(vec![
            TraceState { index: 2u32, ready: false, value: 0i64 },
            TraceState { index: 2, ready: true, value: 1 },
        ]);
        assert!(check_simple(q, 10).is_simple());
    }

    #[test]
    fn size_of_coordinate_list() {
        let q = coords(&[(0, 1.0), (1, 1.0), (3, 1.0), (5, 1.0), (8, 1.0)]);
        let m = measure(q, |_| Ok(1), &mut Budget::default()).unwrap();
        assert_eq!(m.size0, 6);
        assert_eq!(m.size, 5);
    }

    #[test]
    fn skip_on_sorted_trace() {
        let mut q = coords(&[(1, 1.0), (4, 2.0), (9, 3.0)]);
        q.skip(5);
        assert_eq!(q.index(), 9);
        q.skip(2);
        assert_eq!(q.index(), 9);
        q.skip(10);
        assert!(!q.valid());
    }

    #[test]
    fn counted_records_calls() {
        let counter = OpCounter::new();
        let mut q = Counted::new(coords(&[(1, 1.0), (4, 2.0)]), Rc::clone(&counter));
        q.advance();
        q.skip(9);
        assert_eq!((counter.advances(), counter.skips()), (1, 1));
    }
}
