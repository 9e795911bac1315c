#![allow(dead_code)]

use std::collections::BTreeMap;
use std::rc::Rc;

use etch_core::codegen::{lower, run_prog};
use etch_core::combinators::{eval_nested, IndexUniverse, Nested, NestedStream, StreamCtx};
use etch_core::expr::{compile, interpret, interpret_oracle, reference_eval, to_problem, Bindings, Bound};
use etch_core::oracle::contract_reference;
use etch_core::ExprError;
use etch_core::formats::{CooTensor, TensorFormat};
use etch_core::oracle::SparseVariable;
use etch_core::semiring::{Arithmetic, Boolean, Integer, MinPlus, Semiring, Tropical};
use etch_core::stream::{TraceState, TraceStream, DEFAULT_STATE_BUDGET};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Semirings with a sampler for random values, mostly non-zero.
pub trait Sample: Semiring {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Self::Elem;
}

impl Sample for Integer {
    fn sample(&self, rng: &mut ChaCha8Rng) -> i64 {
        let x = rng.gen_range(1..=9);
        if rng.gen_bool(0.3) {
            -x
        } else {
            x
        }
    }
}

impl Sample for Boolean {
    fn sample(&self, _: &mut ChaCha8Rng) -> bool {
        true
    }
}

impl Sample for MinPlus<i64> {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Tropical<i64> {
        if rng.gen_bool(0.1) {
            return Tropical::Infinity;
        }
        Tropical::Finite(rng.gen_range(0..20))
    }
}

impl Sample for Arithmetic {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(-2.0..2.0)
    }
}

/// Random sparse tensor: every coordinate present with probability `density`.
pub fn random_coo<S: Sample>(s: &S, rng: &mut ChaCha8Rng, dims: &[usize], density: f64) -> CooTensor<S::Elem> {
    let mut entries = Vec::new();
    for c in etch_core::oracle::odometer(dims) {
        if rng.gen_bool(density) {
            entries.push((c, s.sample(rng)));
        }
    }
    CooTensor::new(s, dims.to_vec(), entries).unwrap()
}

/// Random sparse tensor with exactly `nnz` distinct coordinates.
pub fn random_coo_nnz<S: Sample>(s: &S, rng: &mut ChaCha8Rng, dims: &[usize], nnz: usize) -> CooTensor<S::Elem> {
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < nnz {
        let c: Vec<usize> = dims.iter().map(|&d| rng.gen_range(0..d)).collect();
        seen.insert(c);
    }
    let entries = seen.into_iter().map(|c| (c, s.sample(rng))).collect();
    CooTensor::new(s, dims.to_vec(), entries).unwrap()
}

pub fn bind<T: Clone>(pairs: Vec<(&str, CooTensor<T>, TensorFormat)>) -> Bindings<T> {
    pairs
        .into_iter()
        .map(|(n, t, f)| (n.to_string(), Bound::new(t, f)))
        .collect::<BTreeMap<_, _>>()
}

pub fn random_format(rng: &mut ChaCha8Rng) -> TensorFormat {
    *[TensorFormat::Dcsr, TensorFormat::Csr, TensorFormat::Dense]
        .choose(rng)
        .unwrap()
}

/// A random simple one-level trace: at most `max_states` states with
/// non-decreasing indices below `max_index`; ready indices are distinct.
pub fn simple_trace<V: Clone>(
    rng: &mut ChaCha8Rng,
    max_states: usize,
    max_index: usize,
    mut value: impl FnMut(&mut ChaCha8Rng) -> V,
) -> Vec<TraceState<usize, V>> {
    let n = rng.gen_range(0..=max_states);
    let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..max_index)).collect();
    idx.sort_unstable();
    let mut out: Vec<TraceState<usize, V>> = Vec::with_capacity(n);
    let mut last_ready: Option<usize> = None;
    for i in idx {
        let ready = last_ready != Some(i) && rng.gen_bool(0.75);
        if ready {
            last_ready = Some(i);
        }
        out.push(TraceState {
            index: i,
            ready,
            value: value(rng),
        });
    }
    out
}

/// A random simple nested stream with `depth` levels.
pub fn simple_nested<S: Sample>(s: &S, rng: &mut ChaCha8Rng, depth: usize, max_states: usize, max_index: usize) -> Nested<S::Elem> {
    if depth == 0 {
        return Nested::Scalar(s.sample(rng));
    }
    let states = simple_trace(rng, max_states, max_index, |r| simple_nested(s, r, depth - 1, max_states, max_index));
    Nested::boxed(TraceStream::new(states))
}

pub fn ctx<S: Semiring>(s: S, skipping: bool) -> Rc<StreamCtx<S>> {
    StreamCtx::new(s, skipping, DEFAULT_STATE_BUDGET)
}

pub fn eval<S: Semiring>(c: &Rc<StreamCtx<S>>, u: &IndexUniverse, q: &NestedStream<S::Elem>) -> SparseVariable<S::Elem> {
    eval_nested(c, u, q.clone()).unwrap()
}

pub fn universe(sizes: &[(&str, usize)]) -> IndexUniverse {
    IndexUniverse::new(sizes.iter().map(|(n, d)| (n.to_string(), *d))).unwrap()
}

pub fn formats_of<T>(b: &Bindings<T>) -> BTreeMap<String, TensorFormat> {
    b.iter().map(|(n, v)| (n.clone(), v.format)).collect()
}

/// Evaluates `text` through every path and checks they agree. Returns
/// false when the expression does not sort-check.
pub fn agree<S: Sample + Clone>(s: &S, text: &str, b: &Bindings<S::Elem>, order: Option<&[String]>) -> Result<bool, String> {
    let sorted = match compile(text, b, order) {
        Ok(x) => x,
        Err(ExprError::Syntax { .. }) => return Err(format!("generator produced bad syntax: {text}")),
        Err(_) => return Ok(false),
    };
    let u = &sorted.universe;
    let reference = reference_eval(s, &sorted, b).map_err(|e| e.to_string())?;
    let check = |what: &str, got: &SparseVariable<S::Elem>| -> Result<(), String> {
        if got.same(s, &reference) {
            Ok(())
        } else {
            Err(format!(
                "{what} disagrees on `{text}` ({}):\n  got  {}\n  want {}",
                sorted,
                got.describe(s, u),
                reference.describe(s, u)
            ))
        }
    };
    let oracle = interpret_oracle(s, &sorted, b).map_err(|e| e.to_string())?;
    check("variable algebra", &oracle)?;
    for skipping in [false, true] {
        let c = ctx(s.clone(), skipping);
        let q = interpret(&c, &sorted, b).map_err(|e| e.to_string())?;
        check(if skipping { "streams (skipping)" } else { "streams" }, &eval(&c, u, &q))?;
    }
    let kernel = lower(&sorted, &formats_of(b)).map_err(|e| e.to_string())?;
    let run = run_prog(&kernel, b, s).map_err(|e| format!("{e} on `{text}`"))?;
    check("kernel", &run.output)?;
    if let Some(p) = to_problem(s, &sorted, b).map_err(|e| e.to_string())? {
        check("contraction reference", &contract_reference(s, u, &p).map_err(|e| e.to_string())?)?;
    }
    Ok(true)
}

const NAMES: [&str; 4] = ["i", "j", "k", "l"];

/// A random expression problem: bindings plus expression text.
pub struct RandomExpr<T> {
    pub text: String,
    pub bindings: Bindings<T>,
}

/// Random expression over at most four indices with domains of size at
/// most `max_dim`, at most three variables, depth at most four.
pub fn random_expr<S: Sample>(s: &S, rng: &mut ChaCha8Rng, max_dim: usize) -> RandomExpr<S::Elem> {
    let n_idx = rng.gen_range(1..=4);
    let square = rng.gen_bool(0.4);
    let d = rng.gen_range(1..=max_dim);
    let sizes: Vec<usize> = (0..n_idx)
        .map(|_| if square { d } else { rng.gen_range(1..=max_dim) })
        .collect();
    let n_vars = rng.gen_range(1..=3);
    let mut vars: Vec<(String, Vec<usize>)> = Vec::new();
    let mut bindings = BTreeMap::new();
    for v in 0..n_vars {
        let rank = rng.gen_range(1..=n_idx.min(3));
        let mut ids: Vec<usize> = (0..n_idx).collect();
        ids.shuffle(rng);
        ids.truncate(rank);
        let dims: Vec<usize> = ids.iter().map(|&i| sizes[i]).collect();
        let density = *[0.1, 0.3, 0.6].choose(rng).unwrap();
        let name = ["A", "B", "C"][v].to_string();
        let t = random_coo(s, rng, &dims, density);
        bindings.insert(name.clone(), Bound::new(t, random_format(rng)));
        vars.push((name, ids));
    }
    let (text, _) = gen_term(rng, &vars, &sizes, 4);
    RandomExpr { text, bindings }
}

/// Some other distinct indices with the same sizes as `ids`, if any.
fn reindex(rng: &mut ChaCha8Rng, ids: &[usize], sizes: &[usize]) -> Option<Vec<usize>> {
    let mut out: Vec<usize> = Vec::new();
    for &i in ids {
        let options: Vec<usize> = (0..sizes.len())
            .filter(|&j| sizes[j] == sizes[i] && !out.contains(&j))
            .collect();
        out.push(*options.choose(rng)?);
    }
    Some(out)
}

fn gen_term(rng: &mut ChaCha8Rng, vars: &[(String, Vec<usize>)], sizes: &[usize], depth: usize) -> (String, Vec<usize>) {
    let leaf = depth <= 1 || rng.gen_bool(0.3);
    if leaf {
        let (name, ids) = vars.choose(rng).unwrap();
        let ids = if rng.gen_bool(0.3) {
            reindex(rng, ids, sizes).unwrap_or_else(|| ids.clone())
        } else {
            ids.clone()
        };
        let args: Vec<&str> = ids.iter().map(|&i| NAMES[i]).collect();
        let mut shape = ids.clone();
        shape.sort_unstable();
        return (format!("{name}({})", args.join(",")), shape);
    }
    match rng.gen_range(0..3) {
        0 | 1 => {
            let (a, sa) = gen_term(rng, vars, sizes, depth - 1);
            let (b, sb) = gen_term(rng, vars, sizes, depth - 1);
            let mut shape: Vec<usize> = sa.iter().chain(&sb).copied().collect();
            shape.sort_unstable();
            shape.dedup();
            let op = if rng.gen_bool(0.7) { "*" } else { "+" };
            (format!("({a} {op} {b})"), shape)
        }
        _ => {
            let (a, sa) = gen_term(rng, vars, sizes, depth - 1);
            if sa.is_empty() {
                return (a, sa);
            }
            let i = *sa.choose(rng).unwrap();
            let shape = sa.iter().copied().filter(|&x| x != i).collect();
            (format!("sum({}, {a})", NAMES[i]), shape)
        }
    }
}

/// Proptest strategies for simple traces over indices `0..8`.
pub mod strategies {
    use etch_core::combinators::Nested;
    use etch_core::semiring::Tropical;
    use etch_core::stream::{TraceState, TraceStream};
    use proptest::prelude::*;

    pub type Trace<V> = Vec<TraceState<usize, V>>;

    /// Sorted indices, ready states at distinct indices, at most 8 states.
    pub fn trace<V: Clone + std::fmt::Debug + 'static>(value: BoxedStrategy<V>) -> BoxedStrategy<Trace<V>> {
        prop::collection::vec((0usize..8, prop::bool::weighted(0.75), value), 0..=8)
            .prop_map(|mut v| {
                v.sort_by_key(|x| x.0);
                let mut last = None;
                v.into_iter()
                    .map(|(index, r, value)| {
                        let ready = r && last != Some(index);
                        if ready {
                            last = Some(index);
                        }
                        TraceState { index, ready, value }
                    })
                    .collect()
            })
            .boxed()
    }

    pub fn trace2<V: Clone + std::fmt::Debug + 'static>(value: BoxedStrategy<V>) -> BoxedStrategy<Trace<Trace<V>>> {
        trace(trace(value))
    }

    pub fn nested1<V: Clone + 'static>(t: &Trace<V>) -> Nested<V> {
        let states = t
            .iter()
            .map(|s| TraceState {
                index: s.index,
                ready: s.ready,
                value: Nested::Scalar(s.value.clone()),
            })
            .collect();
        Nested::boxed(TraceStream::new(states))
    }

    pub fn nested2<V: Clone + 'static>(t: &Trace<Trace<V>>) -> Nested<V> {
        let states = t
            .iter()
            .map(|s| TraceState {
                index: s.index,
                ready: s.ready,
                value: nested1(&s.value),
            })
            .collect();
        Nested::boxed(TraceStream::new(states))
    }

    pub fn int() -> BoxedStrategy<i64> {
        (-9i64..=9).boxed()
    }

    pub fn boolean() -> BoxedStrategy<bool> {
        any::<bool>().boxed()
    }

    pub fn tropical() -> BoxedStrategy<Tropical<i64>> {
        prop_oneof![4 => (0i64..20).prop_map(Tropical::Finite), 1 => Just(Tropical::Infinity)].boxed()
    }
}
