//! Stream combinators against the variable operators, on random simple
//! streams.

mod common;

use std::rc::Rc;

use common::strategies::*;
use common::{ctx, universe};
use etch_core::combinators::{
    add_nested, check_simple_nested, eval_nested, measure_nested, mul_nested, rep_nested, sum_nested, IndexUniverse,
    NestedStream, StreamCtx,
};
use etch_core::oracle::{var_add, var_mul, var_rep, var_sum};
use etch_core::semiring::{Boolean, Integer, MinPlus, Semiring};
use etch_core::stream::Budget;
use etch_core::SparseVariable;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

fn u() -> IndexUniverse {
    universe(&[("i", 8), ("j", 8)])
}

fn ev<S: Semiring>(c: &Rc<StreamCtx<S>>, u: &IndexUniverse, q: &NestedStream<S::Elem>) -> SparseVariable<S::Elem> {
    eval_nested(c, u, q.clone()).expect("budget")
}

fn same<S: Semiring>(s: &S, u: &IndexUniverse, what: &str, got: &SparseVariable<S::Elem>, want: &SparseVariable<S::Elem>) -> Result<(), TestCaseError> {
    prop_assert!(
        got.same(s, want),
        "{what}: got {} want {}",
        got.describe(s, u),
        want.describe(s, u)
    );
    Ok(())
}

fn simple<T: Clone + 'static>(what: &str, q: &NestedStream<T>) -> Result<(), TestCaseError> {
    let r = check_simple_nested(q.root.clone(), 100_000);
    prop_assert!(r.is_simple(), "{what} is not simple: {r:?}");
    Ok(())
}

/// Every law on one pair of one-level and one pair of two-level streams.
fn laws<S: Semiring + Clone>(
    s: S,
    a1: &Trace<S::Elem>,
    b1: &Trace<S::Elem>,
    a2: &Trace<Trace<S::Elem>>,
    b2: &Trace<Trace<S::Elem>>,
) -> Result<(), TestCaseError> {
    let u = u();
    for skipping in [false, true] {
        let c = ctx(s.clone(), skipping);
        let x1 = NestedStream::new(vec![0], nested1(a1));
        let y1 = NestedStream::new(vec![0], nested1(b1));
        let x2 = NestedStream::new(vec![0, 1], nested2(a2));
        let y2 = NestedStream::new(vec![0, 1], nested2(b2));
        let (vx1, vy1, vx2, vy2) = (ev(&c, &u, &x1), ev(&c, &u, &y1), ev(&c, &u, &x2), ev(&c, &u, &y2));

        for (x, y, vx, vy) in [(&x1, &y1, &vx1, &vy1), (&x2, &y2, &vx2, &vy2)] {
            let m = mul_nested(&c, &u, x.clone(), y.clone()).unwrap();
            simple("product", &m)?;
            same(&s, &u, "mul", &ev(&c, &u, &m), &var_mul(&s, vx, vy).unwrap())?;
            let a = add_nested(&c, &u, x.clone(), y.clone()).unwrap();
            simple("sum", &a)?;
            same(&s, &u, "add", &ev(&c, &u, &a), &var_add(&s, vx, vy).unwrap())?;
        }
        for i in [0, 1] {
            let q = sum_nested(&c, &u, i, x2.clone()).unwrap();
            simple("contraction", &q)?;
            same(&s, &u, "sum", &ev(&c, &u, &q), &var_sum(&s, &u, i, &vx2).unwrap())?;
        }
        let q = sum_nested(&c, &u, 0, x1.clone()).unwrap();
        same(&s, &u, "sum to scalar", &ev(&c, &u, &q), &var_sum(&s, &u, 0, &vx1).unwrap())?;

        let q = rep_nested(&u, 1, x1.clone()).unwrap();
        simple("replication", &q)?;
        same(&s, &u, "rep inner", &ev(&c, &u, &q), &var_rep(&u, 1, &vx1).unwrap())?;
        let z1 = NestedStream::new(vec![1], nested1(a1));
        let vz1 = ev(&c, &u, &z1);
        let q = rep_nested(&u, 0, z1).unwrap();
        simple("replication", &q)?;
        same(&s, &u, "rep outer", &ev(&c, &u, &q), &var_rep(&u, 0, &vz1).unwrap())?;

        // size0(a·b) ≤ size0(a) + size0(b)
        let m = mul_nested(&c, &u, x1.clone(), y1.clone()).unwrap();
        let mut budget = Budget::new(1_000_000);
        let (sa, sb, sm) = (
            measure_nested(x1.root.clone(), &mut budget).unwrap().size0,
            measure_nested(y1.root.clone(), &mut budget).unwrap().size0,
            measure_nested(m.root, &mut budget).unwrap().size0,
        );
        prop_assert!(sm <= sa + sb, "size0 {sm} > {sa} + {sb}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn integer_laws(a1 in trace(int()), b1 in trace(int()), a2 in trace2(int()), b2 in trace2(int())) {
        laws(Integer, &a1, &b1, &a2, &b2)?;
    }

    #[test]
    fn boolean_laws(a1 in trace(boolean()), b1 in trace(boolean()), a2 in trace2(boolean()), b2 in trace2(boolean())) {
        laws(Boolean, &a1, &b1, &a2, &b2)?;
    }

    #[test]
    fn tropical_laws(a1 in trace(tropical()), b1 in trace(tropical()), a2 in trace2(tropical()), b2 in trace2(tropical())) {
        laws(MinPlus::<i64>::default(), &a1, &b1, &a2, &b2)?;
    }
}
