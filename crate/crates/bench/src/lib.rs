//! Fixtures shared by the benchmarks.

use std::collections::{BTreeMap, BTreeSet};

use etch_core::expr::{Bindings, Bound};
use etch_core::{CooTensor, Integer, TensorFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// An `n x n` integer matrix with `per_row` distinct columns in every row.
pub fn rows_matrix(seed: u64, n: usize, per_row: usize) -> CooTensor<i64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n * per_row);
    for i in 0..n {
        let mut cols = BTreeSet::new();
        while cols.len() < per_row.min(n) {
            cols.insert(r.gen_range(0..n));
        }
        entries.extend(cols.into_iter().map(|j| (vec![i, j], r.gen_range(1..10))));
    }
    CooTensor::new(&Integer, vec![n, n], entries).unwrap()
}

/// A vector with `nnz` entries spread evenly over `0..len`.
pub fn spread_vector(len: usize, nnz: usize) -> CooTensor<i64> {
    let entries = (0..nnz).map(|x| (vec![x * (len - 1) / (nnz - 1).max(1)], 1)).collect();
    CooTensor::new(&Integer, vec![len], entries).unwrap()
}

pub fn bind(pairs: Vec<(&str, CooTensor<i64>, TensorFormat)>) -> Bindings<i64> {
    pairs
        .into_iter()
        .map(|(n, t, f)| (n.to_string(), Bound::new(t, f)))
        .collect::<BTreeMap<_, _>>()
}
