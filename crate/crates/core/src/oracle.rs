//! Dense functional semantics: variables as finite maps and the three
//! contraction operators on them. Deliberately naive; this is the trusted
//! slow path every stream result is compared against.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::combinators::{IndexId, IndexUniverse};
use crate::error::OracleError;
use crate::semiring::Semiring;

/// Largest indexing set the brute-force reference will enumerate.
pub const ORACLE_MAX_POINTS: u128 = 1 << 16;

/// A function `I_S → R` stored as its support. Coordinates are listed in
/// ascending index order (the order of the universe); absent means zero.
#[derive(Clone, PartialEq)]
pub struct SparseVariable<T> {
    indices: Vec<IndexId>,
    dims: Vec<usize>,
    entries: BTreeMap<Vec<usize>, T>,
}

impl<T: fmt::Debug> fmt::Debug for SparseVariable<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SparseVariable")
            .field("indices", &self.indices)
            .field("dims", &self.dims)
            .field("entries", &self.entries)
            .finish()
    }
}

impl<T: Clone> SparseVariable<T> {
    /// The zero variable over `indices` (ascending).
    pub fn zero(indices: Vec<IndexId>, dims: Vec<usize>) -> Self {
        assert_eq!(indices.len(), dims.len());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        SparseVariable {
            indices,
            dims,
            entries: BTreeMap::new(),
        }
    }

    /// Zero variable shaped by `indices`, with sizes taken from `universe`.
    pub fn zero_in(universe: &IndexUniverse, indices: Vec<IndexId>) -> Self {
        let dims = indices.iter().map(|&i| universe.size(i)).collect();
        Self::zero(indices, dims)
    }

    /// Builds a normalized variable, summing duplicate coordinates.
    pub fn from_entries<S>(
        s: &S,
        indices: Vec<IndexId>,
        dims: Vec<usize>,
        entries: impl IntoIterator<Item = (Vec<usize>, T)>,
    ) -> Self
    where
        S: Semiring<Elem = T>,
    {
        let mut v = Self::zero(indices, dims);
        for (c, x) in entries {
            v.accumulate(s, c, x);
        }
        v.normalize(s);
        v
    }

    /// Adds `x` into the entry at `coord`. Call [`normalize`](Self::normalize)
    /// once accumulation is done.
    pub fn accumulate<S>(&mut self, s: &S, coord: Vec<usize>, x: T)
    where
        S: Semiring<Elem = T>,
    {
        debug_assert_eq!(coord.len(), self.indices.len());
        debug_assert!(coord.iter().zip(&self.dims).all(|(c, d)| c < d));
        match self.entries.get_mut(&coord) {
            Some(acc) => *acc = s.add(acc, &x),
            None => {
                self.entries.insert(coord, x);
            }
        }
    }

    /// Drops stored entries equal to zero.
    pub fn normalize<S>(&mut self, s: &S)
    where
        S: Semiring<Elem = T>,
    {
        self.entries.retain(|_, v| !s.is_zero(v));
    }

    pub fn indices(&self) -> &[IndexId] {
        &self.indices
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn entries(&self) -> &BTreeMap<Vec<usize>, T> {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, coord: &[usize]) -> Option<&T> {
        self.entries.get(coord)
    }

    /// Value at `coord`, zero when absent.
    pub fn at<S: Semiring<Elem = T>>(&self, s: &S, coord: &[usize]) -> T {
        self.entries.get(coord).cloned().unwrap_or_else(|| s.zero())
    }

    /// Function equality under the semiring's `eq`.
    pub fn same<S: Semiring<Elem = T>>(&self, s: &S, other: &Self) -> bool {
        if self.indices != other.indices || self.dims != other.dims {
            return false;
        }
        let keys: BTreeSet<&Vec<usize>> = self.entries.keys().chain(other.entries.keys()).collect();
        keys.into_iter()
            .all(|k| s.elem_eq(&self.at(s, k), &other.at(s, k)))
    }

    /// Human-readable list of coordinates where the two variables differ.
    pub fn diff<S: Semiring<Elem = T>>(&self, s: &S, other: &Self) -> Vec<String> {
        if self.indices != other.indices || self.dims != other.dims {
            return vec![format!(
                "shape {:?}{:?} vs {:?}{:?}",
                self.indices, self.dims, other.indices, other.dims
            )];
        }
        let keys: BTreeSet<&Vec<usize>> = self.entries.keys().chain(other.entries.keys()).collect();
        keys.into_iter()
            .filter_map(|k| {
                let (a, b) = (self.at(s, k), other.at(s, k));
                (!s.elem_eq(&a, &b)).then(|| format!("{k:?}: {} vs {}", s.format_elem(&a), s.format_elem(&b)))
            })
            .collect()
    }

    fn names(&self, universe: &IndexUniverse) -> Vec<String> {
        self.indices.iter().map(|&i| universe.name(i).to_string()).collect()
    }
}

/// Pointwise product of two variables of the same shape.
pub fn var_mul<S: Semiring>(
    s: &S,
    a: &SparseVariable<S::Elem>,
    b: &SparseVariable<S::Elem>,
) -> Result<SparseVariable<S::Elem>, OracleError> {
    check_same_shape(a, b)?;
    let mut out = SparseVariable::zero(a.indices.clone(), a.dims.clone());
    for (k, x) in &a.entries {
        if let Some(y) = b.entries.get(k) {
            out.entries.insert(k.clone(), s.mul(x, y));
        }
    }
    out.normalize(s);
    Ok(out)
}

/// Pointwise sum of two variables of the same shape.
pub fn var_add<S: Semiring>(
    s: &S,
    a: &SparseVariable<S::Elem>,
    b: &SparseVariable<S::Elem>,
) -> Result<SparseVariable<S::Elem>, OracleError> {
    check_same_shape(a, b)?;
    let mut out = a.clone();
    for (k, y) in &b.entries {
        out.accumulate(s, k.clone(), y.clone());
    }
    out.normalize(s);
    Ok(out)
}

fn check_same_shape<T: Clone>(a: &SparseVariable<T>, b: &SparseVariable<T>) -> Result<(), OracleError> {
    if a.indices != b.indices || a.dims != b.dims {
        return Err(OracleError::ShapeMismatch {
            left: a.indices.iter().map(|i| i.to_string()).collect(),
            right: b.indices.iter().map(|i| i.to_string()).collect(),
        });
    }
    Ok(())
}

/// Marginalizes index `i` with the semiring addition.
pub fn var_sum<S: Semiring>(
    s: &S,
    universe: &IndexUniverse,
    i: IndexId,
    a: &SparseVariable<S::Elem>,
) -> Result<SparseVariable<S::Elem>, OracleError> {
    let at = a
        .indices
        .iter()
        .position(|&x| x == i)
        .ok_or_else(|| OracleError::MissingIndex(universe.name(i).to_string()))?;
    let mut indices = a.indices.clone();
    let mut dims = a.dims.clone();
    indices.remove(at);
    dims.remove(at);
    let mut out = SparseVariable::zero(indices, dims);
    for (k, x) in &a.entries {
        let mut key = k.clone();
        key.remove(at);
        out.accumulate(s, key, x.clone());
    }
    out.normalize(s);
    Ok(out)
}

/// Replicates a variable across every value of a new index `i`.
pub fn var_rep<T: Clone>(
    universe: &IndexUniverse,
    i: IndexId,
    a: &SparseVariable<T>,
) -> Result<SparseVariable<T>, OracleError> {
    if a.indices.contains(&i) {
        return Err(OracleError::IndexPresent(universe.name(i).to_string()));
    }
    let at = a.indices.partition_point(|&x| x < i);
    let size = universe.size(i);
    let mut indices = a.indices.clone();
    let mut dims = a.dims.clone();
    indices.insert(at, i);
    dims.insert(at, size);
    let mut out = SparseVariable::zero(indices, dims);
    for (k, x) in &a.entries {
        for v in 0..size {
            let mut key = k.clone();
            key.insert(at, v);
            out.entries.insert(key, x.clone());
        }
    }
    Ok(out)
}

/// An instance of the contraction problem: the free indices are every index
/// of the universe that is not contracted.
#[derive(Clone, Debug)]
pub struct ContractionProblem<T> {
    pub factors: Vec<SparseVariable<T>>,
    pub contracted: BTreeSet<IndexId>,
}

impl<T: Clone> ContractionProblem<T> {
    pub fn free(&self, universe: &IndexUniverse) -> Vec<IndexId> {
        universe.ids().filter(|i| !self.contracted.contains(i)).collect()
    }
}

/// Ground truth by nested loops over the whole indexing set: for every full
/// assignment, multiply the factors (in order) and add into the free-index
/// projection.
pub fn contract_reference<S: Semiring>(
    s: &S,
    universe: &IndexUniverse,
    problem: &ContractionProblem<S::Elem>,
) -> Result<SparseVariable<S::Elem>, OracleError> {
    let points = universe.points();
    if points > ORACLE_MAX_POINTS {
        return Err(OracleError::TooLarge(points));
    }
    let free = problem.free(universe);
    let mut out = SparseVariable::zero_in(universe, free.clone());
    let sizes: Vec<usize> = universe.ids().map(|i| universe.size(i)).collect();
    if sizes.contains(&0) {
        return Ok(out);
    }
    let mut x = vec![0usize; sizes.len()];
    'points: loop {
        let mut prod = s.one();
        for f in &problem.factors {
            let key: Vec<usize> = f.indices.iter().map(|&i| x[i]).collect();
            match f.entries.get(&key) {
                Some(v) => prod = s.mul(&prod, v),
                None => {
                    prod = s.zero();
                    break;
                }
            }
        }
        if !s.is_zero(&prod) {
            out.accumulate(s, free.iter().map(|&i| x[i]).collect(), prod);
        }
        // odometer over the universe
        for d in (0..sizes.len()).rev() {
            x[d] += 1;
            if x[d] < sizes[d] {
                continue 'points;
            }
            x[d] = 0;
        }
        break;
    }
    out.normalize(s);
    Ok(out)
}

/// The same problem solved with the variable operators: replicate every
/// factor to the full shape, multiply left to right, then sum out the
/// contracted indices.
pub fn contract_by_operators<S: Semiring>(
    s: &S,
    universe: &IndexUniverse,
    problem: &ContractionProblem<S::Elem>,
) -> Result<SparseVariable<S::Elem>, OracleError> {
    let all: Vec<IndexId> = universe.ids().collect();
    let mut acc: Option<SparseVariable<S::Elem>> = None;
    for f in &problem.factors {
        let mut full = f.clone();
        for &i in &all {
            if !full.indices.contains(&i) {
                full = var_rep(universe, i, &full)?;
            }
        }
        acc = Some(match acc {
            None => full,
            Some(prev) => var_mul(s, &prev, &full)?,
        });
    }
    let mut acc = match acc {
        Some(a) => a,
        None => {
            // empty product is the constant one
            let mut one = SparseVariable::zero_in(universe, all.clone());
            let sizes: Vec<usize> = all.iter().map(|&i| universe.size(i)).collect();
            for key in odometer(&sizes) {
                one.entries.insert(key, s.one());
            }
            one.normalize(s);
            one
        }
    };
    for &c in &problem.contracted {
        acc = var_sum(s, universe, c, &acc)?;
    }
    Ok(acc)
}

/// Every coordinate tuple of a box, in lexicographic order.
pub fn odometer(sizes: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let empty = sizes.contains(&0);
    let mut next = if empty { None } else { Some(vec![0usize; sizes.len()]) };
    std::iter::from_fn(move || {
        let cur = next.take()?;
        let mut succ = cur.clone();
        let mut d = sizes.len();
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            succ[d] += 1;
            if succ[d] < sizes[d] {
                next = Some(succ);
                break;
            }
            succ[d] = 0;
        }
        Some(cur)
    })
}

impl<T: Clone> SparseVariable<T> {
    /// Readable rendering, for diagnostics.
    pub fn describe<S: Semiring<Elem = T>>(&self, s: &S, universe: &IndexUniverse) -> String {
        let body: Vec<String> = self
            .entries
            .iter()
            .map(|(k, v)| format!("{k:?}↦{}", s.format_elem(v)))
            .collect();
        format!("{:?} {{{}}}", self.names(universe), body.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiring::{Boolean, Integer, MinPlus, Tropical};

    fn universe(sizes: &[(&str, usize)]) -> IndexUniverse {
        IndexUniverse::new(sizes.iter().map(|(n, d)| (n.to_string(), *d))).unwrap()
    }

    fn vector(entries: &[(usize, i64)], dim: usize) -> SparseVariable<i64> {
        SparseVariable::from_entries(&Integer, vec![0], vec![dim], entries.iter().map(|&(i, v)| (vec![i], v)))
    }

    #[test]
    fn mul_intersects() {
        let a = vector(&[(1, 2), (3, 4)], 8);
        let b = vector(&[(3, 10), (5, 7)], 8);
        let p = var_mul(&Integer, &a, &b).unwrap();
        assert_eq!(p.entries(), &BTreeMap::from([(vec![3], 40)]));
        let empty = vector(&[], 8);
        assert_eq!(var_mul(&Integer, &empty, &b).unwrap().nnz(), 0);
    }

    #[test]
    fn mul_boolean_supports() {
        let mk = |ix: &[usize]| {
            SparseVariable::from_entries(&Boolean, vec![0], vec![10], ix.iter().map(|&i| (vec![i], true)))
        };
        let p = var_mul(&Boolean, &mk(&[1, 4]), &mk(&[4, 9])).unwrap();
        assert_eq!(p.entries(), &BTreeMap::from([(vec![4], true)]));
    }

    #[test]
    fn mul_shape_mismatch() {
        let a = vector(&[(1, 2)], 8);
        let b = SparseVariable::<i64>::zero(vec![1], vec![8]);
        assert!(matches!(var_mul(&Integer, &a, &b), Err(OracleError::ShapeMismatch { .. })));
    }

    #[test]
    fn sum_columns() {
        let u = universe(&[("i", 3), ("j", 4)]);
        let m = SparseVariable::from_entries(
            &Integer,
            vec![0, 1],
            vec![3, 4],
            [(vec![0, 1], 2), (vec![2, 1], 5), (vec![2, 3], 1)],
        );
        let c = var_sum(&Integer, &u, 0, &m).unwrap();
        assert_eq!(c.entries(), &BTreeMap::from([(vec![1], 7), (vec![3], 1)]));
        assert!(matches!(var_sum(&Integer, &u, 0, &c), Err(OracleError::MissingIndex(n)) if n == "i"));
    }

    #[test]
    fn sum_singleton_domain_drops_index() {
        let u = universe(&[("i", 1), ("j", 4)]);
        let m = SparseVariable::from_entries(&Integer, vec![0, 1], vec![1, 4], [(vec![0, 2], 9)]);
        let c = var_sum(&Integer, &u, 0, &m).unwrap();
        assert_eq!(c.entries(), &BTreeMap::from([(vec![2], 9)]));
    }

    #[test]
    fn tropical_sum_is_min() {
        let s = MinPlus::<i64>::new();
        let u = universe(&[("v", 4)]);
        let d = SparseVariable::from_entries(
            &s,
            vec![0],
            vec![4],
            [(vec![0], Tropical::Finite(7)), (vec![2], Tropical::Finite(3)), (vec![3], Tropical::Finite(5))],
        );
        let m = var_sum(&s, &u, 0, &d).unwrap();
        assert_eq!(m.entries(), &BTreeMap::from([(vec![], Tropical::Finite(3))]));
    }

    #[test]
    fn rep_duplicates() {
        let u = universe(&[("i", 4), ("j", 3)]);
        let a = SparseVariable::from_entries(&Integer, vec![0], vec![4], [(vec![2], 5)]);
        let r = var_rep(&u, 1, &a).unwrap();
        assert_eq!(
            r.entries(),
            &BTreeMap::from([(vec![2, 0], 5), (vec![2, 1], 5), (vec![2, 2], 5)])
        );
        assert!(matches!(var_rep(&u, 1, &r), Err(OracleError::IndexPresent(_))));
        assert_eq!(var_rep(&u, 1, &SparseVariable::<i64>::zero(vec![0], vec![4])).unwrap().nnz(), 0);
    }

    #[test]
    fn rep_then_sum_scales() {
        let u = universe(&[("i", 5), ("j", 3)]);
        let a = SparseVariable::from_entries(&Integer, vec![0], vec![5], [(vec![1], 4), (vec![4], -2)]);
        let back = var_sum(&Integer, &u, 1, &var_rep(&u, 1, &a).unwrap()).unwrap();
        assert_eq!(back.entries(), &BTreeMap::from([(vec![1], 12), (vec![4], -6)]));
    }

    #[test]
    fn reference_matmul_2x2() {
        let u = universe(&[("i", 2), ("j", 2), ("k", 2)]);
        let a = SparseVariable::from_entries(
            &Integer,
            vec![0, 1],
            vec![2, 2],
            [(vec![0, 0], 1), (vec![0, 1], 2), (vec![1, 0], 3), (vec![1, 1], 4)],
        );
        let b = SparseVariable::from_entries(
            &Integer,
            vec![1, 2],
            vec![2, 2],
            [(vec![0, 0], 5), (vec![0, 1], 6), (vec![1, 0], 7), (vec![1, 1], 8)],
        );
        let problem = ContractionProblem {
            factors: vec![a, b],
            contracted: BTreeSet::from([1]),
        };
        let c = contract_reference(&Integer, &u, &problem).unwrap();
        assert_eq!(
            c.entries(),
            &BTreeMap::from([(vec![0, 0], 19), (vec![0, 1], 22), (vec![1, 0], 43), (vec![1, 1], 50)])
        );
        assert!(c.same(&Integer, &contract_by_operators(&Integer, &u, &problem).unwrap()));
    }

    #[test]
    fn odometer_enumerates_box() {
        let all: Vec<_> = odometer(&[2, 3]).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[5], vec![1, 2]);
        assert_eq!(odometer(&[]).count(), 1);
        assert_eq!(odometer(&[0, 3]).count(), 0);
    }
}
