//! Storage formats and the primitive streams that iterate them.
//!
//! A tensor is stored level by level. A compressed level keeps, for every
//! parent position, a segment `pos[p]..pos[p+1]` of sorted coordinates in
//! `crd`; a dense level keeps nothing and addresses child `i` of parent `p`
//! at `p * size + i`. All-compressed storage is DCSR for matrices.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::rc::Rc;
use std::str::FromStr;

use crate::combinators::{IndexId, Nested, NestedStream};
use crate::error::FormatError;
use crate::oracle::SparseVariable;
use crate::semiring::Semiring;
use crate::stream::IndexedStream;

/// Sorted, duplicate-free coordinate list with explicit dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct CooTensor<T> {
    dims: Vec<usize>,
    entries: Vec<(Vec<usize>, T)>,
}

impl<T: Clone> CooTensor<T> {
    /// Sorts entries lexicographically and sums duplicates with `s.add`.
    /// Explicit zeros are kept as stored entries.
    pub fn new<S: Semiring<Elem = T>>(
        s: &S,
        dims: Vec<usize>,
        mut entries: Vec<(Vec<usize>, T)>,
    ) -> Result<Self, FormatError> {
        for (c, _) in &entries {
            if c.len() != dims.len() {
                return Err(FormatError::Malformed(format!(
                    "coordinate {c:?} has rank {} but the tensor has rank {}",
                    c.len(),
                    dims.len()
                )));
            }
            if let Some((d, _)) = c.iter().zip(&dims).enumerate().find(|(_, (x, n))| x >= n) {
                return Err(FormatError::Malformed(format!(
                    "coordinate {c:?} out of bounds in dimension {d} of size {}",
                    dims[d]
                )));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Vec<usize>, T)> = Vec::with_capacity(entries.len());
        for (c, v) in entries {
            match merged.last_mut() {
                Some((last, acc)) if *last == c => *acc = s.add(acc, &v),
                _ => merged.push((c, v)),
            }
        }
        Ok(CooTensor { dims, entries: merged })
    }

    pub fn from_variable(v: &SparseVariable<T>) -> Self {
        CooTensor {
            dims: v.dims().to_vec(),
            entries: v.entries().iter().map(|(k, x)| (k.clone(), x.clone())).collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn entries(&self) -> &[(Vec<usize>, T)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Reorders the modes: mode `d` of the result is mode `perm[d]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.rank());
        let dims = perm.iter().map(|&p| self.dims[p]).collect();
        let mut entries: Vec<(Vec<usize>, T)> = self
            .entries
            .iter()
            .map(|(c, v)| (perm.iter().map(|&p| c[p]).collect(), v.clone()))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        CooTensor { dims, entries }
    }

    /// The variable this tensor denotes, over the given index ids.
    pub fn to_variable<S: Semiring<Elem = T>>(&self, s: &S, indices: Vec<IndexId>) -> SparseVariable<T> {
        SparseVariable::from_entries(s, indices, self.dims.clone(), self.entries.iter().cloned())
    }
}

/// Per-level storage kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LevelFormat {
    Dense,
    Compressed,
}

/// Whole-tensor format names accepted in bindings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TensorFormat {
    /// Every level compressed (DCSR for matrices).
    Dcsr,
    /// Dense outermost level, compressed below (CSR for matrices).
    Csr,
    /// Every level dense.
    Dense,
}

impl TensorFormat {
    pub fn levels(self, rank: usize) -> Vec<LevelFormat> {
        (0..rank)
            .map(|l| match self {
                TensorFormat::Dcsr => LevelFormat::Compressed,
                TensorFormat::Dense => LevelFormat::Dense,
                TensorFormat::Csr if l == 0 => LevelFormat::Dense,
                TensorFormat::Csr => LevelFormat::Compressed,
            })
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            TensorFormat::Dcsr => "dcsr",
            TensorFormat::Csr => "csr",
            TensorFormat::Dense => "dense",
        }
    }
}

impl FromStr for TensorFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dcsr" | "sparse" | "compressed" => Ok(TensorFormat::Dcsr),
            "csr" => Ok(TensorFormat::Csr),
            "dense" => Ok(TensorFormat::Dense),
            other => Err(format!("unknown format `{other}` (expected dcsr, csr or dense)")),
        }
    }
}

impl fmt::Display for TensorFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LevelStorage {
    Dense { size: usize },
    Compressed { pos: Vec<usize>, crd: Vec<usize> },
}

/// A tensor stored with an arbitrary format per level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelTensor<T> {
    dims: Vec<usize>,
    levels: Vec<LevelStorage>,
    vals: Vec<T>,
}

impl<T: Clone> LevelTensor<T> {
    /// Assembles level storage from a coordinate list.
    pub fn build(coo: &CooTensor<T>, formats: &[LevelFormat], zero: T) -> Self {
        assert_eq!(formats.len(), coo.rank());
        // each node is the range of entries below one position of the current level
        let mut nodes: Vec<Option<(usize, usize)>> = vec![Some((0, coo.entries.len()))];
        let mut levels = Vec::with_capacity(formats.len());
        for (l, fmt) in formats.iter().enumerate() {
            let mut next = Vec::new();
            match fmt {
                LevelFormat::Compressed => {
                    let mut pos = vec![0usize];
                    let mut crd = Vec::new();
                    for node in &nodes {
                        if let Some((lo, hi)) = *node {
                            let mut start = lo;
                            while start < hi {
                                let c = coo.entries[start].0[l];
                                let end = start + coo.entries[start..hi].partition_point(|e| e.0[l] == c);
                                crd.push(c);
                                next.push(Some((start, end)));
                                start = end;
                            }
                        }
                        pos.push(crd.len());
                    }
                    levels.push(LevelStorage::Compressed { pos, crd });
                }
                LevelFormat::Dense => {
                    let size = coo.dims[l];
                    for node in &nodes {
                        let (mut lo, hi) = node.unwrap_or((0, 0));
                        for i in 0..size {
                            let end = lo + coo.entries[lo..hi].partition_point(|e| e.0[l] <= i);
                            next.push((end > lo).then_some((lo, end)));
                            lo = end;
                        }
                    }
                    levels.push(LevelStorage::Dense { size });
                }
            }
            nodes = next;
        }
        let vals = nodes
            .iter()
            .map(|n| match n {
                Some((lo, _)) => coo.entries[*lo].1.clone(),
                None => zero.clone(),
            })
            .collect();
        LevelTensor {
            dims: coo.dims.clone(),
            levels,
            vals,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn levels(&self) -> &[LevelStorage] {
        &self.levels
    }

    pub fn vals(&self) -> &[T] {
        &self.vals
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Checks the storage invariants.
    pub fn validate(&self) -> Result<(), FormatError> {
        let bad = |m: String| Err(FormatError::Malformed(m));
        if self.levels.len() != self.dims.len() {
            return bad(format!("{} levels for rank {}", self.levels.len(), self.dims.len()));
        }
        let mut parents = 1usize;
        for (l, level) in self.levels.iter().enumerate() {
            match level {
                LevelStorage::Dense { size } => {
                    if *size != self.dims[l] {
                        return bad(format!("dense level {l} has size {size}, dimension is {}", self.dims[l]));
                    }
                    parents *= size;
                }
                LevelStorage::Compressed { pos, crd } => {
                    if pos.len() != parents + 1 {
                        return bad(format!("level {l}: pos has {} entries, expected {}", pos.len(), parents + 1));
                    }
                    if pos[0] != 0 || pos.windows(2).any(|w| w[0] > w[1]) {
                        return bad(format!("level {l}: pos is not monotone from 0"));
                    }
                    if pos[parents] != crd.len() {
                        return bad(format!("level {l}: pos ends at {} but crd has {}", pos[parents], crd.len()));
                    }
                    for p in 0..parents {
                        let seg = &crd[pos[p]..pos[p + 1]];
                        if seg.windows(2).any(|w| w[0] >= w[1]) {
                            return bad(format!("level {l}: crd segment {p} not strictly increasing"));
                        }
                        if seg.iter().any(|&c| c >= self.dims[l]) {
                            return bad(format!("level {l}: coordinate out of bounds"));
                        }
                    }
                    parents = crd.len();
                }
            }
        }
        if self.vals.len() != parents {
            return bad(format!("vals has {} entries, expected {parents}", self.vals.len()));
        }
        Ok(())
    }
}

/// DCSR-style tensor: every level compressed.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedTensor<T> {
    inner: LevelTensor<T>,
}

impl<T: Clone> CompressedTensor<T> {
    pub fn from_coo(coo: &CooTensor<T>, zero: T) -> Self {
        let formats = vec![LevelFormat::Compressed; coo.rank()];
        CompressedTensor {
            inner: LevelTensor::build(coo, &formats, zero),
        }
    }

    /// Wraps raw `(pos, crd)` arrays per level plus the leaf values.
    pub fn from_parts(dims: Vec<usize>, levels: Vec<(Vec<usize>, Vec<usize>)>, vals: Vec<T>) -> Result<Self, FormatError> {
        let inner = LevelTensor {
            dims,
            levels: levels
                .into_iter()
                .map(|(pos, crd)| LevelStorage::Compressed { pos, crd })
                .collect(),
            vals,
        };
        inner.validate()?;
        Ok(CompressedTensor { inner })
    }

    pub fn dims(&self) -> &[usize] {
        self.inner.dims()
    }

    pub fn pos(&self, level: usize) -> &[usize] {
        match &self.inner.levels[level] {
            LevelStorage::Compressed { pos, .. } => pos,
            LevelStorage::Dense { .. } => unreachable!(),
        }
    }

    pub fn crd(&self, level: usize) -> &[usize] {
        match &self.inner.levels[level] {
            LevelStorage::Compressed { crd, .. } => crd,
            LevelStorage::Dense { .. } => unreachable!(),
        }
    }

    pub fn vals(&self) -> &[T] {
        self.inner.vals()
    }

    pub fn nnz(&self) -> usize {
        self.inner.vals.len()
    }

    pub fn as_levels(&self) -> &LevelTensor<T> {
        &self.inner
    }

    /// Recovers the coordinate list.
    pub fn to_coo(&self) -> CooTensor<T> {
        let mut entries = Vec::with_capacity(self.nnz());
        let mut coord = Vec::with_capacity(self.inner.rank());
        collect_entries(&self.inner, 0, 0, &mut coord, &mut entries);
        CooTensor {
            dims: self.inner.dims.clone(),
            entries,
        }
    }
}

fn collect_entries<T: Clone>(
    t: &LevelTensor<T>,
    level: usize,
    parent: usize,
    coord: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, T)>,
) {
    if level == t.rank() {
        out.push((coord.clone(), t.vals[parent].clone()));
        return;
    }
    match &t.levels[level] {
        LevelStorage::Compressed { pos, crd } => {
            for p in pos[parent]..pos[parent + 1] {
                coord.push(crd[p]);
                collect_entries(t, level + 1, p, coord, out);
                coord.pop();
            }
        }
        LevelStorage::Dense { size } => {
            for i in 0..*size {
                coord.push(i);
                collect_entries(t, level + 1, parent * size + i, coord, out);
                coord.pop();
            }
        }
    }
}

/// Row-major dense tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Clone> DenseTensor<T> {
    pub fn new(shape: Vec<usize>, vals: Vec<T>) -> Result<Self, FormatError> {
        let n: usize = shape.iter().product();
        if vals.len() != n {
            return Err(FormatError::Malformed(format!(
                "dense tensor of shape {shape:?} needs {n} values, got {}",
                vals.len()
            )));
        }
        Ok(DenseTensor { shape, vals })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn vals(&self) -> &[T] {
        &self.vals
    }

    pub fn to_levels(&self) -> LevelTensor<T> {
        LevelTensor {
            dims: self.shape.clone(),
            levels: self.shape.iter().map(|&size| LevelStorage::Dense { size }).collect(),
            vals: self.vals.clone(),
        }
    }
}

/// Cursor over one level of a [`LevelTensor`].
pub struct LevelStream<T> {
    tensor: Rc<LevelTensor<T>>,
    level: usize,
    // compressed: current position and segment end; dense: counter and size
    cur: usize,
    end: usize,
    parent: usize,
}

impl<T> Clone for LevelStream<T> {
    fn clone(&self) -> Self {
        LevelStream {
            tensor: Rc::clone(&self.tensor),
            level: self.level,
            cur: self.cur,
            end: self.end,
            parent: self.parent,
        }
    }
}

impl<T: Clone + 'static> LevelStream<T> {
    fn open(tensor: Rc<LevelTensor<T>>, level: usize, parent: usize) -> Self {
        let (cur, end) = match &tensor.levels[level] {
            LevelStorage::Compressed { pos, .. } => (pos[parent], pos[parent + 1]),
            LevelStorage::Dense { size } => (0, *size),
        };
        LevelStream {
            tensor,
            level,
            cur,
            end,
            parent,
        }
    }

    fn position(&self) -> usize {
        match &self.tensor.levels[self.level] {
            LevelStorage::Compressed { .. } => self.cur,
            LevelStorage::Dense { size } => self.parent * size + self.cur,
        }
    }
}

impl<T: Clone + 'static> IndexedStream for LevelStream<T> {
    type Index = usize;
    type Value = Nested<T>;

    fn valid(&self) -> bool {
        self.cur < self.end
    }

    fn index(&self) -> usize {
        match &self.tensor.levels[self.level] {
            LevelStorage::Compressed { crd, .. } => crd[self.cur],
            LevelStorage::Dense { .. } => self.cur,
        }
    }

    fn ready(&self) -> bool {
        true
    }

    fn value(&self) -> Nested<T> {
        let p = self.position();
        if self.level + 1 == self.tensor.rank() {
            Nested::Scalar(self.tensor.vals[p].clone())
        } else {
            Nested::boxed(LevelStream::open(Rc::clone(&self.tensor), self.level + 1, p))
        }
    }

    fn advance(&mut self) {
        if self.cur < self.end {
            self.cur += 1;
        }
    }

    fn searchable(&self) -> bool {
        true
    }

    fn skip(&mut self, target: usize) {
        match &self.tensor.levels[self.level] {
            LevelStorage::Compressed { crd, .. } => {
                self.cur = search_segment(crd, self.cur, self.end, target).0;
            }
            LevelStorage::Dense { .. } => {
                self.cur = self.cur.max(target.min(self.end));
            }
        }
    }
}

/// Binary search for the first position in `crd[lo..hi]` holding a
/// coordinate `>= target`. Returns the position and the number of
/// coordinate comparisons made.
pub fn search_segment(crd: &[usize], mut lo: usize, mut hi: usize, target: usize) -> (usize, u32) {
    let mut comparisons = 0;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        comparisons += 1;
        if crd[mid] < target {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    (lo, comparisons)
}

/// Nested stream over any level-formatted tensor.
pub fn stream_of_levels<T: Clone + 'static>(t: Rc<LevelTensor<T>>) -> Result<Nested<T>, FormatError> {
    t.validate()?;
    if t.rank() == 0 {
        return Ok(Nested::Scalar(t.vals[0].clone()));
    }
    Ok(Nested::boxed(LevelStream::open(t, 0, 0)))
}

/// Nested stream over a compressed tensor; every state is ready and every
/// level is searchable by binary search within its segment.
pub fn stream_of_compressed<T: Clone + 'static>(t: &CompressedTensor<T>) -> Result<Nested<T>, FormatError> {
    stream_of_levels(Rc::new(t.inner.clone()))
}

/// Nested stream over a dense tensor: always ready, constant-time skip.
pub fn stream_of_dense<T: Clone + 'static>(t: &DenseTensor<T>) -> Result<Nested<T>, FormatError> {
    stream_of_levels(Rc::new(t.to_levels()))
}

/// Convenience: wraps a primitive stream with its index ids.
pub fn nested_stream<T: Clone + 'static>(indices: Vec<IndexId>, root: Nested<T>) -> NestedStream<T> {
    NestedStream::new(indices, root)
}

// ---------------------------------------------------------------------------
// File formats

fn io_err(path: &Path, source: std::io::Error) -> FormatError {
    FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MmField {
    Real,
    Integer,
    Pattern,
}

/// Reads a MatrixMarket coordinate file (`real`, `integer` or `pattern`,
/// `general` symmetry only). Coordinates are converted to 0-based and
/// duplicates are summed with the semiring.
pub fn load_matrix_market<S: Semiring>(path: impl AsRef<Path>, s: &S) -> Result<CompressedTensor<S::Elem>, FormatError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let coo = read_matrix_market(BufReader::new(file), path, s)?;
    Ok(CompressedTensor::from_coo(&coo, s.zero()))
}

pub fn read_matrix_market<S: Semiring>(
    reader: impl BufRead,
    path: &Path,
    s: &S,
) -> Result<CooTensor<S::Elem>, FormatError> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = header.map_err(|e| io_err(path, e))?;
    let words: Vec<String> = header.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() < 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(path, 1, "missing `%%MatrixMarket matrix` header"));
    }
    if words[2] != "coordinate" {
        return Err(parse_err(path, 1, format!("unsupported layout `{}`", words[2])));
    }
    let field = match words[3].as_str() {
        "real" | "double" => MmField::Real,
        "integer" => MmField::Integer,
        "pattern" => MmField::Pattern,
        other => return Err(parse_err(path, 1, format!("unsupported field `{other}`"))),
    };
    if words[4] != "general" {
        return Err(parse_err(path, 1, format!("unsupported symmetry `{}`", words[4])));
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for (n, line) in lines {
        let lineno = n + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        let Some((rows, cols, _)) = dims else {
            if f.len() != 3 {
                return Err(parse_err(path, lineno, "expected `rows cols nnz`"));
            }
            let num = |x: &str| x.parse::<usize>().map_err(|_| parse_err(path, lineno, format!("bad size `{x}`")));
            dims = Some((num(f[0])?, num(f[1])?, num(f[2])?));
            continue;
        };
        let want = if field == MmField::Pattern { 2 } else { 3 };
        if f.len() != want {
            return Err(parse_err(path, lineno, format!("expected {want} fields, found {}", f.len())));
        }
        let coord = |x: &str, d: usize, size: usize| -> Result<usize, FormatError> {
            let c = x
                .parse::<usize>()
                .map_err(|_| parse_err(path, lineno, format!("bad coordinate `{x}`")))?;
            if c == 0 || c > size {
                return Err(FormatError::Bounds {
                    path: path.to_path_buf(),
                    line: lineno,
                    coord: c,
                    dim: d,
                    size,
                });
            }
            Ok(c - 1)
        };
        let i = coord(f[0], 0, rows)?;
        let j = coord(f[1], 1, cols)?;
        let v = match field {
            MmField::Pattern => s.one(),
            _ => s
                .parse_elem(f[2])
                .map_err(|e| parse_err(path, lineno, e.to_string()))?,
        };
        entries.push((vec![i, j], v));
    }
    let (rows, cols, _) = dims.ok_or_else(|| parse_err(path, 1, "missing size line"))?;
    CooTensor::new(s, vec![rows, cols], entries)
}

/// Reads a FROSTT `.tns` file: one `i1 .. in value` line per entry,
/// 1-based. Dimensions are the per-mode maxima unless given.
pub fn load_frostt<S: Semiring>(
    path: impl AsRef<Path>,
    order: usize,
    s: &S,
) -> Result<CompressedTensor<S::Elem>, FormatError> {
    let coo = load_frostt_coo(path, order, None, s)?;
    Ok(CompressedTensor::from_coo(&coo, s.zero()))
}

pub fn load_frostt_coo<S: Semiring>(
    path: impl AsRef<Path>,
    order: usize,
    dims: Option<&[usize]>,
    s: &S,
) -> Result<CooTensor<S::Elem>, FormatError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_frostt(BufReader::new(file), path, order, dims, s)
}

pub fn read_frostt<S: Semiring>(
    reader: impl BufRead,
    path: &Path,
    order: usize,
    dims: Option<&[usize]>,
    s: &S,
) -> Result<CooTensor<S::Elem>, FormatError> {
    let mut entries = Vec::new();
    let mut maxima = vec![0usize; order];
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        if f.len() != order + 1 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields for an order-{order} tensor, found {}", order + 1, f.len()),
            ));
        }
        let mut coord = Vec::with_capacity(order);
        for (d, x) in f[..order].iter().enumerate() {
            let c = x
                .parse::<usize>()
                .map_err(|_| parse_err(path, lineno, format!("bad coordinate `{x}`")))?;
            let limit = dims.map(|ds| ds[d]).unwrap_or(usize::MAX);
            if c == 0 || c > limit {
                return Err(FormatError::Bounds {
                    path: path.to_path_buf(),
                    line: lineno,
                    coord: c,
                    dim: d,
                    size: limit,
                });
            }
            maxima[d] = maxima[d].max(c);
            coord.push(c - 1);
        }
        let v = s
            .parse_elem(f[order])
            .map_err(|e| parse_err(path, lineno, e.to_string()))?;
        entries.push((coord, v));
    }
    let dims = dims.map(|d| d.to_vec()).unwrap_or(maxima);
    CooTensor::new(s, dims, entries)
}

/// Writes a variable as FROSTT lines in coordinate order; a rank-0 variable
/// is a single line holding its value.
pub fn write_frostt<S: Semiring>(
    mut w: impl Write,
    s: &S,
    v: &SparseVariable<S::Elem>,
) -> std::io::Result<()> {
    if v.indices().is_empty() {
        return writeln!(w, "{}", s.format_elem(&v.at(s, &[])));
    }
    for (k, x) in v.entries() {
        for c in k {
            write!(w, "{} ", c + 1)?;
        }
        writeln!(w, "{}", s.format_elem(x))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinators::{eval_nested, IndexUniverse, StreamCtx};
    use crate::semiring::{Arithmetic, Integer};
    use crate::stream::DEFAULT_STATE_BUDGET;

    fn universe(n: usize, d: usize) -> IndexUniverse {
        IndexUniverse::new((0..n).map(|i| (format!("x{i}"), d))).unwrap()
    }

    /// The DCSR example matrix: rows 0, 1 and 3 non-empty, entry (1,1) = 3.
    fn dcsr_example() -> CompressedTensor<i64> {
        CompressedTensor::from_parts(
            vec![4, 6],
            vec![(vec![0, 3], vec![0, 1, 3]), (vec![0, 2, 4, 7], vec![0, 3, 1, 4, 0, 3, 4])],
            vec![1, 2, 3, 4, 5, 6, 7],
        )
        .unwrap()
    }

    #[test]
    fn dcsr_example_rows_and_entry() {
        let t = dcsr_example();
        let root = stream_of_compressed(&t).unwrap();
        let Nested::Stream(mut rows) = root.clone() else { panic!() };
        let mut ready = Vec::new();
        while rows.valid() {
            if rows.ready() {
                ready.push(rows.index());
            }
            rows.advance();
        }
        assert_eq!(ready, vec![0, 1, 3]);
        let ctx = StreamCtx::new(Integer, true, DEFAULT_STATE_BUDGET);
        let v = eval_nested(&ctx, &universe(2, 6), NestedStream::new(vec![0, 1], root)).unwrap();
        assert_eq!(v.get(&[1, 1]), Some(&3));
        assert_eq!(v.nnz(), 7);
    }

    #[test]
    fn empty_compressed() {
        let t = CompressedTensor::<i64>::from_parts(vec![3], vec![(vec![0, 0], vec![])], vec![]).unwrap();
        let ctx = StreamCtx::new(Integer, true, DEFAULT_STATE_BUDGET);
        let root = stream_of_compressed(&t).unwrap();
        let v = eval_nested(&ctx, &universe(1, 3), NestedStream::new(vec![0], root)).unwrap();
        assert_eq!(v.nnz(), 0);
    }

    #[test]
    fn malformed_compressed_rejected() {
        // pos does not end at len(crd)
        let r = CompressedTensor::<i64>::from_parts(vec![3], vec![(vec![0, 1], vec![0, 2])], vec![1, 2]);
        assert!(matches!(r, Err(FormatError::Malformed(_))));
        // unsorted segment
        let r = CompressedTensor::<i64>::from_parts(vec![3], vec![(vec![0, 2], vec![2, 0])], vec![1, 2]);
        assert!(matches!(r, Err(FormatError::Malformed(_))));
    }

    #[test]
    fn dense_matrix_enumerates() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let ctx = StreamCtx::new(Arithmetic, true, DEFAULT_STATE_BUDGET);
        let root = stream_of_dense(&t).unwrap();
        let v = eval_nested(&ctx, &universe(2, 2), NestedStream::new(vec![0, 1], root)).unwrap();
        assert_eq!(v.get(&[0, 0]), Some(&1.0));
        assert_eq!(v.get(&[0, 1]), Some(&2.0));
        assert_eq!(v.get(&[1, 0]), Some(&3.0));
        assert_eq!(v.get(&[1, 1]), Some(&4.0));
        assert!(DenseTensor::new(vec![2, 2], vec![1.0]).is_err());
    }

    #[test]
    fn dense_zeros_are_ready_states() {
        let t = DenseTensor::new(vec![5], vec![0i64; 5]).unwrap();
        let Nested::Stream(mut q) = stream_of_dense(&t).unwrap() else { panic!() };
        let mut ready = 0;
        while q.valid() {
            ready += q.ready() as usize;
            q.advance();
        }
        assert_eq!(ready, 5);
    }

    #[test]
    fn csr_build_round_trips() {
        let coo = CooTensor::new(
            &Integer,
            vec![4, 5],
            vec![(vec![3, 1], 7), (vec![0, 4], 2), (vec![3, 0], 1)],
        )
        .unwrap();
        for f in [TensorFormat::Dcsr, TensorFormat::Csr, TensorFormat::Dense] {
            let t = Rc::new(LevelTensor::build(&coo, &f.levels(2), 0));
            t.validate().unwrap();
            let ctx = StreamCtx::new(Integer, true, DEFAULT_STATE_BUDGET);
            let u = IndexUniverse::new([("i".to_string(), 4), ("j".to_string(), 5)]).unwrap();
            let v = eval_nested(&ctx, &u, NestedStream::new(vec![0, 1], stream_of_levels(t).unwrap())).unwrap();
            assert!(v.same(&Integer, &coo.to_variable(&Integer, vec![0, 1])), "{f}");
        }
    }

    #[test]
    fn search_segment_bounds() {
        let crd: Vec<usize> = (0..1000).map(|i| i * 3).collect();
        for target in [0, 1, 2, 3, 500, 2997, 2998, 5000] {
            let (p, cmp) = search_segment(&crd, 0, crd.len(), target);
            assert_eq!(p, crd.partition_point(|&c| c < target));
            assert!(cmp <= 11, "{cmp} comparisons");
        }
    }

    #[test]
    fn matrix_market_basic() {
        let text = "%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n2 2 3.0\n1 1 1.5\n";
        let coo = read_matrix_market(text.as_bytes(), Path::new("m.mtx"), &Arithmetic).unwrap();
        assert_eq!(coo.entries(), &[(vec![0, 0], 1.5), (vec![1, 1], 3.0)]);
    }

    #[test]
    fn matrix_market_duplicates_sum() {
        let text = "%%MatrixMarket matrix coordinate integer general\n3 3 3\n1 2 4\n1 2 5\n3 3 1\n";
        let coo = read_matrix_market(text.as_bytes(), Path::new("m.mtx"), &Integer).unwrap();
        assert_eq!(coo.entries(), &[(vec![0, 1], 9), (vec![2, 2], 1)]);
    }

    #[test]
    fn matrix_market_pattern_and_errors() {
        let text = "%%MatrixMarket matrix coordinate pattern general\n2 3 1\n2 3\n";
        let coo = read_matrix_market(text.as_bytes(), Path::new("p.mtx"), &Integer).unwrap();
        assert_eq!(coo.entries(), &[(vec![1, 2], 1)]);

        let oob = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        let err = read_matrix_market(oob.as_bytes(), Path::new("b.mtx"), &Arithmetic).unwrap_err();
        assert!(matches!(err, FormatError::Bounds { line: 3, .. }), "{err}");

        let bad = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1.0\n";
        let err = read_matrix_market(bad.as_bytes(), Path::new("b.mtx"), &Arithmetic).unwrap_err();
        assert!(matches!(err, FormatError::Parse { line: 3, .. }), "{err}");

        let sym = "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 1 1.0\n";
        assert!(read_matrix_market(sym.as_bytes(), Path::new("s.mtx"), &Arithmetic).is_err());
    }

    #[test]
    fn frostt_line() {
        let coo = read_frostt("1 2 3 4.5\n".as_bytes(), Path::new("t.tns"), 3, None, &Arithmetic).unwrap();
        assert_eq!(coo.entries(), &[(vec![0, 1, 2], 4.5)]);
        assert_eq!(coo.dims(), &[1, 2, 3]);
        let err = read_frostt("1 2 4.5\n".as_bytes(), Path::new("t.tns"), 3, None, &Arithmetic).unwrap_err();
        assert!(matches!(err, FormatError::Parse { line: 1, .. }));
    }

    #[test]
    fn frostt_write_scalar_and_tensor() {
        let mut buf = Vec::new();
        let v = SparseVariable::from_entries(&Integer, vec![0, 1], vec![2, 2], [(vec![1, 0], 5i64)]);
        write_frostt(&mut buf, &Integer, &v).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "2 1 5\n");
        let mut buf = Vec::new();
        let z = SparseVariable::<i64>::zero(vec![], vec![]);
        write_frostt(&mut buf, &Integer, &z).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0\n");
    }
}
