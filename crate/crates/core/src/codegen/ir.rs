//! Syntactic streams: every field is target-language syntax.

use crate::combinators::IndexId;
use crate::formats::{LevelFormat, TensorFormat};

use super::prog::{and, eq, int_add, int_mul, load, lt, max, not, or, semi_mul, ArrId, ArrayRole, Expr, Stmt, Symbols, Ty, VarRole};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevelKind {
    /// Specializes the output location with the level's index.
    Free,
    /// Summed away: the output location is left unchanged.
    Contracted,
}

/// One level of a syntactic stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub id: IndexId,
    pub kind: LevelKind,
    pub index: Expr,
    pub valid: Expr,
    pub ready: Expr,
    pub init: Stmt,
    pub next: Stmt,
    pub value: IrValue,
    /// A replicated level: always ready, value independent of the index.
    pub replicate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum IrValue {
    Scalar(Expr),
    Level(Box<Level>),
}

impl IrValue {
    pub fn depth(&self) -> usize {
        match self {
            IrValue::Scalar(_) => 0,
            IrValue::Level(l) => 1 + l.value.depth(),
        }
    }

    pub fn has_free(&self) -> bool {
        match self {
            IrValue::Scalar(_) => false,
            IrValue::Level(l) => l.kind == LevelKind::Free || l.value.has_free(),
        }
    }

    /// Ids of the free levels, outermost first.
    pub fn free_ids(&self) -> Vec<IndexId> {
        let mut out = Vec::new();
        let mut v = self;
        while let IrValue::Level(l) = v {
            if l.kind == LevelKind::Free {
                out.push(l.id);
            }
            v = &l.value;
        }
        out
    }
}

/// Storage of one bound tensor, with its modes permuted into the global
/// order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StorageSpec {
    pub var: String,
    pub label: String,
    /// Mode `d` of the storage is mode `perm[d]` of the bound tensor.
    pub perm: Vec<usize>,
    pub format: TensorFormat,
    /// Index ids of the first use; later uses may bind other indices.
    pub ids: Vec<IndexId>,
    pub dims: Vec<usize>,
    pub pos: Vec<Option<ArrId>>,
    pub crd: Vec<Option<ArrId>>,
    pub vals: ArrId,
}

impl StorageSpec {
    /// Declares the arrays of a storage.
    pub fn declare(
        sym: &mut Symbols,
        index: usize,
        var: &str,
        label: &str,
        perm: Vec<usize>,
        format: TensorFormat,
        ids: Vec<IndexId>,
        dims: Vec<usize>,
    ) -> Self {
        let levels = format.levels(dims.len());
        let mut pos = Vec::new();
        let mut crd = Vec::new();
        for (l, f) in levels.iter().enumerate() {
            match f {
                LevelFormat::Compressed => {
                    pos.push(Some(sym.array(&format!("{label}_pos{l}"), Ty::Int, ArrayRole::Pos { storage: index, level: l })));
                    crd.push(Some(sym.array(&format!("{label}_crd{l}"), Ty::Int, ArrayRole::Crd { storage: index, level: l })));
                }
                LevelFormat::Dense => {
                    pos.push(None);
                    crd.push(None);
                }
            }
        }
        let vals = sym.array(&format!("{label}_vals"), Ty::Val, ArrayRole::Vals { storage: index });
        StorageSpec {
            var: var.to_string(),
            label: label.to_string(),
            perm,
            format,
            ids,
            dims,
            pos,
            crd,
            vals,
        }
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }
}

/// The syntactic stream of one variable occurrence whose levels bind `ids`.
/// Cursor names are `{label}{occurrence}_p{level}` (compressed) or
/// `_i{level}` (dense).
pub fn ir_of_format(sym: &mut Symbols, st: &StorageSpec, ids: &[IndexId], occurrence: usize) -> IrValue {
    assert_eq!(ids.len(), st.rank());
    level_ir(sym, st, ids, occurrence, 0, Expr::Int(0))
}

fn level_ir(sym: &mut Symbols, st: &StorageSpec, ids: &[IndexId], k: usize, l: usize, parent: Expr) -> IrValue {
    if l == st.rank() {
        return IrValue::Scalar(load(st.vals, parent));
    }
    let base = format!("{}{k}", st.label);
    match (st.pos[l], st.crd[l]) {
        (Some(pos), Some(crd)) => {
            let p = sym.var(&format!("{base}_p{l}"), Ty::Int, VarRole::Cursor);
            let e = sym.var(&format!("{base}_end{l}"), Ty::Int, VarRole::Bound);
            let init = Stmt::seq([
                Stmt::Reset(p, load(pos, parent.clone())),
                Stmt::Reset(e, load(pos, int_add(parent, Expr::Int(1)))),
            ]);
            let value = level_ir(sym, st, ids, k, l + 1, Expr::Var(p));
            IrValue::Level(Box::new(Level {
                id: ids[l],
                kind: LevelKind::Free,
                index: load(crd, Expr::Var(p)),
                valid: lt(Expr::Var(p), Expr::Var(e)),
                ready: Expr::Bool(true),
                init,
                next: Stmt::Assign(p, int_add(Expr::Var(p), Expr::Int(1))),
                value,
                replicate: false,
            }))
        }
        _ => {
            let size = st.dims[l] as i64;
            let i = sym.var(&format!("{base}_i{l}"), Ty::Int, VarRole::Cursor);
            let child = int_add(int_mul(parent, Expr::Int(size)), Expr::Var(i));
            let value = level_ir(sym, st, ids, k, l + 1, child);
            IrValue::Level(Box::new(Level {
                id: ids[l],
                kind: LevelKind::Free,
                index: Expr::Var(i),
                valid: lt(Expr::Var(i), Expr::Int(size)),
                ready: Expr::Bool(true),
                init: Stmt::Reset(i, Expr::Int(0)),
                next: Stmt::Assign(i, int_add(Expr::Var(i), Expr::Int(1))),
                value,
                replicate: false,
            }))
        }
    }
}

/// `⇑_i`: inserts a counting level for `id` below every free level with a
/// smaller id.
pub fn ir_rep(sym: &mut Symbols, v: IrValue, id: IndexId, name: &str, size: usize) -> IrValue {
    match v {
        IrValue::Level(mut l) if l.kind == LevelKind::Contracted || l.id < id => {
            l.value = ir_rep(sym, l.value, id, name, size);
            IrValue::Level(l)
        }
        v => {
            let r = sym.var(&format!("{name}_r"), Ty::Int, VarRole::Counter);
            IrValue::Level(Box::new(Level {
                id,
                kind: LevelKind::Free,
                index: Expr::Var(r),
                valid: lt(Expr::Var(r), Expr::Int(size as i64)),
                ready: Expr::Bool(true),
                init: Stmt::Reset(r, Expr::Int(0)),
                next: Stmt::Assign(r, int_add(Expr::Var(r), Expr::Int(1))),
                value: v,
                replicate: true,
            }))
        }
    }
}

/// `Σ_i`: marks the free level `id` as contracted.
pub fn ir_contract(v: IrValue, id: IndexId) -> IrValue {
    match v {
        IrValue::Level(mut l) => {
            if l.kind == LevelKind::Free && l.id == id {
                l.kind = LevelKind::Contracted;
            } else {
                l.value = ir_contract(l.value, id);
            }
            IrValue::Level(l)
        }
        IrValue::Scalar(_) => panic!("contracting an index the stream does not have"),
    }
}

/// Product of two syntactic streams of the same free shape.
///
/// Two stored levels are merged: the index is the larger operand index,
/// the state is ready when both operands are ready at equal indices, and
/// `next` advances `a` when it is strictly behind `b` or tied but not
/// ready, otherwise `b`. A replicated operand does not take part in the
/// merge; the product iterates the other operand alone. Contracted levels
/// are hoisted around the product.
pub fn ir_mul(a: IrValue, b: IrValue) -> IrValue {
    match (a, b) {
        (IrValue::Scalar(x), IrValue::Scalar(y)) => IrValue::Scalar(semi_mul(x, y)),
        (IrValue::Level(mut la), b) if la.kind == LevelKind::Contracted => {
            la.value = ir_mul(la.value, b);
            IrValue::Level(la)
        }
        (a, IrValue::Level(mut lb)) if lb.kind == LevelKind::Contracted => {
            lb.value = ir_mul(a, lb.value);
            IrValue::Level(lb)
        }
        (IrValue::Level(mut la), IrValue::Level(mut lb)) => {
            assert_eq!(la.id, lb.id, "product of streams over different indices");
            if la.replicate {
                lb.value = ir_mul(la.value, lb.value);
                return IrValue::Level(lb);
            }
            if lb.replicate {
                la.value = ir_mul(la.value, lb.value);
                return IrValue::Level(la);
            }
            let la = *la;
            let lb = *lb;
            let a_first = or(
                lt(la.index.clone(), lb.index.clone()),
                and(eq(la.index.clone(), lb.index.clone()), not(la.ready.clone())),
            );
            IrValue::Level(Box::new(Level {
                id: la.id,
                kind: LevelKind::Free,
                index: max(la.index.clone(), lb.index.clone()),
                valid: and(la.valid, lb.valid),
                ready: and_ready(la.ready, lb.ready, eq(la.index, lb.index)),
                init: Stmt::seq([la.init, lb.init]),
                next: Stmt::If(a_first, Box::new(la.next), Box::new(lb.next)),
                value: ir_mul(la.value, lb.value),
                replicate: false,
            }))
        }
        _ => panic!("product of syntactic streams of different depth"),
    }
}

/// `ra ∧ rb ∧ same`, dropping literal `true` conjuncts.
fn and_ready(ra: Expr, rb: Expr, same: Expr) -> Expr {
    let mut parts = [ra, rb, same].into_iter().filter(|r| *r != Expr::Bool(true));
    let first = parts.next().unwrap_or(Expr::Bool(true));
    parts.fold(first, and)
}
