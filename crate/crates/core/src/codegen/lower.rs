//! Lowering sorted expressions to kernels.

use std::collections::{BTreeMap, HashMap};

use crate::combinators::{IndexId, IndexUniverse};
use crate::error::CodegenError;
use crate::expr::{ascending_perm, Sorted, Term, TermKind};
use crate::formats::TensorFormat;

use super::ir::{ir_contract, ir_mul, ir_of_format, ir_rep, IrValue, LevelKind, StorageSpec};
use super::prog::{int_add, int_mul, semi_add, Expr, Stmt, Symbols, Ty, VarId, VarRole};

/// A lowered expression: a statement over named cursors, the input arrays
/// it reads and the shape of its dense output buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub source: String,
    pub universe: IndexUniverse,
    pub symbols: Symbols,
    pub storages: Vec<StorageSpec>,
    /// Free indices, ascending; the output is row-major over them.
    pub free: Vec<IndexId>,
    pub out_dims: Vec<usize>,
    pub body: Stmt,
}

impl Kernel {
    pub fn out_len(&self) -> usize {
        self.out_dims.iter().product()
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.symbols.vars[v].name
    }

    pub fn formats(&self) -> Vec<(String, TensorFormat)> {
        let mut out: Vec<(String, TensorFormat)> = Vec::new();
        for s in &self.storages {
            if !out.iter().any(|(n, _)| *n == s.var) {
                out.push((s.var.clone(), s.format));
            }
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Target {
    Output,
    Temp(VarId),
}

struct Lowerer<'a> {
    universe: &'a IndexUniverse,
    formats: &'a BTreeMap<String, TensorFormat>,
    sym: Symbols,
    storages: Vec<StorageSpec>,
    by_key: HashMap<(String, Vec<usize>), usize>,
    strides: BTreeMap<IndexId, i64>,
}

/// Lowers a sorted expression. `+` is distributed first, so the kernel is
/// a sequence of loop nests, one per product term, all accumulating into
/// the same output.
pub fn lower(sorted: &Sorted, formats: &BTreeMap<String, TensorFormat>) -> Result<Kernel, CodegenError> {
    let u = &sorted.universe;
    let free = sorted.free().to_vec();
    let out_dims: Vec<usize> = free.iter().map(|&i| u.size(i)).collect();
    let mut strides = BTreeMap::new();
    let mut stride = 1i64;
    for (&i, &d) in free.iter().zip(&out_dims).rev() {
        strides.insert(i, stride);
        stride *= d as i64;
    }
    let mut lw = Lowerer {
        universe: u,
        formats,
        sym: Symbols::new(),
        storages: Vec::new(),
        by_key: HashMap::new(),
        strides,
    };
    let mut terms = sorted.root.expand_sums();
    let mut next = 0;
    for t in &mut terms {
        t.renumber(&mut next);
    }
    let mut parts = Vec::new();
    for t in &terms {
        let v = lw.term_ir(t)?;
        parts.push(lw.lower_value(&v, &mut Vec::new(), Target::Output));
    }
    Ok(Kernel {
        source: sorted.source.clone(),
        universe: u.clone(),
        symbols: lw.sym,
        storages: lw.storages,
        free,
        out_dims,
        body: Stmt::seq(parts),
    })
}

impl Lowerer<'_> {
    fn storage(&mut self, name: &str, indices: &[IndexId]) -> Result<usize, CodegenError> {
        let perm = ascending_perm(indices);
        let key = (name.to_string(), perm.clone());
        if let Some(&s) = self.by_key.get(&key) {
            return Ok(s);
        }
        let format = *self
            .formats
            .get(name)
            .ok_or_else(|| CodegenError::MissingInput(name.to_string()))?;
        let mut ids = indices.to_vec();
        ids.sort_unstable();
        let dims = ids.iter().map(|&i| self.universe.size(i)).collect();
        let n = self.storages.iter().filter(|s| s.var == name).count();
        let label = if n == 0 { name.to_string() } else { format!("{name}t{n}") };
        let index = self.storages.len();
        let st = StorageSpec::declare(&mut self.sym, index, name, &label, perm, format, ids, dims);
        self.storages.push(st);
        self.by_key.insert(key, index);
        Ok(index)
    }

    fn term_ir(&mut self, t: &Term) -> Result<IrValue, CodegenError> {
        Ok(match &t.kind {
            TermKind::Var { name, indices, occurrence } => {
                let s = self.storage(name, indices)?;
                let st = self.storages[s].clone();
                ir_of_format(&mut self.sym, &st, &t.shape, *occurrence)
            }
            TermKind::Mul(a, b) => {
                let x = self.term_ir(a)?;
                let y = self.term_ir(b)?;
                ir_mul(x, y)
            }
            TermKind::Add(..) => unreachable!("sums are distributed before lowering"),
            TermKind::Sum(i, a) => ir_contract(self.term_ir(a)?, *i),
            TermKind::Rep(i, a) => {
                let v = self.term_ir(a)?;
                let name = self.universe.name(*i).to_string();
                ir_rep(&mut self.sym, v, *i, &name, self.universe.size(*i))
            }
        })
    }

    fn location(&self, loc: &[(IndexId, Expr)]) -> Expr {
        loc.iter()
            .fold(Expr::Int(0), |acc, (i, e)| int_add(acc, int_mul(e.clone(), Expr::Int(self.strides[i]))))
    }

    /// `eval acc v`: a scalar accumulates into the location; a free level
    /// loops and specializes the location with its index; a contracted
    /// level loops without specializing. A contracted subtree without free
    /// levels below accumulates into a scalar temporary that is reset when
    /// the subtree is entered and stored once after it.
    fn lower_value(&mut self, v: &IrValue, loc: &mut Vec<(IndexId, Expr)>, target: Target) -> Stmt {
        match v {
            IrValue::Scalar(e) => match target {
                Target::Output => Stmt::Store {
                    index: self.location(loc),
                    value: e.clone(),
                },
                Target::Temp(t) => Stmt::Assign(t, semi_add(Expr::Var(t), e.clone())),
            },
            IrValue::Level(l) => {
                let free = l.kind == LevelKind::Free;
                let use_temp = !free && target == Target::Output && !l.value.has_free();
                let (inner_target, temp) = if use_temp {
                    let t = self.sym.var("acc", Ty::Val, VarRole::Temp);
                    (Target::Temp(t), Some(t))
                } else {
                    (target, None)
                };
                if free {
                    loc.push((l.id, l.index.clone()));
                }
                let body = self.lower_value(&l.value, loc, inner_target);
                if free {
                    loc.pop();
                }
                let ready_body = if l.ready == Expr::Bool(true) {
                    body
                } else {
                    Stmt::If1(l.ready.clone(), Box::new(body))
                };
                let lp = Stmt::seq([
                    l.init.clone(),
                    Stmt::While(l.valid.clone(), Box::new(Stmt::seq([ready_body, l.next.clone()]))),
                ]);
                match temp {
                    Some(t) => Stmt::seq([
                        Stmt::Decl(t, Expr::Zero),
                        lp,
                        Stmt::Store {
                            index: self.location(loc),
                            value: Expr::Var(t),
                        },
                    ]),
                    None => lp,
                }
            }
        }
    }
}
