//! Reference interpreter for kernels, instrumented for fusion checks.

use std::collections::{BTreeSet, HashMap};

use crate::error::CodegenError;
use crate::expr::Bindings;
use crate::formats::{LevelStorage, LevelTensor};
use crate::oracle::SparseVariable;
use crate::semiring::Semiring;
use crate::stream::DEFAULT_STATE_BUDGET;

use super::lower::Kernel;
use super::prog::{ArrId, Expr, Stmt, Ty, VarId, VarRole};

/// Counters collected while running a kernel.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProgStats {
    /// Output stores executed.
    pub stores: u64,
    /// Loop iterations executed.
    pub iterations: u64,
    /// Scalar assignments executed.
    pub writes: u64,
    /// Largest number of distinct variables written between two
    /// consecutive output stores.
    pub max_writes_between_stores: usize,
    /// Forward moves of a cursor that went backwards.
    pub cursor_regressions: u64,
    /// Cursors re-initialized twice within one iteration of their
    /// enclosing loop.
    pub repeated_resets: u64,
}

impl ProgStats {
    pub fn fused(&self) -> bool {
        self.cursor_regressions == 0 && self.repeated_resets == 0
    }
}

#[derive(Clone, Debug)]
pub struct ProgRun<T> {
    pub output: SparseVariable<T>,
    pub dense: Vec<T>,
    pub stats: ProgStats,
}

#[derive(Clone, Debug, PartialEq)]
enum Val<T> {
    Int(i64),
    Bool(bool),
    Elem(T),
}

/// Input arrays of a kernel, as the C signature receives them.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelInputs<T> {
    pub ints: Vec<Option<Vec<i64>>>,
    pub vals: Vec<Option<Vec<T>>>,
}

/// Assembles the input arrays a kernel expects from its bindings.
pub fn kernel_inputs<S: Semiring>(
    kernel: &Kernel,
    bindings: &Bindings<S::Elem>,
    s: &S,
) -> Result<KernelInputs<S::Elem>, CodegenError> {
    let n = kernel.symbols.arrays.len();
    let mut ints = vec![None; n];
    let mut vals = vec![None; n];
    for st in &kernel.storages {
        let b = bindings
            .get(&st.var)
            .ok_or_else(|| CodegenError::MissingInput(st.var.clone()))?;
        let coo = b.tensor.permute(&st.perm);
        if coo.dims() != st.dims.as_slice() {
            return Err(CodegenError::RuntimeFault(format!(
                "`{}` has dimensions {:?}, the kernel was lowered for {:?}",
                st.var,
                coo.dims(),
                st.dims
            )));
        }
        let t = LevelTensor::build(&coo, &st.format.levels(st.rank()), s.zero());
        for (l, level) in t.levels().iter().enumerate() {
            if let (LevelStorage::Compressed { pos, crd }, Some(pa), Some(ca)) = (level, st.pos[l], st.crd[l]) {
                ints[pa] = Some(pos.iter().map(|&x| x as i64).collect());
                ints[ca] = Some(crd.iter().map(|&x| x as i64).collect());
            }
        }
        vals[st.vals] = Some(t.vals().to_vec());
    }
    Ok(KernelInputs { ints, vals })
}

/// Runs a kernel on bound tensors with the default iteration budget.
pub fn run_prog<S: Semiring>(
    kernel: &Kernel,
    bindings: &Bindings<S::Elem>,
    s: &S,
) -> Result<ProgRun<S::Elem>, CodegenError> {
    run_prog_with_budget(kernel, bindings, s, DEFAULT_STATE_BUDGET)
}

pub fn run_prog_with_budget<S: Semiring>(
    kernel: &Kernel,
    bindings: &Bindings<S::Elem>,
    s: &S,
    budget: u64,
) -> Result<ProgRun<S::Elem>, CodegenError> {
    let inputs = kernel_inputs(kernel, bindings, s)?;
    run_on_inputs(kernel, &inputs, s, budget)
}

/// Runs a kernel on prepared arrays.
pub fn run_on_inputs<S: Semiring>(
    kernel: &Kernel,
    inputs: &KernelInputs<S::Elem>,
    s: &S,
    budget: u64,
) -> Result<ProgRun<S::Elem>, CodegenError> {
    let mut m = Machine {
        s,
        kernel,
        inputs,
        env: vec![None; kernel.symbols.vars.len()],
        out: vec![s.zero(); kernel.out_len()],
        stats: ProgStats::default(),
        budget,
        touched: BTreeSet::new(),
        loop_epoch: 0,
        next_epoch: 1,
        last_reset: HashMap::new(),
    };
    m.exec(&kernel.body)?;
    let dense = m.out;
    let entries = crate::oracle::odometer(&kernel.out_dims)
        .zip(dense.iter().cloned())
        .filter(|(_, v)| !s.is_zero(v));
    let output = SparseVariable::from_entries(s, kernel.free.clone(), kernel.out_dims.clone(), entries);
    Ok(ProgRun {
        output,
        dense,
        stats: m.stats,
    })
}

struct Machine<'a, S: Semiring> {
    s: &'a S,
    kernel: &'a Kernel,
    inputs: &'a KernelInputs<S::Elem>,
    env: Vec<Option<Val<S::Elem>>>,
    out: Vec<S::Elem>,
    stats: ProgStats,
    budget: u64,
    touched: BTreeSet<VarId>,
    /// Unique id of the current iteration of the innermost running loop.
    loop_epoch: u64,
    next_epoch: u64,
    last_reset: HashMap<VarId, u64>,
}

fn fault<T>(msg: impl Into<String>) -> Result<T, CodegenError> {
    Err(CodegenError::RuntimeFault(msg.into()))
}

impl<S: Semiring> Machine<'_, S> {
    fn name(&self, v: VarId) -> &str {
        self.kernel.var_name(v)
    }

    fn array_name(&self, a: ArrId) -> &str {
        &self.kernel.symbols.arrays[a].name
    }

    fn exec(&mut self, st: &Stmt) -> Result<(), CodegenError> {
        match st {
            Stmt::Skip => Ok(()),
            Stmt::Seq(v) => v.iter().try_for_each(|x| self.exec(x)),
            Stmt::Assign(v, e) => {
                let x = self.eval(e)?;
                if self.env[*v].is_none() {
                    return fault(format!("assignment to undeclared variable `{}`", self.name(*v)));
                }
                let role = self.kernel.symbols.vars[*v].role;
                if matches!(role, VarRole::Cursor | VarRole::Counter) {
                    if let (Some(Val::Int(old)), Val::Int(new)) = (&self.env[*v], &x) {
                        if new < old {
                            self.stats.cursor_regressions += 1;
                        }
                    }
                }
                self.write(*v, x);
                Ok(())
            }
            Stmt::Reset(v, e) => {
                let x = self.eval(e)?;
                if let Some(prev) = self.last_reset.insert(*v, self.loop_epoch) {
                    if prev == self.loop_epoch {
                        self.stats.repeated_resets += 1;
                    }
                }
                self.write(*v, x);
                Ok(())
            }
            Stmt::Decl(v, e) => {
                let x = self.eval(e)?;
                self.write(*v, x);
                Ok(())
            }
            Stmt::If(c, a, b) => {
                if self.cond(c)? {
                    self.exec(a)
                } else {
                    self.exec(b)
                }
            }
            Stmt::If1(c, a) => {
                if self.cond(c)? {
                    self.exec(a)?;
                }
                Ok(())
            }
            Stmt::While(c, body) => {
                let outer = self.loop_epoch;
                while self.cond(c)? {
                    self.stats.iterations += 1;
                    if self.stats.iterations > self.budget {
                        return fault(format!("iteration budget of {} exceeded", self.budget));
                    }
                    self.loop_epoch = self.next_epoch;
                    self.next_epoch += 1;
                    self.exec(body)?;
                }
                self.loop_epoch = outer;
                Ok(())
            }
            Stmt::Store { index, value } => {
                let i = self.int(index)?;
                let v = self.elem(value)?;
                let len = self.out.len();
                let slot = usize::try_from(i)
                    .ok()
                    .and_then(|i| self.out.get_mut(i))
                    .ok_or_else(|| CodegenError::RuntimeFault(format!("output index {i} out of bounds for length {len}")))?;
                *slot = self.s.add(slot, &v);
                if self.stats.stores > 0 {
                    self.stats.max_writes_between_stores = self.stats.max_writes_between_stores.max(self.touched.len());
                }
                self.touched.clear();
                self.stats.stores += 1;
                Ok(())
            }
        }
    }

    fn write(&mut self, v: VarId, x: Val<S::Elem>) {
        self.stats.writes += 1;
        self.touched.insert(v);
        self.env[v] = Some(x);
    }

    fn cond(&mut self, e: &Expr) -> Result<bool, CodegenError> {
        match self.eval(e)? {
            Val::Bool(b) => Ok(b),
            other => fault(format!("condition evaluated to {other:?}")),
        }
    }

    fn int(&mut self, e: &Expr) -> Result<i64, CodegenError> {
        match self.eval(e)? {
            Val::Int(i) => Ok(i),
            other => fault(format!("expected an integer, found {other:?}")),
        }
    }

    fn elem(&mut self, e: &Expr) -> Result<S::Elem, CodegenError> {
        match self.eval(e)? {
            Val::Elem(x) => Ok(x),
            other => fault(format!("expected a semiring value, found {other:?}")),
        }
    }

    fn eval(&mut self, e: &Expr) -> Result<Val<S::Elem>, CodegenError> {
        Ok(match e {
            Expr::Int(i) => Val::Int(*i),
            Expr::Bool(b) => Val::Bool(*b),
            Expr::Zero => Val::Elem(self.s.zero()),
            Expr::One => Val::Elem(self.s.one()),
            Expr::Var(v) => match &self.env[*v] {
                Some(x) => x.clone(),
                None => return fault(format!("read of undeclared variable `{}`", self.name(*v))),
            },
            Expr::Load(a, i) => {
                let i = self.int(i)?;
                let info = &self.kernel.symbols.arrays[*a];
                let oob = || CodegenError::RuntimeFault(format!("index {i} out of bounds for `{}`", info.name));
                let at = usize::try_from(i).map_err(|_| oob())?;
                match info.ty {
                    Ty::Int => {
                        let arr = self.inputs.ints[*a]
                            .as_ref()
                            .ok_or_else(|| CodegenError::MissingInput(self.array_name(*a).to_string()))?;
                        Val::Int(*arr.get(at).ok_or_else(oob)?)
                    }
                    Ty::Val => {
                        let arr = self.inputs.vals[*a]
                            .as_ref()
                            .ok_or_else(|| CodegenError::MissingInput(self.array_name(*a).to_string()))?;
                        Val::Elem(arr.get(at).ok_or_else(oob)?.clone())
                    }
                }
            }
            Expr::Lt(a, b) => Val::Bool(self.int(a)? < self.int(b)?),
            Expr::Eq(a, b) => Val::Bool(self.int(a)? == self.int(b)?),
            Expr::Min(a, b) => Val::Int(self.int(a)?.min(self.int(b)?)),
            Expr::Max(a, b) => Val::Int(self.int(a)?.max(self.int(b)?)),
            Expr::And(a, b) => Val::Bool(self.cond(a)? && self.cond(b)?),
            Expr::Or(a, b) => Val::Bool(self.cond(a)? || self.cond(b)?),
            Expr::Not(a) => Val::Bool(!self.cond(a)?),
            Expr::IntAdd(a, b) => Val::Int(self.int(a)? + self.int(b)?),
            Expr::IntMul(a, b) => Val::Int(self.int(a)? * self.int(b)?),
            Expr::SemiAdd(a, b) => {
                let (x, y) = (self.elem(a)?, self.elem(b)?);
                Val::Elem(self.s.add(&x, &y))
            }
            Expr::SemiMul(a, b) => {
                let (x, y) = (self.elem(a)?, self.elem(b)?);
                Val::Elem(self.s.mul(&x, &y))
            }
        })
    }
}
