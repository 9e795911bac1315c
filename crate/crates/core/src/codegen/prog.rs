//! The target language: scalar expressions and structured statements.

use std::collections::BTreeSet;

pub type VarId = usize;
pub type ArrId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ty {
    Int,
    Val,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarRole {
    /// Position or counter of an input level; must only move forward
    /// between re-initializations.
    Cursor,
    /// End of a compressed segment.
    Bound,
    /// Counter of a replicated level.
    Counter,
    /// Scalar accumulator for a contracted subtree.
    Temp,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarInfo {
    pub name: String,
    pub ty: Ty,
    pub role: VarRole,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArrayRole {
    Pos { storage: usize, level: usize },
    Crd { storage: usize, level: usize },
    Vals { storage: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArrayInfo {
    pub name: String,
    pub ty: Ty,
    pub role: ArrayRole,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    /// Semiring zero and one.
    Zero,
    One,
    Var(VarId),
    Load(ArrId, Box<Expr>),
    Lt(Box<Expr>, Box<Expr>),
    Eq(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    IntAdd(Box<Expr>, Box<Expr>),
    IntMul(Box<Expr>, Box<Expr>),
    SemiAdd(Box<Expr>, Box<Expr>),
    SemiMul(Box<Expr>, Box<Expr>),
}

macro_rules! binop {
    ($($f:ident => $v:ident),* $(,)?) => {
        $(pub fn $f(a: Expr, b: Expr) -> Expr {
            Expr::$v(Box::new(a), Box::new(b))
        })*
    };
}

binop!(lt => Lt, eq => Eq, min => Min, max => Max, semi_add => SemiAdd, semi_mul => SemiMul);

pub fn not(a: Expr) -> Expr {
    match a {
        Expr::Bool(b) => Expr::Bool(!b),
        a => Expr::Not(Box::new(a)),
    }
}

/// Conjunction with constant folding.
pub fn and(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Bool(false), _) | (_, Expr::Bool(false)) => Expr::Bool(false),
        (Expr::Bool(true), x) | (x, Expr::Bool(true)) => x,
        (a, b) => Expr::And(Box::new(a), Box::new(b)),
    }
}

/// Disjunction with constant folding.
pub fn or(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Bool(true), _) | (_, Expr::Bool(true)) => Expr::Bool(true),
        (Expr::Bool(false), x) | (x, Expr::Bool(false)) => x,
        (a, b) => Expr::Or(Box::new(a), Box::new(b)),
    }
}

pub fn load(a: ArrId, i: Expr) -> Expr {
    Expr::Load(a, Box::new(i))
}

/// Integer addition with constant folding.
pub fn int_add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Int(0), _) => b,
        (_, Expr::Int(0)) => a,
        (Expr::Int(x), Expr::Int(y)) => Expr::Int(x + y),
        _ => Expr::IntAdd(Box::new(a), Box::new(b)),
    }
}

/// Integer multiplication with constant folding.
pub fn int_mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Int(0), _) | (_, Expr::Int(0)) => Expr::Int(0),
        (Expr::Int(1), _) => b,
        (_, Expr::Int(1)) => a,
        (Expr::Int(x), Expr::Int(y)) => Expr::Int(x * y),
        _ => Expr::IntMul(Box::new(a), Box::new(b)),
    }
}

impl Expr {
    pub fn vars_used(&self, out: &mut BTreeSet<VarId>) {
        match self {
            Expr::Int(_) | Expr::Bool(_) | Expr::Zero | Expr::One => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Load(_, i) | Expr::Not(i) => i.vars_used(out),
            Expr::Lt(a, b)
            | Expr::Eq(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b)
            | Expr::And(a, b)
            | Expr::Or(a, b)
            | Expr::IntAdd(a, b)
            | Expr::IntMul(a, b)
            | Expr::SemiAdd(a, b)
            | Expr::SemiMul(a, b) => {
                a.vars_used(out);
                b.vars_used(out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    Skip,
    Assign(VarId, Expr),
    /// Assignment that (re)initializes a cursor; it may move backwards.
    Reset(VarId, Expr),
    Seq(Vec<Stmt>),
    If(Expr, Box<Stmt>, Box<Stmt>),
    If1(Expr, Box<Stmt>),
    While(Expr, Box<Stmt>),
    Decl(VarId, Expr),
    /// `out[index] = out[index] + value`
    Store { index: Expr, value: Expr },
}

impl Stmt {
    /// Sequence, flattening nested sequences and dropping skips.
    pub fn seq(parts: impl IntoIterator<Item = Stmt>) -> Stmt {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Stmt::Skip => {}
                Stmt::Seq(v) => out.extend(v),
                s => out.push(s),
            }
        }
        match out.len() {
            0 => Stmt::Skip,
            1 => out.pop().unwrap(),
            _ => Stmt::Seq(out),
        }
    }

    pub fn count_stores(&self) -> usize {
        match self {
            Stmt::Store { .. } => 1,
            Stmt::Seq(v) => v.iter().map(Stmt::count_stores).sum(),
            Stmt::If(_, a, b) => a.count_stores() + b.count_stores(),
            Stmt::If1(_, a) | Stmt::While(_, a) => a.count_stores(),
            _ => 0,
        }
    }

    /// Variables read or written anywhere in the statement.
    pub fn vars_used(&self, out: &mut BTreeSet<VarId>) {
        match self {
            Stmt::Skip => {}
            Stmt::Assign(v, e) | Stmt::Reset(v, e) | Stmt::Decl(v, e) => {
                out.insert(*v);
                e.vars_used(out);
            }
            Stmt::Seq(v) => v.iter().for_each(|s| s.vars_used(out)),
            Stmt::If(c, a, b) => {
                c.vars_used(out);
                a.vars_used(out);
                b.vars_used(out);
            }
            Stmt::If1(c, a) | Stmt::While(c, a) => {
                c.vars_used(out);
                a.vars_used(out);
            }
            Stmt::Store { index, value } => {
                index.vars_used(out);
                value.vars_used(out);
            }
        }
    }

    /// Depth of the deepest `while` nest.
    pub fn loop_depth(&self) -> usize {
        match self {
            Stmt::While(_, b) => 1 + b.loop_depth(),
            Stmt::Seq(v) => v.iter().map(Stmt::loop_depth).max().unwrap_or(0),
            Stmt::If(_, a, b) => a.loop_depth().max(b.loop_depth()),
            Stmt::If1(_, a) => a.loop_depth(),
            _ => 0,
        }
    }
}

/// Variable and array names of one kernel. Names are unique and never
/// collide with C keywords or the output buffer.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Symbols {
    pub vars: Vec<VarInfo>,
    pub arrays: Vec<ArrayInfo>,
    taken: BTreeSet<String>,
}

const RESERVED: &[&str] = &[
    "out", "int", "double", "const", "void", "while", "if", "else", "for", "do", "return", "fmin", "INFINITY",
    "auto", "break", "case", "char", "continue", "default", "enum", "extern", "float", "goto", "inline", "long",
    "register", "restrict", "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
    "unsigned", "volatile",
];

impl Symbols {
    pub fn new() -> Self {
        Symbols {
            taken: RESERVED.iter().map(|s| s.to_string()).collect(),
            ..Symbols::default()
        }
    }

    fn unique(&mut self, base: &str) -> String {
        let mut name = base.to_string();
        let mut n = 2;
        while self.taken.contains(&name) {
            name = format!("{base}_{n}");
            n += 1;
        }
        self.taken.insert(name.clone());
        name
    }

    pub fn var(&mut self, base: &str, ty: Ty, role: VarRole) -> VarId {
        let name = self.unique(base);
        self.vars.push(VarInfo { name, ty, role });
        self.vars.len() - 1
    }

    pub fn array(&mut self, base: &str, ty: Ty, role: ArrayRole) -> ArrId {
        let name = self.unique(base);
        self.arrays.push(ArrayInfo { name, ty, role });
        self.arrays.len() - 1
    }
}
