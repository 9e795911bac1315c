//! Contraction expressions over named indices.
//!
//! ```text
//! expr   := term ('+' term)*
//! term   := factor ('*' factor)*
//! factor := ident '(' ident-list ')' | 'sum' '(' ident ',' expr ')' | '(' expr ')'
//! ```
//!
//! [`parse`] produces an unsorted [`Ast`]. [`infer_sorts`] fixes a global
//! index order, computes the shape of every node and inserts the
//! replications that make both operands of `*` and `+` share a shape.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;

use crate::combinators::{
    add_nested, counted_nested, mul_nested, rep_nested, sum_nested, IndexId, IndexUniverse, NestedStream, StreamCtx,
};
use crate::error::{ExprError, OracleError};
use crate::formats::{stream_of_levels, CooTensor, LevelTensor, TensorFormat};
use crate::oracle::{var_add, var_mul, var_rep, var_sum, ContractionProblem, SparseVariable, ORACLE_MAX_POINTS};
use crate::semiring::Semiring;
use crate::stream::OpCounter;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug)]
pub struct Ast {
    pub kind: AstKind,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub enum AstKind {
    Var { name: String, indices: Vec<String> },
    Mul(Box<Ast>, Box<Ast>),
    Add(Box<Ast>, Box<Ast>),
    Sum { index: String, body: Box<Ast> },
}

impl Ast {
    fn new(kind: AstKind, start: usize, end: usize) -> Self {
        Ast {
            kind,
            span: Span { start, end },
        }
    }

    /// Variables in order of first mention.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit_vars(&mut |name, _| {
            if !out.iter().any(|n| n == name) {
                out.push(name.to_string());
            }
        });
        out
    }

    /// Indices in order of first mention inside variable arguments.
    pub fn mentioned_indices(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        self.visit_vars(&mut |_, idx| {
            for i in idx {
                if !out.contains(i) {
                    out.push(i.clone());
                }
            }
        });
        out
    }

    fn visit_vars(&self, f: &mut impl FnMut(&str, &[String])) {
        match &self.kind {
            AstKind::Var { name, indices } => f(name, indices),
            AstKind::Mul(a, b) | AstKind::Add(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            AstKind::Sum { body, .. } => body.visit_vars(f),
        }
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            AstKind::Var { name, indices } => write!(f, "{name}({})", indices.join(",")),
            AstKind::Mul(a, b) => {
                let wrap = |x: &Ast| matches!(x.kind, AstKind::Add(..));
                fmt_wrapped(f, a, wrap(a))?;
                f.write_str(" * ")?;
                // `*` is left-associative
                fmt_wrapped(f, b, wrap(b) || matches!(b.kind, AstKind::Mul(..)))
            }
            AstKind::Add(a, b) => {
                write!(f, "{a} + ")?;
                fmt_wrapped(f, b, matches!(b.kind, AstKind::Add(..)))
            }
            AstKind::Sum { index, body } => write!(f, "sum({index}, {body})"),
        }
    }
}

fn fmt_wrapped(f: &mut fmt::Formatter<'_>, a: &Ast, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({a})")
    } else {
        write!(f, "{a}")
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Star,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize, usize)>, ExprError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '*' => Some(Tok::Star),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, i, i + 1));
            i += 1;
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start, i));
        } else {
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(ExprError::Syntax {
                pos: i,
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    out.push((Tok::End, text.len(), text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn last_end(&self) -> usize {
        if self.at == 0 {
            0
        } else {
            self.toks[self.at - 1].2
        }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if t != Tok::End {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            pos: self.pos(),
            message: message.into(),
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            let found = describe(self.peek());
            self.fail(format!("expected {what}, found {found}"))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ExprError> {
        match self.peek().clone() {
            Tok::Ident(s) if s != "sum" => {
                self.bump();
                Ok(s)
            }
            t => self.fail(format!("expected {what}, found {}", describe(&t))),
        }
    }

    fn expr(&mut self) -> Result<Ast, ExprError> {
        let start = self.pos();
        let mut lhs = self.term()?;
        while *self.peek() == Tok::Plus {
            self.bump();
            let rhs = self.term()?;
            lhs = Ast::new(AstKind::Add(Box::new(lhs), Box::new(rhs)), start, self.last_end());
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Ast, ExprError> {
        let start = self.pos();
        let mut lhs = self.factor()?;
        while *self.peek() == Tok::Star {
            self.bump();
            let rhs = self.factor()?;
            lhs = Ast::new(AstKind::Mul(Box::new(lhs), Box::new(rhs)), start, self.last_end());
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Ast, ExprError> {
        let start = self.pos();
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) if name == "sum" => {
                self.bump();
                self.expect(Tok::LParen, "`(` after `sum`")?;
                let index = self.ident("an index name")?;
                self.expect(Tok::Comma, "`,`")?;
                let body = self.expr()?;
                self.expect(Tok::RParen, "`)` closing `sum`")?;
                Ok(Ast::new(
                    AstKind::Sum {
                        index,
                        body: Box::new(body),
                    },
                    start,
                    self.last_end(),
                ))
            }
            Tok::Ident(name) => {
                self.bump();
                self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
                let mut indices = Vec::new();
                if *self.peek() != Tok::RParen {
                    indices.push(self.ident("an index name")?);
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        indices.push(self.ident("an index name")?);
                    }
                }
                self.expect(Tok::RParen, "`)`")?;
                Ok(Ast::new(AstKind::Var { name, indices }, start, self.last_end()))
            }
            t => self.fail(format!("expected a variable, `sum` or `(`, found {}", describe(&t))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Plus => "`+`".into(),
        Tok::Star => "`*`".into(),
        Tok::End => "end of input".into(),
    }
}

pub fn parse(text: &str) -> Result<Ast, ExprError> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        let found = describe(p.peek());
        return p.fail(format!("unexpected {found} after expression"));
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Sorts

/// What sort inference needs to know about a bound variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarSig {
    pub dims: Vec<usize>,
    /// Index names declared with the binding, if any.
    pub indices: Option<Vec<String>>,
}

impl VarSig {
    pub fn new(dims: Vec<usize>) -> Self {
        VarSig { dims, indices: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub kind: TermKind,
    /// Index ids of this node, ascending.
    pub shape: Vec<IndexId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TermKind {
    /// `indices[d]` names mode `d` of the bound tensor. `occurrence`
    /// numbers variable uses left to right.
    Var {
        name: String,
        indices: Vec<IndexId>,
        occurrence: usize,
    },
    Mul(Box<Term>, Box<Term>),
    Add(Box<Term>, Box<Term>),
    Sum(IndexId, Box<Term>),
    Rep(IndexId, Box<Term>),
}

impl Term {
    fn rep(i: IndexId, t: Term) -> Term {
        let mut shape = t.shape.clone();
        let at = shape.partition_point(|&x| x < i);
        shape.insert(at, i);
        Term {
            kind: TermKind::Rep(i, Box::new(t)),
            shape,
        }
    }

    /// Wraps `t` in replications until its shape is `target`.
    fn widen(t: Term, target: &[IndexId]) -> Term {
        let missing: Vec<IndexId> = target.iter().copied().filter(|i| !t.shape.contains(i)).collect();
        missing.into_iter().fold(t, |acc, i| Term::rep(i, acc))
    }

    pub fn count_reps(&self) -> usize {
        match &self.kind {
            TermKind::Var { .. } => 0,
            TermKind::Mul(a, b) | TermKind::Add(a, b) => a.count_reps() + b.count_reps(),
            TermKind::Sum(_, a) => a.count_reps(),
            TermKind::Rep(_, a) => 1 + a.count_reps(),
        }
    }

    pub fn has_add(&self) -> bool {
        match &self.kind {
            TermKind::Var { .. } => false,
            TermKind::Add(..) => true,
            TermKind::Mul(a, b) => a.has_add() || b.has_add(),
            TermKind::Sum(_, a) | TermKind::Rep(_, a) => a.has_add(),
        }
    }

    /// Distributes `*`, `Σ` and `⇑` over `+`, giving `+`-free terms whose
    /// sum denotes the same variable.
    pub fn expand_sums(&self) -> Vec<Term> {
        let wrap = |kind: TermKind, shape: &[IndexId]| Term {
            kind,
            shape: shape.to_vec(),
        };
        match &self.kind {
            TermKind::Var { .. } => vec![self.clone()],
            TermKind::Add(a, b) => {
                let mut v = a.expand_sums();
                v.extend(b.expand_sums());
                v
            }
            TermKind::Mul(a, b) => {
                let (xs, ys) = (a.expand_sums(), b.expand_sums());
                let mut out = Vec::with_capacity(xs.len() * ys.len());
                for x in &xs {
                    for y in &ys {
                        out.push(wrap(TermKind::Mul(Box::new(x.clone()), Box::new(y.clone())), &self.shape));
                    }
                }
                out
            }
            TermKind::Sum(i, a) => a
                .expand_sums()
                .into_iter()
                .map(|x| wrap(TermKind::Sum(*i, Box::new(x)), &self.shape))
                .collect(),
            TermKind::Rep(i, a) => a
                .expand_sums()
                .into_iter()
                .map(|x| wrap(TermKind::Rep(*i, Box::new(x)), &self.shape))
                .collect(),
        }
    }

    /// Renumbers variable occurrences left to right from `next`.
    pub fn renumber(&mut self, next: &mut usize) {
        match &mut self.kind {
            TermKind::Var { occurrence, .. } => {
                *occurrence = *next;
                *next += 1;
            }
            TermKind::Mul(a, b) | TermKind::Add(a, b) => {
                a.renumber(next);
                b.renumber(next);
            }
            TermKind::Sum(_, a) | TermKind::Rep(_, a) => a.renumber(next),
        }
    }

    fn vars<'a>(&'a self, out: &mut Vec<(&'a str, &'a [IndexId])>) {
        match &self.kind {
            TermKind::Var { name, indices, .. } => out.push((name, indices)),
            TermKind::Mul(a, b) | TermKind::Add(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            TermKind::Sum(_, a) | TermKind::Rep(_, a) => a.vars(out),
        }
    }

    fn display(&self, u: &IndexUniverse, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            TermKind::Var { name, indices, .. } => {
                let names: Vec<&str> = indices.iter().map(|&i| u.name(i)).collect();
                write!(f, "{name}({})", names.join(","))
            }
            TermKind::Mul(a, b) => {
                f.write_str("(")?;
                a.display(u, f)?;
                f.write_str(" * ")?;
                b.display(u, f)?;
                f.write_str(")")
            }
            TermKind::Add(a, b) => {
                f.write_str("(")?;
                a.display(u, f)?;
                f.write_str(" + ")?;
                b.display(u, f)?;
                f.write_str(")")
            }
            TermKind::Sum(i, a) => {
                write!(f, "sum({}, ", u.name(*i))?;
                a.display(u, f)?;
                f.write_str(")")
            }
            TermKind::Rep(i, a) => {
                write!(f, "rep({}, ", u.name(*i))?;
                a.display(u, f)?;
                f.write_str(")")
            }
        }
    }

    /// Drops replications, recovering an expression `infer_sorts` accepts.
    pub fn to_ast(&self, u: &IndexUniverse) -> Ast {
        let sp = |kind| Ast::new(kind, 0, 0);
        match &self.kind {
            TermKind::Var { name, indices, .. } => sp(AstKind::Var {
                name: name.clone(),
                indices: indices.iter().map(|&i| u.name(i).to_string()).collect(),
            }),
            TermKind::Mul(a, b) => sp(AstKind::Mul(Box::new(a.to_ast(u)), Box::new(b.to_ast(u)))),
            TermKind::Add(a, b) => sp(AstKind::Add(Box::new(a.to_ast(u)), Box::new(b.to_ast(u)))),
            TermKind::Sum(i, a) => sp(AstKind::Sum {
                index: u.name(*i).to_string(),
                body: Box::new(a.to_ast(u)),
            }),
            TermKind::Rep(_, a) => a.to_ast(u),
        }
    }
}

/// A well-sorted expression together with its index universe.
#[derive(Clone, Debug, PartialEq)]
pub struct Sorted {
    pub source: String,
    pub universe: IndexUniverse,
    pub root: Term,
}

impl Sorted {
    /// Free indices of the result, ascending in the global order.
    pub fn free(&self) -> &[IndexId] {
        &self.root.shape
    }

    pub fn free_names(&self) -> Vec<String> {
        self.free().iter().map(|&i| self.universe.name(i).to_string()).collect()
    }

    pub fn order_names(&self) -> Vec<String> {
        self.universe.names().to_vec()
    }

    pub fn variables(&self) -> Vec<(String, Vec<IndexId>)> {
        let mut v = Vec::new();
        self.root.vars(&mut v);
        v.into_iter().map(|(n, i)| (n.to_string(), i.to_vec())).collect()
    }
}

impl fmt::Display for Sorted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.display(&self.universe, f)
    }
}

/// Name-level shape pass: catches every sort error before sizes or order
/// are consulted.
fn shape_names(e: &Ast, sigs: &BTreeMap<String, VarSig>) -> Result<BTreeSet<String>, ExprError> {
    match &e.kind {
        AstKind::Var { name, indices } => {
            let sig = sigs
                .get(name)
                .ok_or_else(|| ExprError::UnboundVariable(name.clone()))?;
            if sig.dims.len() != indices.len() {
                return Err(ExprError::RankMismatch {
                    var: name.clone(),
                    expected: sig.dims.len(),
                    found: indices.len(),
                });
            }
            if let Some(declared) = &sig.indices {
                if declared != indices {
                    return Err(ExprError::BindingIndices {
                        var: name.clone(),
                        declared: declared.clone(),
                        used: indices.clone(),
                    });
                }
            }
            let mut set = BTreeSet::new();
            for i in indices {
                if !set.insert(i.clone()) {
                    return Err(ExprError::RepeatedIndex {
                        var: name.clone(),
                        index: i.clone(),
                    });
                }
            }
            Ok(set)
        }
        AstKind::Mul(a, b) | AstKind::Add(a, b) => {
            let mut s = shape_names(a, sigs)?;
            s.extend(shape_names(b, sigs)?);
            Ok(s)
        }
        AstKind::Sum { index, body } => {
            let mut s = shape_names(body, sigs)?;
            if !s.remove(index) {
                return Err(ExprError::MissingIndex {
                    index: index.clone(),
                    available: s.into_iter().collect(),
                });
            }
            Ok(s)
        }
    }
}

/// Sort inference. `order` fixes the global index order; when absent the
/// order of first mention is used. Order entries that the expression never
/// mentions are ignored.
pub fn infer_sorts(
    e: &Ast,
    sigs: &BTreeMap<String, VarSig>,
    order: Option<&[String]>,
) -> Result<Sorted, ExprError> {
    shape_names(e, sigs)?;
    let mentioned = e.mentioned_indices();
    let order: Vec<String> = match order {
        None => mentioned.clone(),
        Some(o) => {
            let mut seen = BTreeSet::new();
            for n in o {
                if !seen.insert(n) {
                    return Err(ExprError::DuplicateInOrder(n.clone()));
                }
            }
            if let Some(m) = mentioned.iter().find(|m| !o.contains(m)) {
                return Err(ExprError::NotInOrder(m.clone()));
            }
            o.iter().filter(|n| mentioned.contains(n)).cloned().collect()
        }
    };
    let mut sizes: BTreeMap<String, usize> = BTreeMap::new();
    size_pass(e, sigs, &mut sizes)?;
    let universe = IndexUniverse::new(order.iter().map(|n| (n.clone(), sizes[n])))?;
    let mut occurrence = 0;
    let root = build(e, &universe, &mut occurrence);
    Ok(Sorted {
        source: e.to_string(),
        universe,
        root,
    })
}

fn size_pass(e: &Ast, sigs: &BTreeMap<String, VarSig>, sizes: &mut BTreeMap<String, usize>) -> Result<(), ExprError> {
    match &e.kind {
        AstKind::Var { name, indices } => {
            for (i, &d) in indices.iter().zip(&sigs[name].dims) {
                match sizes.get(i) {
                    Some(&prev) if prev != d => {
                        return Err(ExprError::DimensionMismatch {
                            index: i.clone(),
                            first: prev,
                            second: d,
                        })
                    }
                    _ => {
                        sizes.insert(i.clone(), d);
                    }
                }
            }
            Ok(())
        }
        AstKind::Mul(a, b) | AstKind::Add(a, b) => {
            size_pass(a, sigs, sizes)?;
            size_pass(b, sigs, sizes)
        }
        AstKind::Sum { body, .. } => size_pass(body, sigs, sizes),
    }
}

fn build(e: &Ast, u: &IndexUniverse, occurrence: &mut usize) -> Term {
    let id = |n: &str| u.lookup(n).expect("index checked by shape pass");
    match &e.kind {
        AstKind::Var { name, indices } => {
            let ids: Vec<IndexId> = indices.iter().map(|n| id(n)).collect();
            let mut shape = ids.clone();
            shape.sort_unstable();
            let t = Term {
                kind: TermKind::Var {
                    name: name.clone(),
                    indices: ids,
                    occurrence: *occurrence,
                },
                shape,
            };
            *occurrence += 1;
            t
        }
        AstKind::Mul(a, b) | AstKind::Add(a, b) => {
            let (ta, tb) = (build(a, u, occurrence), build(b, u, occurrence));
            let shape: Vec<IndexId> = ta.shape.iter().chain(&tb.shape).copied().collect::<BTreeSet<_>>().into_iter().collect();
            let (ta, tb) = (Box::new(Term::widen(ta, &shape)), Box::new(Term::widen(tb, &shape)));
            let kind = if matches!(e.kind, AstKind::Mul(..)) {
                TermKind::Mul(ta, tb)
            } else {
                TermKind::Add(ta, tb)
            };
            Term { kind, shape }
        }
        AstKind::Sum { index, body } => {
            let t = build(body, u, occurrence);
            let i = id(index);
            let shape = t.shape.iter().copied().filter(|&x| x != i).collect();
            Term {
                kind: TermKind::Sum(i, Box::new(t)),
                shape,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Bindings and interpretation

/// A tensor bound to an expression variable.
#[derive(Clone, Debug)]
pub struct Bound<T> {
    pub tensor: Rc<CooTensor<T>>,
    pub format: TensorFormat,
    /// Index names given with the binding, if any.
    pub indices: Option<Vec<String>>,
}

impl<T: Clone> Bound<T> {
    pub fn new(tensor: CooTensor<T>, format: TensorFormat) -> Self {
        Bound {
            tensor: Rc::new(tensor),
            format,
            indices: None,
        }
    }

    pub fn sig(&self) -> VarSig {
        VarSig {
            dims: self.tensor.dims().to_vec(),
            indices: self.indices.clone(),
        }
    }
}

pub type Bindings<T> = BTreeMap<String, Bound<T>>;

pub fn signatures<T: Clone>(b: &Bindings<T>) -> BTreeMap<String, VarSig> {
    b.iter().map(|(k, v)| (k.clone(), v.sig())).collect()
}

/// Parses and sorts in one step.
pub fn compile<T: Clone>(text: &str, bindings: &Bindings<T>, order: Option<&[String]>) -> Result<Sorted, ExprError> {
    let ast = parse(text)?;
    let mut sorted = infer_sorts(&ast, &signatures(bindings), order)?;
    sorted.source = text.trim().to_string();
    Ok(sorted)
}

/// Permutation sorting the modes of a variable use into ascending id order.
pub fn ascending_perm(indices: &[IndexId]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..indices.len()).collect();
    perm.sort_by_key(|&d| indices[d]);
    perm
}

fn unbound(name: &str) -> ExprError {
    ExprError::UnboundVariable(name.to_string())
}

/// Folds a sorted expression into nested-stream combinators. The result's
/// index sequence is the free indices in global order.
pub fn interpret<S: Semiring>(
    ctx: &Rc<StreamCtx<S>>,
    sorted: &Sorted,
    bindings: &Bindings<S::Elem>,
) -> Result<NestedStream<S::Elem>, ExprError> {
    let mut cache: LevelCache<S::Elem> = HashMap::new();
    interpret_term(ctx, &sorted.universe, &sorted.root, bindings, &mut cache, None)
}

type LevelCache<T> = HashMap<(String, Vec<usize>), Rc<LevelTensor<T>>>;

fn interpret_term<S: Semiring>(
    ctx: &Rc<StreamCtx<S>>,
    u: &IndexUniverse,
    t: &Term,
    bindings: &Bindings<S::Elem>,
    cache: &mut LevelCache<S::Elem>,
    counter: Option<&Rc<OpCounter>>,
) -> Result<NestedStream<S::Elem>, ExprError> {
    Ok(match &t.kind {
        TermKind::Var { name, indices, .. } => {
            let b = bindings.get(name).ok_or_else(|| unbound(name))?;
            let perm = ascending_perm(indices);
            let levels = cache
                .entry((name.clone(), perm.clone()))
                .or_insert_with(|| {
                    let coo = b.tensor.permute(&perm);
                    Rc::new(LevelTensor::build(&coo, &b.format.levels(coo.rank()), ctx.semiring.zero()))
                })
                .clone();
            let mut root = stream_of_levels(levels).map_err(|e| ExprError::Binding {
                var: name.clone(),
                message: e.to_string(),
            })?;
            if let Some(c) = counter {
                root = counted_nested(root, c);
            }
            NestedStream::new(t.shape.clone(), root)
        }
        TermKind::Mul(a, b) => {
            let x = interpret_term(ctx, u, a, bindings, cache, counter)?;
            let y = interpret_term(ctx, u, b, bindings, cache, counter)?;
            mul_nested(ctx, u, x, y)?
        }
        TermKind::Add(a, b) => {
            let x = interpret_term(ctx, u, a, bindings, cache, counter)?;
            let y = interpret_term(ctx, u, b, bindings, cache, counter)?;
            add_nested(ctx, u, x, y)?
        }
        TermKind::Sum(i, a) => sum_nested(ctx, u, *i, interpret_term(ctx, u, a, bindings, cache, counter)?)?,
        TermKind::Rep(i, a) => rep_nested(u, *i, interpret_term(ctx, u, a, bindings, cache, counter)?)?,
    })
}

/// Splits off the `sum`s at the root: the contracted indices, outermost
/// first, and the body they apply to.
pub fn split_outer_sums(t: &Term) -> (Vec<IndexId>, &Term) {
    let mut summed = Vec::new();
    let mut t = t;
    while let TermKind::Sum(i, body) = &t.kind {
        summed.push(*i);
        t = body;
    }
    (summed, t)
}

/// The stream of the expression's body with its outer `sum`s removed.
/// A contraction keeps every state of its operand and only replaces the
/// index, so this stream has the size of the whole plan, including the
/// work spent on contracted levels.
pub fn interpret_plan<S: Semiring>(
    ctx: &Rc<StreamCtx<S>>,
    sorted: &Sorted,
    bindings: &Bindings<S::Elem>,
) -> Result<NestedStream<S::Elem>, ExprError> {
    interpret_plan_counted(ctx, sorted, bindings, None)
}

/// [`interpret_plan`] with every input cursor reporting its advance and
/// skip calls to `counter`.
pub fn interpret_plan_counted<S: Semiring>(
    ctx: &Rc<StreamCtx<S>>,
    sorted: &Sorted,
    bindings: &Bindings<S::Elem>,
    counter: Option<&Rc<OpCounter>>,
) -> Result<NestedStream<S::Elem>, ExprError> {
    let (_, body) = split_outer_sums(&sorted.root);
    let mut cache = HashMap::new();
    interpret_term(ctx, &sorted.universe, body, bindings, &mut cache, counter)
}

/// The variable a bound tensor denotes under a variable use.
pub fn bound_variable<S: Semiring>(s: &S, b: &Bound<S::Elem>, indices: &[IndexId]) -> SparseVariable<S::Elem> {
    let perm = ascending_perm(indices);
    let mut ids = indices.to_vec();
    ids.sort_unstable();
    b.tensor.permute(&perm).to_variable(s, ids)
}

/// Interpretation in the variable algebra: the same fold as [`interpret`],
/// with the oracle operators in place of the stream combinators.
pub fn interpret_oracle<S: Semiring>(
    s: &S,
    sorted: &Sorted,
    bindings: &Bindings<S::Elem>,
) -> Result<SparseVariable<S::Elem>, OracleVarError> {
    oracle_term(s, &sorted.universe, &sorted.root, bindings)
}

/// Failure of an oracle-side evaluation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleVarError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

fn oracle_term<S: Semiring>(
    s: &S,
    u: &IndexUniverse,
    t: &Term,
    bindings: &Bindings<S::Elem>,
) -> Result<SparseVariable<S::Elem>, OracleVarError> {
    Ok(match &t.kind {
        TermKind::Var { name, indices, .. } => {
            let b = bindings.get(name).ok_or_else(|| unbound(name))?;
            bound_variable(s, b, indices)
        }
        TermKind::Mul(a, b) => var_mul(s, &oracle_term(s, u, a, bindings)?, &oracle_term(s, u, b, bindings)?)?,
        TermKind::Add(a, b) => var_add(s, &oracle_term(s, u, a, bindings)?, &oracle_term(s, u, b, bindings)?)?,
        TermKind::Sum(i, a) => var_sum(s, u, *i, &oracle_term(s, u, a, bindings)?)?,
        TermKind::Rep(i, a) => var_rep(u, *i, &oracle_term(s, u, a, bindings)?)?,
    })
}

/// The contraction problem an expression denotes, when it is a pure
/// sum of products in which every summed index is private to its `sum`.
pub fn to_problem<S: Semiring>(
    s: &S,
    sorted: &Sorted,
    bindings: &Bindings<S::Elem>,
) -> Result<Option<ContractionProblem<S::Elem>>, ExprError> {
    if sorted.root.has_add() {
        return Ok(None);
    }
    let mut contracted = BTreeSet::new();
    if !summed_privately(&sorted.root, &mut contracted) {
        return Ok(None);
    }
    let mut factors = Vec::new();
    for (name, indices) in sorted.variables() {
        let b = bindings.get(&name).ok_or_else(|| unbound(&name))?;
        factors.push(bound_variable(s, b, &indices));
    }
    Ok(Some(ContractionProblem { factors, contracted }))
}

fn summed_privately(t: &Term, contracted: &mut BTreeSet<IndexId>) -> bool {
    match &t.kind {
        TermKind::Var { .. } => true,
        TermKind::Add(..) => false,
        TermKind::Mul(a, b) => {
            // an index summed on one side must not occur on the other
            let (mut ca, mut cb) = (BTreeSet::new(), BTreeSet::new());
            if !summed_privately(a, &mut ca) || !summed_privately(b, &mut cb) {
                return false;
            }
            let (ua, ub) = (used_indices(a), used_indices(b));
            if ca.iter().any(|i| ub.contains(i)) || cb.iter().any(|i| ua.contains(i)) {
                return false;
            }
            contracted.extend(ca);
            contracted.extend(cb);
            true
        }
        TermKind::Sum(i, a) => summed_privately(a, contracted) && contracted.insert(*i),
        TermKind::Rep(_, a) => summed_privately(a, contracted),
    }
}

fn used_indices(t: &Term) -> BTreeSet<IndexId> {
    let mut v = Vec::new();
    t.vars(&mut v);
    v.into_iter().flat_map(|(_, i)| i.iter().copied()).collect()
}

/// Pointwise brute force: evaluates the expression separately at every
/// point of its free shape, looping over each `sum` explicitly.
pub fn reference_eval<S: Semiring>(
    s: &S,
    sorted: &Sorted,
    bindings: &Bindings<S::Elem>,
) -> Result<SparseVariable<S::Elem>, OracleVarError> {
    let u = &sorted.universe;
    if u.points() > ORACLE_MAX_POINTS {
        return Err(OracleError::TooLarge(u.points()).into());
    }
    let mut tables: HashMap<String, HashMap<Vec<usize>, S::Elem>> = HashMap::new();
    for (name, _) in sorted.variables() {
        let b = bindings.get(&name).ok_or_else(|| unbound(&name))?;
        tables
            .entry(name)
            .or_insert_with(|| b.tensor.entries().iter().cloned().collect());
    }
    let free = sorted.free().to_vec();
    let sizes: Vec<usize> = free.iter().map(|&i| u.size(i)).collect();
    let mut out = SparseVariable::zero_in(u, free.clone());
    let mut x = vec![0usize; u.len()];
    for point in crate::oracle::odometer(&sizes) {
        for (&i, &v) in free.iter().zip(&point) {
            x[i] = v;
        }
        let v = point_value(s, u, &sorted.root, &tables, &mut x);
        out.accumulate(s, point, v);
    }
    out.normalize(s);
    Ok(out)
}

fn point_value<S: Semiring>(
    s: &S,
    u: &IndexUniverse,
    t: &Term,
    tables: &HashMap<String, HashMap<Vec<usize>, S::Elem>>,
    x: &mut Vec<usize>,
) -> S::Elem {
    match &t.kind {
        TermKind::Var { name, indices, .. } => {
            let key: Vec<usize> = indices.iter().map(|&i| x[i]).collect();
            tables[name].get(&key).cloned().unwrap_or_else(|| s.zero())
        }
        TermKind::Mul(a, b) => {
            let va = point_value(s, u, a, tables, x);
            let vb = point_value(s, u, b, tables, x);
            s.mul(&va, &vb)
        }
        TermKind::Add(a, b) => {
            let va = point_value(s, u, a, tables, x);
            let vb = point_value(s, u, b, tables, x);
            s.add(&va, &vb)
        }
        TermKind::Sum(i, a) => {
            let saved = x[*i];
            let mut acc = s.zero();
            for v in 0..u.size(*i) {
                x[*i] = v;
                acc = s.add(&acc, &point_value(s, u, a, tables, x));
            }
            x[*i] = saved;
            acc
        }
        TermKind::Rep(_, a) => point_value(s, u, a, tables, x),
    }
}

// ---------------------------------------------------------------------------
// Presets

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Preset {
    pub name: &'static str,
    pub expr: &'static str,
    pub order: &'static [&'static str],
    /// Variable name and rank, in order of first mention.
    pub vars: &'static [(&'static str, usize)],
}

const IJKL: &[&str] = &["i", "j", "k", "l"];

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "mmul1",
        expr: "sum(j, A(i,j) * B(j,k))",
        order: IJKL,
        vars: &[("A", 2), ("B", 2)],
    },
    Preset {
        name: "mmul2",
        expr: "sum(k, A(i,k) * B(j,k))",
        order: IJKL,
        vars: &[("A", 2), ("B", 2)],
    },
    Preset {
        name: "ttv",
        expr: "sum(k, C(i,j,k) * v(k))",
        order: IJKL,
        vars: &[("C", 3), ("v", 1)],
    },
    Preset {
        name: "ttm",
        expr: "sum(l, C(i,j,l) * A(k,l))",
        order: IJKL,
        vars: &[("C", 3), ("A", 2)],
    },
    Preset {
        name: "mttkrp",
        expr: "sum(j, sum(k, C(i,j,k) * A(j,l) * B(k,l)))",
        order: IJKL,
        vars: &[("C", 3), ("A", 2), ("B", 2)],
    },
    Preset {
        name: "inner3",
        expr: "sum(i, sum(j, sum(k, C(i,j,k) * C(i,j,k))))",
        order: IJKL,
        vars: &[("C", 3)],
    },
];

pub fn preset(name: &str) -> Result<&'static Preset, ExprError> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| ExprError::UnknownPreset(name.to_string()))
}

impl Preset {
    pub fn order_names(&self) -> Vec<String> {
        self.order.iter().map(|s| s.to_string()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiring::Integer;

    fn sigs(v: &[(&str, &[usize])]) -> BTreeMap<String, VarSig> {
        v.iter().map(|(n, d)| (n.to_string(), VarSig::new(d.to_vec()))).collect()
    }

    #[test]
    fn parse_matmul() {
        let e = parse("sum(j, A(i,j) * B(j,k))").unwrap();
        let AstKind::Sum { index, body } = &e.kind else { panic!() };
        assert_eq!(index, "j");
        assert!(matches!(body.kind, AstKind::Mul(..)));
        assert_eq!(e.span, Span { start: 0, end: 23 });
        assert_eq!(e.to_string(), "sum(j, A(i,j) * B(j,k))");
    }

    #[test]
    fn parse_single_and_scalar_var() {
        assert!(matches!(parse("A(i,j)").unwrap().kind, AstKind::Var { .. }));
        let AstKind::Var { indices, .. } = parse("s()").unwrap().kind else { panic!() };
        assert!(indices.is_empty());
    }

    #[test]
    fn parse_errors_have_positions() {
        let err = parse("sum(l, A(i,j)").unwrap_err();
        assert_eq!(
            err,
            ExprError::Syntax {
                pos: 13,
                message: "expected `)` closing `sum`, found end of input".into()
            }
        );
        assert!(matches!(parse("A(i,) ").unwrap_err(), ExprError::Syntax { pos: 4, .. }));
        assert!(matches!(parse("A(i) B(j)").unwrap_err(), ExprError::Syntax { pos: 5, .. }));
        assert!(matches!(parse("A(i) $").unwrap_err(), ExprError::Syntax { pos: 5, .. }));
        assert!(matches!(parse("sum(sum, A(i))").unwrap_err(), ExprError::Syntax { pos: 4, .. }));
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse("A(i) + B(i) * C(i) * D(i)").unwrap();
        assert_eq!(e.to_string(), "A(i) + B(i) * C(i) * D(i)");
        let AstKind::Add(_, rhs) = &e.kind else { panic!() };
        let AstKind::Mul(lhs, _) = &rhs.kind else { panic!() };
        assert!(matches!(lhs.kind, AstKind::Mul(..)));
        assert_eq!(parse("(A(i) + B(i)) * C(i)").unwrap().to_string(), "(A(i) + B(i)) * C(i)");
        assert_eq!(parse("A(i) * (B(i) * C(i))").unwrap().to_string(), "A(i) * (B(i) * C(i))");
    }

    #[test]
    fn matmul_inserts_two_reps() {
        let s = sigs(&[("A", &[2, 3]), ("B", &[3, 4])]);
        let sorted = infer_sorts(&parse("sum(j, A(i,j)*B(j,k))").unwrap(), &s, None).unwrap();
        assert_eq!(sorted.order_names(), vec!["i", "j", "k"]);
        assert_eq!(sorted.free_names(), vec!["i", "k"]);
        assert_eq!(sorted.to_string(), "sum(j, (rep(k, A(i,j)) * rep(i, B(j,k))))");
        assert_eq!(sorted.root.count_reps(), 2);
    }

    #[test]
    fn single_variable_has_no_reps() {
        let s = sigs(&[("A", &[2, 3])]);
        let sorted = infer_sorts(&parse("A(i,j)").unwrap(), &s, None).unwrap();
        assert_eq!(sorted.root.count_reps(), 0);
        assert_eq!(sorted.free().len(), 2);
    }

    #[test]
    fn sort_errors() {
        let s = sigs(&[("A", &[2, 3]), ("B", &[3, 4]), ("C", &[5])]);
        let err = infer_sorts(&parse("sum(l, A(i,j)*B(j,k))").unwrap(), &s, None).unwrap_err();
        assert!(matches!(&err, ExprError::MissingIndex { index, .. } if index == "l"));
        assert!(err.to_string().starts_with("MissingIndex(l)"));
        assert_eq!(
            infer_sorts(&parse("Z(i)").unwrap(), &s, None).unwrap_err(),
            ExprError::UnboundVariable("Z".into())
        );
        assert!(matches!(
            infer_sorts(&parse("A(i)").unwrap(), &s, None).unwrap_err(),
            ExprError::RankMismatch { expected: 2, found: 1, .. }
        ));
        assert!(matches!(
            infer_sorts(&parse("A(i,i)").unwrap(), &s, None).unwrap_err(),
            ExprError::RepeatedIndex { .. }
        ));
        assert!(matches!(
            infer_sorts(&parse("A(i,j)*C(j)").unwrap(), &s, None).unwrap_err(),
            ExprError::DimensionMismatch { .. }
        ));
        let order = vec!["i".to_string()];
        assert_eq!(
            infer_sorts(&parse("A(i,j)").unwrap(), &s, Some(&order)).unwrap_err(),
            ExprError::NotInOrder("j".into())
        );
    }

    #[test]
    fn order_override_and_idempotence() {
        let s = sigs(&[("A", &[2, 3]), ("B", &[3, 4])]);
        let e = parse("sum(j, A(i,j)*B(j,k))").unwrap();
        let order: Vec<String> = ["k", "i", "j", "z"].iter().map(|s| s.to_string()).collect();
        let sorted = infer_sorts(&e, &s, Some(&order)).unwrap();
        assert_eq!(sorted.order_names(), vec!["k", "i", "j"]);
        let again = infer_sorts(&sorted.root.to_ast(&sorted.universe), &s, Some(&order)).unwrap();
        assert_eq!(again.root, sorted.root);
        assert_eq!(again.universe, sorted.universe);
    }

    #[test]
    fn problem_extraction() {
        let mut b: Bindings<i64> = BTreeMap::new();
        let t = CooTensor::new(&Integer, vec![2, 2], vec![(vec![0, 1], 1)]).unwrap();
        b.insert("A".into(), Bound::new(t.clone(), TensorFormat::Dcsr));
        b.insert("B".into(), Bound::new(t, TensorFormat::Dcsr));
        let sorted = compile("sum(j, A(i,j)*B(j,k))", &b, None).unwrap();
        let p = to_problem(&Integer, &sorted, &b).unwrap().unwrap();
        assert_eq!(p.contracted.len(), 1);
        let shadow = compile("sum(j, A(i,j)) * B(i,j)", &b, None).unwrap();
        assert!(to_problem(&Integer, &shadow, &b).unwrap().is_none());
        let plus = compile("A(i,j) + B(i,j)", &b, None).unwrap();
        assert!(to_problem(&Integer, &plus, &b).unwrap().is_none());
    }

    #[test]
    fn expand_distributes() {
        let s = sigs(&[("A", &[2]), ("B", &[2]), ("C", &[2])]);
        let sorted = infer_sorts(&parse("sum(i, (A(i) + B(i)) * C(i))").unwrap(), &s, None).unwrap();
        let terms = sorted.root.expand_sums();
        assert_eq!(terms.len(), 2);
        assert!(terms.iter().all(|t| !t.has_add() && t.shape.is_empty()));
    }

    #[test]
    fn presets_resolve() {
        for p in PRESETS {
            let ast = parse(p.expr).unwrap();
            let names: Vec<String> = ast.variables();
            let want: Vec<String> = p.vars.iter().map(|(n, _)| n.to_string()).collect();
            assert_eq!(names, want, "{}", p.name);
        }
        assert!(preset("nope").is_err());
    }
}
