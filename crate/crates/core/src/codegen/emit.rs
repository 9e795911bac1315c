//! C99 emission. Values are `double`; indices and positions are `int`.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::error::CodegenError;
use crate::semiring::Semiring;

use super::lower::Kernel;
use super::prog::{Expr, Stmt, Ty, VarRole};

/// How semiring operations are spelled in C.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CSemiring {
    /// `+`, `*`, `0.0`, `1.0`; also used for the integer semiring.
    Arithmetic,
    /// Values are `0.0` or `1.0`.
    Boolean,
    /// `fmin`, `+`, `INFINITY`, `0.0`.
    MinPlus,
}

impl CSemiring {
    pub fn of<S: Semiring>(s: &S) -> Result<Self, CodegenError> {
        match s.name() {
            "f64" | "int" => Ok(CSemiring::Arithmetic),
            "bool" => Ok(CSemiring::Boolean),
            "minplus" => Ok(CSemiring::MinPlus),
            other => Err(CodegenError::UnsupportedFormat(format!("semiring `{other}` has no C spelling"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            CSemiring::Arithmetic => "arithmetic (+, *)",
            CSemiring::Boolean => "boolean (or, and)",
            CSemiring::MinPlus => "min-plus (fmin, +)",
        }
    }

    fn zero(self) -> &'static str {
        match self {
            CSemiring::MinPlus => "INFINITY",
            _ => "0.0",
        }
    }

    fn one(self) -> &'static str {
        match self {
            CSemiring::MinPlus => "0.0",
            _ => "1.0",
        }
    }
}

// binding strength, higher binds tighter
const UNARY: u8 = 90;
const MUL: u8 = 80;
const ADD: u8 = 70;
const REL: u8 = 60;
const EQ: u8 = 50;
const AND: u8 = 40;
const OR: u8 = 30;

struct Emitter<'a> {
    k: &'a Kernel,
    cs: CSemiring,
    out: String,
}

/// Emits one self-contained C99 function. The caller fills `out` with the
/// semiring zero before the call.
pub fn emit_c(kernel: &Kernel, name: &str, cs: CSemiring) -> String {
    let mut e = Emitter {
        k: kernel,
        cs,
        out: String::new(),
    };
    e.header(name);
    e.out
}

impl Emitter<'_> {
    fn header(&mut self, name: &str) {
        let k = self.k;
        let order: Vec<&str> = k.universe.names().iter().map(String::as_str).collect();
        let formats: Vec<String> = k.formats().iter().map(|(n, f)| format!("{n}={f}")).collect();
        let free: Vec<String> = k
            .free
            .iter()
            .zip(&k.out_dims)
            .map(|(&i, d)| format!("{}:{d}", k.universe.name(i)))
            .collect();
        let out_desc = if free.is_empty() {
            "scalar out[0]".to_string()
        } else {
            format!("dense row-major over {}", free.join(" x "))
        };
        let _ = writeln!(self.out, "/* expr:     {}", k.source);
        let _ = writeln!(self.out, " * order:    {}", order.join(", "));
        let _ = writeln!(self.out, " * formats:  {}", formats.join(", "));
        let _ = writeln!(self.out, " * semiring: {}", self.cs.name());
        let _ = writeln!(self.out, " * out:      {out_desc}, zero-filled by the caller */");
        if self.cs == CSemiring::MinPlus {
            self.out.push_str("#include <math.h>\n");
        }
        self.out.push('\n');

        let mut params = Vec::new();
        for st in &k.storages {
            for (p, c) in st.pos.iter().zip(&st.crd) {
                if let (Some(p), Some(c)) = (p, c) {
                    params.push(format!("const int* {}", k.symbols.arrays[*p].name));
                    params.push(format!("const int* {}", k.symbols.arrays[*c].name));
                }
            }
            params.push(format!("const double* {}", k.symbols.arrays[st.vals].name));
        }
        params.push("double* out".to_string());
        let _ = writeln!(self.out, "void {name}({}) {{", params.join(", "));
        let mut used = BTreeSet::new();
        k.body.vars_used(&mut used);
        let ints: Vec<&str> = k
            .symbols
            .vars
            .iter()
            .enumerate()
            .filter(|(id, v)| v.ty == Ty::Int && used.contains(id))
            .map(|(_, v)| v)
            .map(|v| v.name.as_str())
            .collect();
        for chunk in ints.chunks(6) {
            let decl: Vec<String> = chunk.iter().map(|n| format!("{n} = 0")).collect();
            let _ = writeln!(self.out, "    int {};", decl.join(", "));
        }
        let vals: Vec<&str> = k
            .symbols
            .vars
            .iter()
            .enumerate()
            .filter(|(id, v)| v.ty == Ty::Val && v.role != VarRole::Temp && used.contains(id))
            .map(|(_, v)| v)
            .map(|v| v.name.as_str())
            .collect();
        if !vals.is_empty() {
            let _ = writeln!(self.out, "    double {};", vals.join(", "));
        }
        self.stmt(&k.body, 1);
        self.out.push_str("}\n");
    }

    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn var(&self, v: usize) -> &str {
        &self.k.symbols.vars[v].name
    }

    fn stmt(&mut self, s: &Stmt, d: usize) {
        match s {
            Stmt::Skip => {}
            Stmt::Seq(v) => v.iter().for_each(|x| self.stmt(x, d)),
            Stmt::Assign(v, e) | Stmt::Reset(v, e) => {
                let text = match e {
                    Expr::IntAdd(a, b) if **a == Expr::Var(*v) && **b == Expr::Int(1) => {
                        format!("{}++;", self.var(*v))
                    }
                    Expr::SemiAdd(a, b) if **a == Expr::Var(*v) && self.cs == CSemiring::Arithmetic => {
                        format!("{} += {};", self.var(*v), self.expr(b, 0))
                    }
                    _ => format!("{} = {};", self.var(*v), self.expr(e, 0)),
                };
                self.line(d, &text);
            }
            Stmt::Decl(v, e) => {
                let text = format!("double {} = {};", self.var(*v), self.expr(e, 0));
                self.line(d, &text);
            }
            Stmt::If(c, a, b) => {
                let text = format!("if ({}) {{", self.expr(c, 0));
                self.line(d, &text);
                self.stmt(a, d + 1);
                self.line(d, "} else {");
                self.stmt(b, d + 1);
                self.line(d, "}");
            }
            Stmt::If1(c, a) => {
                let text = format!("if ({}) {{", self.expr(c, 0));
                self.line(d, &text);
                self.stmt(a, d + 1);
                self.line(d, "}");
            }
            Stmt::While(c, body) => {
                let text = format!("while ({}) {{", self.expr(c, 0));
                self.line(d, &text);
                self.stmt(body, d + 1);
                self.line(d, "}");
            }
            Stmt::Store { index, value } => {
                let slot = format!("out[{}]", self.expr(index, 0));
                let text = match self.cs {
                    CSemiring::Arithmetic => format!("{slot} += {};", self.expr(value, 0)),
                    _ => format!("{slot} = {};", self.semi_add(&slot, value)),
                };
                self.line(d, &text);
            }
        }
    }

    fn semi_add(&self, slot: &str, value: &Expr) -> String {
        match self.cs {
            CSemiring::Arithmetic => format!("{slot} + {}", self.expr(value, ADD + 1)),
            CSemiring::Boolean => format!("(double)({slot} != 0.0 || {} != 0.0)", self.expr(value, REL + 1)),
            CSemiring::MinPlus => format!("fmin({slot}, {})", self.expr(value, 0)),
        }
    }

    fn bin(&self, a: &Expr, op: &str, b: &Expr, prec: u8, min: u8) -> String {
        let text = format!("{} {op} {}", self.expr(a, prec), self.expr(b, prec + 1));
        if prec < min {
            format!("({text})")
        } else {
            text
        }
    }

    /// Prints `e`, parenthesized when it binds looser than `min`.
    fn expr(&self, e: &Expr, min: u8) -> String {
        match e {
            Expr::Int(i) => i.to_string(),
            Expr::Bool(b) => (if *b { "1" } else { "0" }).to_string(),
            Expr::Zero => self.cs.zero().to_string(),
            Expr::One => self.cs.one().to_string(),
            Expr::Var(v) => self.var(*v).to_string(),
            Expr::Load(a, i) => format!("{}[{}]", self.k.symbols.arrays[*a].name, self.expr(i, 0)),
            Expr::Lt(a, b) => self.bin(a, "<", b, REL, min),
            Expr::Eq(a, b) => self.bin(a, "==", b, EQ, min),
            Expr::Min(a, b) => {
                let (x, y) = (self.expr(a, REL + 1), self.expr(b, REL + 1));
                format!("({x} < {y} ? {x} : {y})")
            }
            Expr::Max(a, b) => {
                let (x, y) = (self.expr(a, REL + 1), self.expr(b, REL + 1));
                format!("({x} < {y} ? {y} : {x})")
            }
            Expr::And(a, b) => self.bin(a, "&&", b, AND, min),
            Expr::Or(a, b) => {
                // keep `&&` under `||` parenthesized
                let text = format!("{} || {}", self.expr(a, AND + 1), self.expr(b, AND + 1));
                if OR < min {
                    format!("({text})")
                } else {
                    text
                }
            }
            Expr::Not(a) => format!("!{}", self.expr(a, UNARY)),
            Expr::IntAdd(a, b) => self.bin(a, "+", b, ADD, min),
            Expr::IntMul(a, b) => self.bin(a, "*", b, MUL, min),
            Expr::SemiAdd(a, b) => match self.cs {
                CSemiring::Arithmetic => self.bin(a, "+", b, ADD, min),
                CSemiring::Boolean => {
                    format!("(double)({} != 0.0 || {} != 0.0)", self.expr(a, REL + 1), self.expr(b, REL + 1))
                }
                CSemiring::MinPlus => format!("fmin({}, {})", self.expr(a, 0), self.expr(b, 0)),
            },
            Expr::SemiMul(a, b) => match self.cs {
                CSemiring::Arithmetic => self.bin(a, "*", b, MUL, min),
                CSemiring::Boolean => {
                    format!("(double)({} != 0.0 && {} != 0.0)", self.expr(a, REL + 1), self.expr(b, REL + 1))
                }
                CSemiring::MinPlus => self.bin(a, "+", b, ADD, min),
            },
        }
    }
}
