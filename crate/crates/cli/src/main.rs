use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use etch_core::codegen::{emit_c, lower, run_prog_with_budget, CSemiring};
use etch_core::combinators::{eval_nested, measure_nested, StreamCtx};
use etch_core::expr::{self, infer_sorts, interpret, interpret_plan_counted, parse, signatures, Ast, AstKind, Bindings, Bound};
use etch_core::formats::{load_frostt_coo, read_matrix_market, write_frostt, CooTensor, TensorFormat};
use etch_core::stream::{Budget, OpCounter};
use etch_core::{Arithmetic, Boolean, ExprError, FormatError, Integer, MinPlus, Semiring, DEFAULT_STATE_BUDGET};

#[derive(Parser)]
#[command(name = "etchc", version, about = "Evaluate and compile tensor contractions over semirings")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate an expression, or emit its C kernel.
    Eval(EvalArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// Expression, e.g. "sum(j, A(i,j) * B(j,k))".
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    expr: Option<String>,
    /// A named kernel: mmul1, mmul2, ttv, ttm, mttkrp or inner3.
    #[arg(long)]
    preset: Option<String>,
    /// NAME=PATH:FORMAT[:i,j,..]; .mtx is MatrixMarket, anything else FROSTT.
    #[arg(long = "bind", value_name = "NAME=PATH:FORMAT[:INDICES]")]
    binds: Vec<String>,
    #[arg(long, value_enum, default_value_t = SemiringName::F64)]
    semiring: SemiringName,
    /// Global index order, comma separated; defaults to order of first mention.
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = Backend::Interpret)]
    backend: Backend,
    /// Output file; standard output when absent.
    #[arg(short = 'o', long)]
    out: Option<PathBuf>,
    /// Print size and operation counts to standard error.
    #[arg(long)]
    metrics: bool,
    /// Transition budget for stream evaluation and kernel loop iterations.
    #[arg(long, env = "ETCH_STATE_BUDGET")]
    budget: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SemiringName {
    F64,
    Int,
    Bool,
    Minplus,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Interpret,
    Prog,
    EmitC,
}

/// A failure and its exit status: 1 for expressions and configuration,
/// 2 for files.
enum Failure {
    Input(String),
    Io(String),
}

impl From<ExprError> for Failure {
    fn from(e: ExprError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let Cmd::Eval(args) = Cli::parse().cmd;
    match eval(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn eval(args: &EvalArgs) -> Result<(), Failure> {
    let (text, mut order) = match (&args.expr, &args.preset) {
        (Some(e), _) => (e.clone(), None),
        (None, Some(p)) => {
            let p = expr::preset(p)?;
            (p.expr.to_string(), Some(p.order_names()))
        }
        (None, None) => unreachable!("clap requires one of --expr and --preset"),
    };
    if args.order.is_some() {
        order.clone_from(&args.order);
    }
    match args.semiring {
        SemiringName::F64 => run(Arithmetic, args, &text, order.as_deref()),
        SemiringName::Int => run(Integer, args, &text, order.as_deref()),
        SemiringName::Bool => run(Boolean, args, &text, order.as_deref()),
        SemiringName::Minplus => run(MinPlus::<f64>::default(), args, &text, order.as_deref()),
    }
}

/// Points at the offending column of a syntax error.
fn syntax_diagnostic(text: &str, e: &ExprError) -> String {
    match e {
        ExprError::Syntax { pos, .. } => format!("{e}\n  {text}\n  {}^", " ".repeat(*pos)),
        _ => e.to_string(),
    }
}

struct BindSpec {
    name: String,
    path: PathBuf,
    format: TensorFormat,
    indices: Option<Vec<String>>,
}

fn parse_bind(spec: &str) -> Result<BindSpec, Failure> {
    let bad = |why: &str| Failure::Input(format!("bad binding `{spec}`: {why}"));
    let (name, rest) = spec.split_once('=').ok_or_else(|| bad("expected NAME=PATH:FORMAT[:INDICES]"))?;
    let parts: Vec<&str> = rest.split(':').collect();
    let n = parts.len();
    let (path, format, indices) = if n >= 2 && parts[n - 1].parse::<TensorFormat>().is_ok() {
        (parts[..n - 1].join(":"), parts[n - 1], None)
    } else if n >= 3 && parts[n - 2].parse::<TensorFormat>().is_ok() {
        let idx: Vec<String> = parts[n - 1].split(',').map(|s| s.trim().to_string()).collect();
        (parts[..n - 2].join(":"), parts[n - 2], Some(idx))
    } else {
        return Err(bad("expected a format (dcsr, csr or dense) after the path"));
    };
    if name.is_empty() || path.is_empty() {
        return Err(bad("empty name or path"));
    }
    Ok(BindSpec {
        name: name.to_string(),
        path: PathBuf::from(path),
        format: format.parse().map_err(|e: String| bad(&e))?,
        indices,
    })
}

/// Index names of the first use of `name` in the expression.
fn first_use(ast: &Ast, name: &str) -> Option<Vec<String>> {
    match &ast.kind {
        AstKind::Var { name: n, indices } => (n == name).then(|| indices.clone()),
        AstKind::Mul(a, b) | AstKind::Add(a, b) => first_use(a, name).or_else(|| first_use(b, name)),
        AstKind::Sum { body, .. } => first_use(body, name),
    }
}

fn load<S: Semiring>(s: &S, spec: &BindSpec, rank: usize) -> Result<CooTensor<S::Elem>, Failure> {
    let path = &spec.path;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mtx")) {
        let file = File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let coo = read_matrix_market(BufReader::new(file), path, s)?;
        if rank != 2 {
            return Err(Failure::Input(format!(
                "`{}` is a matrix but is used with {rank} indices",
                spec.name
            )));
        }
        Ok(coo)
    } else {
        Ok(load_frostt_coo(path, rank, None, s)?)
    }
}

fn is_frostt(p: &Path) -> bool {
    !p.extension().is_some_and(|e| e.eq_ignore_ascii_case("mtx"))
}

fn bindings<S: Semiring>(s: &S, args: &EvalArgs, ast: &Ast) -> Result<Bindings<S::Elem>, Failure> {
    let mut specs = BTreeMap::new();
    for b in &args.binds {
        let spec = parse_bind(b)?;
        if specs.contains_key(&spec.name) {
            return Err(Failure::Input(format!("`{}` is bound twice", spec.name)));
        }
        specs.insert(spec.name.clone(), spec);
    }
    for v in ast.variables() {
        if !specs.contains_key(&v) {
            return Err(ExprError::UnboundVariable(v).into());
        }
    }
    let mut loaded = Vec::new();
    for (name, spec) in &specs {
        let Some(used) = first_use(ast, name) else { continue };
        let names = spec.indices.clone().unwrap_or(used);
        let coo = load(s, spec, names.len())?;
        loaded.push((spec, names, coo));
    }
    // FROSTT files carry no shape; widen each mode to the largest size any
    // binding gives its index.
    let mut size: BTreeMap<String, usize> = BTreeMap::new();
    for (_, names, coo) in &loaded {
        for (n, &d) in names.iter().zip(coo.dims()) {
            let e = size.entry(n.clone()).or_insert(0);
            *e = (*e).max(d);
        }
    }
    let mut out = Bindings::new();
    for (spec, names, coo) in loaded {
        let coo = if is_frostt(&spec.path) {
            let dims = names.iter().map(|n| size[n]).collect();
            CooTensor::new(s, dims, coo.entries().to_vec())?
        } else {
            coo
        };
        let mut b = Bound::new(coo, spec.format);
        b.indices = spec.indices.clone();
        out.insert(spec.name.clone(), b);
    }
    Ok(out)
}

fn output(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
    let io_fail = |e: io::Error| match path {
        Some(p) => Failure::Io(format!("{}: {e}", p.display())),
        None => Failure::Io(e.to_string()),
    };
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(io_fail)?);
            write(&mut w).map_err(io_fail)?;
            w.flush().map_err(io_fail)
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w).map_err(io_fail)
        }
    }
}

fn run<S: Semiring + Clone>(s: S, args: &EvalArgs, text: &str, order: Option<&[String]>) -> Result<(), Failure> {
    let ast = parse(text).map_err(|e| Failure::Input(syntax_diagnostic(text, &e)))?;
    let b = bindings(&s, args, &ast)?;
    let mut sorted = infer_sorts(&ast, &signatures(&b), order)?;
    sorted.source = text.trim().to_string();
    let budget = args.budget.unwrap_or(DEFAULT_STATE_BUDGET);
    let formats: BTreeMap<String, TensorFormat> = b.iter().map(|(n, v)| (n.clone(), v.format)).collect();
    let input = |e: &dyn std::fmt::Display| Failure::Input(e.to_string());

    if args.metrics && args.backend != Backend::EmitC {
        let ctx = StreamCtx::new(s.clone(), true, budget);
        let counter = OpCounter::new();
        let plan = interpret_plan_counted(&ctx, &sorted, &b, Some(&counter))?;
        let m = measure_nested(plan.root, &mut Budget::new(budget)).map_err(|e| input(&e))?;
        eprintln!(
            "size0={} size={} advances={} skips={}",
            m.size0,
            m.size,
            counter.advances(),
            counter.skips()
        );
    }

    match args.backend {
        Backend::Interpret => {
            let ctx = StreamCtx::new(s.clone(), true, budget);
            let q = interpret(&ctx, &sorted, &b)?;
            let v = eval_nested(&ctx, &sorted.universe, q).map_err(|e| input(&e))?;
            output(args.out.as_deref(), |w| write_frostt(w, &s, &v))
        }
        Backend::Prog => {
            let k = lower(&sorted, &formats).map_err(|e| input(&e))?;
            let run = run_prog_with_budget(&k, &b, &s, budget).map_err(|e| input(&e))?;
            if args.metrics {
                let st = &run.stats;
                eprintln!(
                    "stores={} iterations={} max_writes_between_stores={} fused={}",
                    st.stores,
                    st.iterations,
                    st.max_writes_between_stores,
                    st.fused()
                );
            }
            output(args.out.as_deref(), |w| write_frostt(w, &s, &run.output))
        }
        Backend::EmitC => {
            let cs = CSemiring::of(&s).map_err(|e| input(&e))?;
            let k = lower(&sorted, &formats).map_err(|e| input(&e))?;
            let name = args.preset.as_deref().unwrap_or("kernel");
            let src = emit_c(&k, name, cs);
            output(args.out.as_deref(), |w| w.write_all(src.as_bytes()))
        }
    }
}
