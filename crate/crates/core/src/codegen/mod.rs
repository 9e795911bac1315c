//! Code generation: syntactic streams, lowering to an imperative program,
//! a reference interpreter and C emission.

pub mod emit;
pub mod interp;
pub mod ir;
pub mod lower;
pub mod prog;

pub use emit::{emit_c, CSemiring};
pub use interp::{kernel_inputs, run_on_inputs, run_prog, run_prog_with_budget, KernelInputs, ProgRun, ProgStats};
pub use ir::{ir_contract, ir_mul, ir_of_format, ir_rep, IrValue, Level, LevelKind, StorageSpec};
pub use lower::{lower, Kernel};
pub use prog::{ArrId, Expr, Stmt, Symbols, Ty, VarId, VarRole};
