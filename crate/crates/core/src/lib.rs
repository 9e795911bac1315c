//! Indexed streams over semirings: a small tensor-contraction compiler.

pub mod codegen;
pub mod combinators;
pub mod error;
pub mod expr;
pub mod formats;
pub mod oracle;
pub mod semiring;
pub mod stream;

pub use combinators::{IndexId, IndexUniverse, Nested, NestedStream, StreamCtx};
pub use error::{BudgetExceeded, CodegenError, ExprError, FormatError, OracleError, StreamError};
pub use formats::{CompressedTensor, CooTensor, DenseTensor, TensorFormat};
pub use oracle::SparseVariable;
pub use semiring::{Arithmetic, Boolean, Integer, MinPlus, Semiring, Tropical};
pub use stream::{Budget, IndexedStream, DEFAULT_STATE_BUDGET};
