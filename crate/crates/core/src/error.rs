use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse `{text}` as a {carrier} value")]
pub struct ParseValueError {
    pub text: String,
    pub carrier: String,
}

impl ParseValueError {
    pub fn new(text: &str, carrier: &str) -> Self {
        ParseValueError {
            text: text.to_string(),
            carrier: carrier.to_string(),
        }
    }
}

/// Raised when a stream does not reach its terminal state in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("state budget of {budget} transitions exceeded; the stream may not be finite")]
pub struct BudgetExceeded {
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StreamError {
    #[error(transparent)]
    BudgetExceeded(#[from] BudgetExceeded),
    #[error("prefix {prefix:?} is not a prefix of the stream's indices {indices:?}")]
    PrefixMismatch {
        prefix: Vec<String>,
        indices: Vec<String>,
    },
    #[error("index `{0}` is not a level of this stream")]
    UnknownLevel(String),
    #[error("index `{0}` is already a level of this stream")]
    LevelPresent(String),
    #[error("operands have different index sequences: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: Vec<String>,
        right: Vec<String>,
    },
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed tensor: {0}")]
    Malformed(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: coordinate {coord} out of bounds for dimension {dim} of size {size}")]
    Bounds {
        path: PathBuf,
        line: usize,
        coord: usize,
        dim: usize,
        size: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FormatError {
    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("variables have different shapes: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<String>, right: Vec<String> },
    #[error("index `{0}` is not in the variable's shape")]
    MissingIndex(String),
    #[error("index `{0}` is already in the variable's shape")]
    IndexPresent(String),
    #[error("indexing set has {0} points, above the oracle cap")]
    TooLarge(u128),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("MissingIndex({index}): cannot sum over `{index}`, which does not occur in the operand (indices: {available:?})")]
    MissingIndex {
        index: String,
        available: Vec<String>,
    },
    #[error("variable `{var}` is used with {found} indices but is bound to a rank-{expected} tensor")]
    RankMismatch {
        var: String,
        expected: usize,
        found: usize,
    },
    #[error("variable `{var}` repeats index `{index}`")]
    RepeatedIndex { var: String, index: String },
    #[error("index `{index}` has conflicting sizes {first} and {second}")]
    DimensionMismatch {
        index: String,
        first: usize,
        second: usize,
    },
    #[error("index `{0}` is missing from the index order")]
    NotInOrder(String),
    #[error("index order lists `{0}` twice")]
    DuplicateInOrder(String),
    #[error("index `{0}` has no known size")]
    UnknownSize(String),
    #[error("variable `{var}` is bound with indices ({}) but used with ({})", declared.join(","), used.join(","))]
    BindingIndices {
        var: String,
        declared: Vec<String>,
        used: Vec<String>,
    },
    #[error("binding for `{var}` is invalid: {message}")]
    Binding { var: String, message: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("unsupported format `{0}`")]
    UnsupportedFormat(String),
    #[error("runtime fault: {0}")]
    RuntimeFault(String),
    #[error("no input bound for array `{0}`")]
    MissingInput(String),
}
