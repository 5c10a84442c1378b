use thiserror::Error;

/// Errors raised anywhere in the certification pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown identifier `{name}` at line {line}, column {column}")]
    UnknownIdentifier {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("evaluation error: division by zero in `{subtree}`")]
    DivisionByZero { subtree: String },

    #[error("point is infeasible: constraint {index} has value {value:e}")]
    Infeasible { index: usize, value: f64 },

    #[error("vector is not normal to the feasible set at the reference point (violation {violation:e})")]
    NotNormal { violation: f64 },

    #[error("no Lagrange multiplier exists: v is not in f(x,p) + N_C(p)(x)")]
    NoMultiplier,

    #[error("multiplier set is unbounded (MFCQ fails); recession direction {direction:?}")]
    UnboundedMultipliers { direction: Vec<f64> },

    #[error("too many {what}: {count} exceeds the enumeration cap of {cap}")]
    TooLarge {
        what: &'static str,
        count: usize,
        cap: usize,
    },

    #[error("constraint gradients are linearly dependent")]
    DependentRows,

    #[error("feasible set C(p) is empty")]
    EmptyFeasibleSet,

    #[error("model is not supported by this check: {0}")]
    Unsupported(String),

    #[error("no feasible graph samples found: {0}")]
    NoSamples(String),

    #[error("no single-valued localization at this radius: {0}")]
    NotSingleValued(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
