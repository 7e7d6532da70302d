use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("self-loop at node {node}")]
    SelfLoop { node: usize },

    #[error("negative coupling {value} on edge ({i}, {j})")]
    NegativeCoupling { i: usize, j: usize, value: f64 },

    #[error("negative field {value} at node {node}")]
    NegativeField { node: usize, value: f64 },

    #[error("field has mixed signs (node {positive} positive, node {negative} negative)")]
    MixedSignField { positive: usize, negative: usize },

    #[error("duplicate edge ({i}, {j})")]
    DuplicateEdge { i: usize, j: usize },

    #[error("node id {node} out of range for n = {n}")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("non-finite value {value} for {what}")]
    NonFinite { what: String, value: f64 },

    #[error("model must have at least one node")]
    EmptyModel,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("size guard exceeded: {what} = {value} > {limit}")]
    SizeGuard {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("polytope violation {violation:e} exceeds tolerance {tolerance:e}")]
    PolytopeViolation { violation: f64, tolerance: f64 },

    #[error("ellipsoid method found no feasible point in {steps} steps")]
    NoFeasiblePoint { steps: usize },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
