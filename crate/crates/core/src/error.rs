use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degree sequence is empty")]
    EmptySequence,

    #[error("degree sequence is unbalanced: in-degrees sum to {in_sum}, out-degrees sum to {out_sum}")]
    DegreeImbalance { in_sum: usize, out_sum: usize },

    #[error("repeated DCM found no simple graph within {cap} attempts")]
    AttemptCapExceeded { cap: usize },

    #[error("invalid inhomogeneous digraph spec: {0}")]
    InvalidIrdSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state dimension {found} does not match graph size {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vertex {vertex} is missing attribute `{name}` required by the model")]
    MissingAttribute { vertex: usize, name: String },

    #[error("non-finite value at vertex {vertex} in step {step}")]
    NonFiniteVertex { vertex: usize, step: usize },

    #[error("non-finite value at tree node {label}")]
    NonFiniteNode { label: String },

    #[error("non-finite value in sample pool at iteration {iteration}")]
    NonFinitePool { iteration: usize },

    #[error("tree exceeds the node cap of {cap}")]
    TreeTooLarge { cap: usize },

    #[error("estimated contraction constant {c_hat:.6} (stderr {stderr:.2e}) is not below 1; pass an override to iterate anyway")]
    NotContracting { c_hat: f64, stderr: f64 },

    #[error("distance trace stopped decreasing after {} iterations", trace.len())]
    NoContraction { trace: Vec<f64> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
