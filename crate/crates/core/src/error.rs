use thiserror::Error;

/// Errors raised by tensor arithmetic and the gradient tape.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("data length {len} does not match shape {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("row {0} has an empty neighborhood mask")]
    DegenerateNeighborhood(usize),
    #[error("backward requires a 1x1 output, got {0}x{1}")]
    NonScalarOutput(usize, usize),
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("{0}")]
    Contract(String),
}

/// Top-level error for the model, pipeline and file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("modality set incomplete: expected {expected} latents, got {got}")]
    IncompleteSample { expected: usize, got: usize },
    #[error("dimension {0} has fewer than two activated features")]
    DegenerateDimension(usize),
    #[error("cohort graph needs at least two patients, got {0}")]
    DegenerateCohort(usize),
    #[error("AUC is undefined when only one class is present")]
    SingleClass,
    #[error("stratification failed: {0}")]
    Stratification(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
