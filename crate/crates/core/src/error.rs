use celm_signal::SignalError;
use celm_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("unknown {kind} `{name}`; registered: {available}")]
    UnknownStrategy { kind: &'static str, name: String, available: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("encoder `{0}` has no summary slot for cls aggregation")]
    NoSummarySlot(String),
    #[error("width mismatch in {what}: expected {expected}, got {got}")]
    WidthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("sequence of {len} positions exceeds the limit of {max} ({what})")]
    ContextOverflow { what: &'static str, len: usize, max: usize },
    #[error("query count {queries} must be smaller than the sequence length {len}")]
    TooManyQueries { queries: usize, len: usize },
    #[error("unknown-token rate {rate:.3} exceeds {limit:.3} in {what}")]
    UnknownTokens { what: &'static str, rate: f64, limit: f64 },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (max grad norm {max_grad_norm:e})")]
    NonFinite { epoch: usize, batch: usize, max_grad_norm: f64 },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
