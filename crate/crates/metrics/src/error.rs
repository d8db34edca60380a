use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("aggregation needs at least one sample")]
    Empty,
    #[error("record line {line}: {detail}")]
    Record { line: usize, detail: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for MetricsError {
    fn from(e: std::io::Error) -> Self {
        MetricsError::Io(e.to_string())
    }
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;
