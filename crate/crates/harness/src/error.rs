use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] celm_core::CoreError),
    #[error(transparent)]
    Signal(#[from] celm_signal::SignalError),
    #[error(transparent)]
    Report(#[from] celm_report::ReportError),
    #[error(transparent)]
    Metrics(#[from] celm_metrics::MetricsError),
    #[error(transparent)]
    Tensor(#[from] celm_tensor::TensorError),
}

impl HarnessError {
    /// Short category used on the command line's error line.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config(_) | HarnessError::Parse { .. } => "config",
            HarnessError::Corpus(_) => "corpus",
            HarnessError::Io(_) => "io",
            HarnessError::Json(_) => "format",
            HarnessError::Core(_) => "model",
            HarnessError::Signal(_) => "signal",
            HarnessError::Report(_) => "report",
            HarnessError::Metrics(_) => "metrics",
            HarnessError::Tensor(_) => "tensor",
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
