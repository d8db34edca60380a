use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("EDF header truncated: need {needed} bytes, have {have}")]
    TruncatedHeader { needed: usize, have: usize },
    #[error("EDF data size mismatch: {records} records × {record_bytes} bytes != {remaining} remaining bytes")]
    DataSizeMismatch { records: usize, record_bytes: usize, remaining: usize },
    #[error("EDF signal {signal} (`{label}`) has zero digital range")]
    ZeroDigitalRange { signal: usize, label: String },
    #[error("EDF field `{field}` is malformed: {value:?}")]
    BadField { field: &'static str, value: String },
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("channels disagree on sample rate: {0:?}")]
    MixedSampleRates(Vec<f64>),
    #[error("sample rate {rate_hz} Hz is too low for {what} (Nyquist {nyquist} Hz)")]
    SampleRateTooLow { rate_hz: f64, nyquist: f64, what: String },
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("recording lasts {duration_s} s, shorter than one {epoch_s} s epoch")]
    TooShort { duration_s: f64, epoch_s: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sidecar: {0}")]
    Sidecar(String),
    #[error(transparent)]
    Tensor(#[from] celm_tensor::TensorError),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for SignalError {
    fn from(e: std::io::Error) -> Self {
        SignalError::Io(e.to_string())
    }
}

pub type Result<T, E = SignalError> = std::result::Result<T, E>;
