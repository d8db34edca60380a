use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("lexicon line {line}: {detail}")]
    Lexicon { line: usize, detail: String },
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("span {start}..{end} is outside a {len}-byte report or splits a character")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("patient split needs at least 3 patients, got {0}")]
    TooFewPatients(usize),
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    BadRatios([f64; 3]),
    #[error("corpus line {line}: {detail}")]
    Corpus { line: usize, detail: String },
    #[error("bad timestamp `{0}`")]
    Timestamp(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for ReportError {
    fn from(e: std::io::Error) -> Self {
        ReportError::Io(e.to_string())
    }
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;
