//! Clinical EEG report structuring: header detection, verbatim section
//! extraction, canonical normalization, session matching and patient splits.

pub mod corpus;
pub mod error;
pub mod lexicon;
pub mod matching;
pub mod sections;
pub mod split;

pub use corpus::{read_reports, read_structured, split_manifest, write_reports, write_structured, ReportRecord};
pub use error::{ReportError, Result};
pub use lexicon::{Category, Lexicon, LexiconRule, Partition, DEFAULT_LEXICON};
pub use matching::{
    format_timestamp, match_report_to_sessions, modeling_pairs, parse_timestamp, BenchmarkPair, MatchConfig,
    PairStatus, ReportMeta, SessionInfo,
};
pub use sections::{
    coverage, detect_sections, extract_section, normalize_sections, structure_report, CopyExtractor, Region,
    SectionExtractor, SectionSpan, StructuredReport, DUPLICATE_SEPARATOR,
};
pub use split::{patient_split, split_counts, Split, SplitTag};
