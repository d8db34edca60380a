//! Configuration, synthetic corpora, the experiment runner and the command
//! line that ties preprocessing, structuring, training, generation and
//! scoring together.

pub mod cli;
pub mod config;
pub mod corpus;
mod error;
pub mod experiment;
pub mod manifest;
pub mod model;
pub mod synth;

pub use config::Config;
pub use corpus::{load_corpus, write_synthetic, PairRecord, PairedCorpus, TokenizerConfig};
pub use error::{HarnessError, Result};
pub use experiment::{prepare, run_ablation, run_variant, AblationReport, ExperimentConfig, Task, VariantResult};
pub use manifest::{sha256_hex, Manifest};
pub use synth::{default_catalog, synth_corpus, EventSpec, SyntheticCorpus, SyntheticSpec};
