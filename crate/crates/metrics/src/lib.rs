//! Text generation metrics over a shared lowercase word tokenizer.

pub mod aggregate;
pub mod error;
pub mod scores;
pub mod tokenize;

pub use aggregate::{
    aggregate, aggregate_by_group, aggregate_table, read_generations, sample_table, score_pair, Aggregate,
    GenerationRecord, SampleScores, METRIC_NAMES,
};
pub use error::{MetricsError, Result};
pub use scores::{
    bleu, bleu_tokens, meteor_lite, meteor_tokens, rouge_l, rouge_l_tokens, rouge_lsum, rouge_n, rouge_n_tokens, stem,
    MeteorDetail, Prf, DEFAULT_EPSILON,
};
pub use tokenize::{split_sentences, tokenize};
