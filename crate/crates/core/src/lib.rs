//! EEG-conditioned report generation: frozen EEG encoders, epoch-level
//! tokenization, pluggable alignment projectors and a frozen decoder that
//! consumes the fused sequence.

pub mod decoder;
pub mod encoder;
mod error;
pub mod fused;
pub mod generate;
pub mod nn;
pub mod optim;
pub mod projector;
pub mod tokens;
pub mod train;
pub mod vocab;

pub use decoder::{pretrain_decoder, DecoderConfig, PretrainConfig, ToyDecoder};
pub use encoder::{check_compatible, EegEncoder, EncoderRegistry, EncoderSpec, EpochEncoding, ToyEncoder};
pub use error::{CoreError, Result};
pub use fused::{build_fused, encode_text, nll_loss, FusedSequence};
pub use generate::{generate, generate_ids, DecodeMode};
pub use optim::{clip_grad_norm, grad_norm, AdamW, LinearSchedule};
pub use projector::{
    align, AlignedEmbedding, LinearProjector, PerceiverProjector, Projector, ProjectorConfig, ProjectorRegistry,
    ScaProjector, SccProjector, EEG_END, EEG_START, SESSION_SEP,
};
pub use tokens::{
    aggregate_epoch_tokens, encode_mini_windows, load_epoch_tokens, save_epoch_tokens, tokenize_recording,
    AggregationRegistry, Aggregator, ClsAggregator, CompressionReport, EpochTokens, MeanAggregator, MiniTokens,
    TokenStandardizer,
};
pub use train::{
    curves_csv, evaluate, perplexity, sample_loss, train, zeroed, CurveRow, EvalStats, Sample, TrainConfig,
    TrainOutcome,
};
pub use vocab::{Vocab, DEFAULT_VOCAB_CAP};
