//! Alignment projectors from epoch tokens to decoder embeddings.

mod linear;
mod perceiver;
mod sca;
mod scc;

use std::collections::BTreeMap;

use celm_tensor::{Graph, ParamStore, Tensor, Var};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::nn::sinusoidal_positions;
use crate::tokens::EpochTokens;

pub use linear::LinearProjector;
pub use perceiver::PerceiverProjector;
pub use sca::ScaProjector;
pub use scc::SccProjector;

pub const EEG_START: &str = "special.eeg_start";
pub const EEG_END: &str = "special.eeg_end";
pub const SESSION_SEP: &str = "special.session_sep";

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorConfig {
    pub variant: String,
    pub heads: usize,
    /// Transformer layers for sca/scc, cross-attention layers for perceiver.
    pub depth: usize,
    pub query_count: usize,
    pub eeg_dim: usize,
    pub llm_dim: usize,
    pub dropout: f64,
    pub max_positions: usize,
}

impl ProjectorConfig {
    /// Full-size hyperparameters, used for parameter accounting.
    pub fn full_size(variant: &str) -> Self {
        let (heads, depth, query_count, dropout) = match variant {
            "perceiver" => (8, 2, 256, 0.1),
            "scc" => (8, 1, 256, 0.0),
            "sca" => (8, 2, 0, 0.0),
            _ => (1, 0, 0, 0.0),
        };
        ProjectorConfig {
            variant: variant.to_string(),
            heads,
            depth,
            query_count,
            eeg_dim: 200,
            llm_dim: 2560,
            dropout,
            max_positions: 2048,
        }
    }

    /// Desk-scale defaults: same encoder width, small decoder width and few queries.
    pub fn desk(variant: &str, llm_dim: usize) -> Self {
        let mut c = Self::full_size(variant);
        c.llm_dim = llm_dim;
        if c.query_count > 0 {
            c.query_count = 8;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.eeg_dim == 0 || self.llm_dim == 0 {
            return Err(CoreError::Config("projector widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.heads == 0 || !self.eeg_dim.is_multiple_of(self.heads) {
            return Err(CoreError::Config(format!("{} heads do not divide width {}", self.heads, self.eeg_dim)));
        }
        Ok(())
    }
}

/// A trainable map from a token sequence to `N′ × D_llm` decoder inputs.
/// Every projector also owns the learned start, end and session-separator
/// rows that frame its output in the decoder input.
pub trait Projector: Send {
    fn variant(&self) -> &str;
    fn config(&self) -> &ProjectorConfig;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Output rows for `n` tokens spread over `sessions` sessions.
    fn output_len(&self, n: usize, sessions: usize) -> Result<usize>;
    fn forward(&self, g: &mut Graph, input: &EpochTokens, rng: &mut dyn RngCore) -> Result<Var>;
    /// Parameters that never reach the output for any input of this variant.
    fn unused_params(&self) -> Vec<&'static str> {
        vec![SESSION_SEP]
    }
}

/// Allocates the three learned framing rows.
pub(crate) fn init_special_rows<R: Rng + ?Sized>(store: &mut ParamStore, llm_dim: usize, rng: &mut R) {
    for name in [EEG_START, EEG_END, SESSION_SEP] {
        store.insert(name, Tensor::randn(&[1, llm_dim], 0.02, rng).with_grad(true));
    }
}

pub(crate) fn check_input(cfg: &ProjectorConfig, input: &EpochTokens) -> Result<()> {
    if input.dim() != cfg.eeg_dim && !input.is_empty() {
        return Err(CoreError::WidthMismatch { what: "projector input", expected: cfg.eeg_dim, got: input.dim() });
    }
    input.validate()
}

/// Token stream with one zero separator row before each session and fixed
/// sinusoidal positions added; returns the stream and separator indices.
pub(crate) fn sequence_with_separators(
    g: &mut Graph,
    cfg: &ProjectorConfig,
    input: &EpochTokens,
) -> Result<(Var, Vec<usize>)> {
    let d = cfg.eeg_dim;
    let n = input.len();
    let starts: Vec<usize> = if input.session_starts.is_empty() { vec![0] } else { input.session_starts.clone() };
    let total = n + starts.len();
    if total > cfg.max_positions {
        return Err(CoreError::ContextOverflow { what: "projector positions", len: total, max: cfg.max_positions });
    }
    let src = input.tokens.data();
    let mut data = Vec::with_capacity(total * d);
    let mut seps = Vec::with_capacity(starts.len());
    for (s, &start) in starts.iter().enumerate() {
        let end = starts.get(s + 1).copied().unwrap_or(n);
        seps.push(data.len() / d);
        data.extend(std::iter::repeat_n(0.0, d));
        data.extend_from_slice(&src[start * d..end * d]);
    }
    let pos = sinusoidal_positions(total, d);
    data.iter_mut().zip(&pos).for_each(|(x, p)| *x += p);
    Ok((g.constant(&[total, d], data)?, seps))
}

/// Adds the learned separator row at `rows` of `y: T × D_llm`.
pub(crate) fn add_separator_rows(g: &mut Graph, store: &ParamStore, y: Var, rows: &[usize]) -> Result<Var> {
    let (t, _) = g.dims(y);
    let mut ind = vec![0.0; t];
    for &r in rows {
        ind[r] = 1.0;
    }
    let ind = g.constant(&[t, 1], ind)?;
    let sep = g.param(store, SESSION_SEP)?;
    let rows = g.matmul(ind, sep)?;
    Ok(g.add(y, rows)?)
}

pub type ProjectorFactory = fn(&ProjectorConfig, u64) -> Result<Box<dyn Projector>>;

/// Name-keyed projector constructors.
pub struct ProjectorRegistry {
    entries: BTreeMap<String, ProjectorFactory>,
}

impl Default for ProjectorRegistry {
    fn default() -> Self {
        let mut r = ProjectorRegistry { entries: BTreeMap::new() };
        r.register("linear", |c, s| Ok(Box::new(LinearProjector::new(c, s)?)));
        r.register("perceiver", |c, s| Ok(Box::new(PerceiverProjector::new(c, s)?)));
        r.register("scc", |c, s| Ok(Box::new(SccProjector::new(c, s)?)));
        r.register("sca", |c, s| Ok(Box::new(ScaProjector::new(c, s)?)));
        r
    }
}

impl ProjectorRegistry {
    pub fn register(&mut self, name: &str, factory: ProjectorFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    /// Builds `cfg.variant` with weights drawn from `seed`.
    pub fn build(&self, cfg: &ProjectorConfig, seed: u64) -> Result<Box<dyn Projector>> {
        let f = self.entries.get(&cfg.variant).ok_or_else(|| CoreError::UnknownStrategy {
            kind: "projector",
            name: cfg.variant.clone(),
            available: self.names().join(", "),
        })?;
        f(cfg, seed)
    }
}

/// Plain-value projector output for decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedEmbedding {
    pub variant: String,
    /// `N′ × D_llm`.
    pub rows: Tensor,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

/// Runs a projector in evaluation mode and copies out its values.
pub fn align(proj: &dyn Projector, input: &EpochTokens) -> Result<AlignedEmbedding> {
    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let y = proj.forward(&mut g, input, &mut rng)?;
    Ok(AlignedEmbedding {
        variant: proj.variant().to_string(),
        rows: g.to_tensor(y),
        start: proj.params().get(EEG_START)?.data().to_vec(),
        end: proj.params().get(EEG_END)?.data().to_vec(),
    })
}
