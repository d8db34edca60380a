use celm_tensor::{Graph, ParamStore, Tensor, Var};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::perceiver::QUERIES;
use super::{check_input, init_special_rows, sequence_with_separators, Projector, ProjectorConfig};
use crate::error::{CoreError, Result};
use crate::nn::{LayerNorm, Linear, LinearAttentionBlock, PerceiverBlock};
use crate::tokens::EpochTokens;

/// Positions and separators, kernelized-attention blocks for temporal
/// context, then learned queries cross-attend to compress to a fixed count.
pub struct SccProjector {
    cfg: ProjectorConfig,
    params: ParamStore,
    blocks: Vec<LinearAttentionBlock>,
    cross: PerceiverBlock,
    norm: LayerNorm,
    proj: Linear,
}

impl SccProjector {
    pub fn new(cfg: &ProjectorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.query_count == 0 {
            return Err(CoreError::Config("scc needs at least one query".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let blocks = (0..cfg.depth)
            .map(|i| LinearAttentionBlock::init(&mut params, &format!("block{i}"), cfg.eeg_dim, cfg.heads, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        params.insert(QUERIES, Tensor::randn(&[cfg.query_count, cfg.eeg_dim], 1.0, &mut rng).with_grad(true));
        let cross = PerceiverBlock::init(&mut params, "cross", cfg.eeg_dim, cfg.heads, &mut rng)?;
        let norm = LayerNorm::init(&mut params, "norm", cfg.eeg_dim);
        let proj = Linear::init(&mut params, "proj", cfg.eeg_dim, cfg.llm_dim, true, &mut rng);
        init_special_rows(&mut params, cfg.llm_dim, &mut rng);
        Ok(SccProjector { cfg: cfg.clone(), params, blocks, cross, norm, proj })
    }
}

impl Projector for SccProjector {
    fn variant(&self) -> &str {
        "scc"
    }

    fn config(&self) -> &ProjectorConfig {
        &self.cfg
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn output_len(&self, n: usize, sessions: usize) -> Result<usize> {
        let total = n + sessions.max(1);
        if total > self.cfg.max_positions {
            return Err(CoreError::ContextOverflow {
                what: "projector positions",
                len: total,
                max: self.cfg.max_positions,
            });
        }
        if self.cfg.query_count >= total {
            return Err(CoreError::TooManyQueries { queries: self.cfg.query_count, len: total });
        }
        Ok(self.cfg.query_count)
    }

    fn forward(&self, g: &mut Graph, input: &EpochTokens, rng: &mut dyn RngCore) -> Result<Var> {
        check_input(&self.cfg, input)?;
        self.output_len(input.len(), input.num_sessions())?;
        let (mut x, _) = sequence_with_separators(g, &self.cfg, input)?;
        for b in &self.blocks {
            x = b.forward(g, &self.params, x, self.cfg.dropout, rng)?;
        }
        let q = g.param(&self.params, QUERIES)?;
        let z = self.cross.forward(g, &self.params, q, x, self.cfg.dropout, rng)?;
        let z = self.norm.forward(g, &self.params, z)?;
        self.proj.forward(g, &self.params, z)
    }
}
