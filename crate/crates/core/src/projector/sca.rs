use celm_tensor::{Graph, ParamStore, Var};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{add_separator_rows, check_input, init_special_rows, sequence_with_separators, Projector, ProjectorConfig};
use crate::error::{CoreError, Result};
use crate::nn::{Linear, LinearAttentionBlock};
use crate::tokens::EpochTokens;

/// Positions and session separators, a stack of kernelized-attention
/// blocks over the full sequence, then a linear map. Keeps every position.
pub struct ScaProjector {
    cfg: ProjectorConfig,
    params: ParamStore,
    blocks: Vec<LinearAttentionBlock>,
    proj: Linear,
}

impl ScaProjector {
    pub fn new(cfg: &ProjectorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let blocks = (0..cfg.depth)
            .map(|i| LinearAttentionBlock::init(&mut params, &format!("block{i}"), cfg.eeg_dim, cfg.heads, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let proj = Linear::init(&mut params, "proj", cfg.eeg_dim, cfg.llm_dim, true, &mut rng);
        init_special_rows(&mut params, cfg.llm_dim, &mut rng);
        Ok(ScaProjector { cfg: cfg.clone(), params, blocks, proj })
    }
}

impl Projector for ScaProjector {
    fn variant(&self) -> &str {
        "sca"
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
        Ok(total)
    }

    fn forward(&self, g: &mut Graph, input: &EpochTokens, rng: &mut dyn RngCore) -> Result<Var> {
        check_input(&self.cfg, input)?;
        let (mut x, seps) = sequence_with_separators(g, &self.cfg, input)?;
        for b in &self.blocks {
            x = b.forward(g, &self.params, x, self.cfg.dropout, rng)?;
        }
        let y = self.proj.forward(g, &self.params, x)?;
        add_separator_rows(g, &self.params, y, &seps)
    }

    fn unused_params(&self) -> Vec<&'static str> {
        Vec::new()
    }
}
