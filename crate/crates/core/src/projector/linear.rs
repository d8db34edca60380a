use celm_tensor::{Graph, ParamStore, Var};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_input, init_special_rows, Projector, ProjectorConfig};
use crate::error::Result;
use crate::nn::Linear;
use crate::tokens::EpochTokens;

/// One affine map applied to every token independently.
pub struct LinearProjector {
    cfg: ProjectorConfig,
    params: ParamStore,
    proj: Linear,
}

impl LinearProjector {
    pub fn new(cfg: &ProjectorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let proj = Linear::init(&mut params, "proj", cfg.eeg_dim, cfg.llm_dim, true, &mut rng);
        init_special_rows(&mut params, cfg.llm_dim, &mut rng);
        Ok(LinearProjector { cfg: cfg.clone(), params, proj })
    }

    /// Size of the affine map alone.
    pub fn affine_params(&self) -> usize {
        self.cfg.eeg_dim * self.cfg.llm_dim + self.cfg.llm_dim
    }
}

impl Projector for LinearProjector {
    fn variant(&self) -> &str {
        "linear"
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

    fn output_len(&self, n: usize, _sessions: usize) -> Result<usize> {
        Ok(n)
    }

    fn forward(&self, g: &mut Graph, input: &EpochTokens, _rng: &mut dyn RngCore) -> Result<Var> {
        if input.is_empty() {
            return Ok(g.constant(&[0, self.cfg.llm_dim], Vec::new())?);
        }
        check_input(&self.cfg, input)?;
        let x = g.leaf(&input.tokens);
        self.proj.forward(g, &self.params, x)
    }
}
