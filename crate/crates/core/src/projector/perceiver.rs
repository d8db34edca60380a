use celm_tensor::{Graph, ParamStore, Tensor, Var};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_input, init_special_rows, Projector, ProjectorConfig};
use crate::error::{CoreError, Result};
use crate::nn::{LayerNorm, Linear, PerceiverBlock};
use crate::tokens::EpochTokens;

pub(crate) const QUERIES: &str = "queries";

/// Learned queries cross-attending to the tokens, then a linear map.
pub struct PerceiverProjector {
    cfg: ProjectorConfig,
    params: ParamStore,
    blocks: Vec<PerceiverBlock>,
    norm: LayerNorm,
    proj: Linear,
}

impl PerceiverProjector {
    pub fn new(cfg: &ProjectorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.query_count == 0 || cfg.depth == 0 {
            return Err(CoreError::Config("perceiver needs at least one query and one layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        params.insert(QUERIES, Tensor::randn(&[cfg.query_count, cfg.eeg_dim], 1.0, &mut rng).with_grad(true));
        let blocks = (0..cfg.depth)
            .map(|i| PerceiverBlock::init(&mut params, &format!("cross{i}"), cfg.eeg_dim, cfg.heads, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let norm = LayerNorm::init(&mut params, "norm", cfg.eeg_dim);
        let proj = Linear::init(&mut params, "proj", cfg.eeg_dim, cfg.llm_dim, true, &mut rng);
        init_special_rows(&mut params, cfg.llm_dim, &mut rng);
        Ok(PerceiverProjector { cfg: cfg.clone(), params, blocks, norm, proj })
    }
}

impl Projector for PerceiverProjector {
    fn variant(&self) -> &str {
        "perceiver"
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
        if n == 0 {
            return Err(CoreError::Empty("perceiver input"));
        }
        Ok(self.cfg.query_count)
    }

    fn forward(&self, g: &mut Graph, input: &EpochTokens, rng: &mut dyn RngCore) -> Result<Var> {
        self.output_len(input.len(), input.num_sessions())?;
        check_input(&self.cfg, input)?;
        let context = g.leaf(&input.tokens);
        let mut x = g.param(&self.params, QUERIES)?;
        for b in &self.blocks {
            x = b.forward(g, &self.params, x, context, self.cfg.dropout, rng)?;
        }
        let x = self.norm.forward(g, &self.params, x)?;
        self.proj.forward(g, &self.params, x)
    }
}
