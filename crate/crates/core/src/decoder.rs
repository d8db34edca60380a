//! Small causal transformer decoder standing in for a pretrained language
//! model: trained once on report text, then frozen.

use celm_tensor::{Graph, ParamStore, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::nn::{causal_mask, softmax_attention, FeedForward, LayerNorm, Linear};
use crate::optim::{AdamW, LinearSchedule};
use crate::vocab::{Vocab, BOS, EOT, PAD};

pub const TOKEN_EMBEDDING: &str = "decoder.tok_emb";
pub const POSITION_EMBEDDING: &str = "decoder.pos_emb";

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub max_context: usize,
}

impl DecoderConfig {
    pub fn desk(vocab_size: usize) -> Self {
        DecoderConfig { vocab_size, dim: 64, layers: 2, heads: 4, ff_hidden: 256, max_context: 1024 }
    }
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    ln2: LayerNorm,
    ff: FeedForward,
}

/// Pre-norm causal decoder with learned positions and an output head tied
/// to the token embeddings.
#[derive(Debug, Clone)]
pub struct ToyDecoder {
    cfg: DecoderConfig,
    params: ParamStore,
    layers: Vec<DecoderLayer>,
    ln_f: LayerNorm,
}

impl ToyDecoder {
    pub fn new(cfg: &DecoderConfig, seed: u64) -> Result<Self> {
        if cfg.dim == 0 || cfg.heads == 0 || !cfg.dim.is_multiple_of(cfg.heads) || cfg.vocab_size == 0 {
            return Err(CoreError::Config(format!("invalid decoder shape {cfg:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let std = 1.0 / (cfg.dim as f64).sqrt();
        params.insert(TOKEN_EMBEDDING, Tensor::randn(&[cfg.vocab_size, cfg.dim], std, &mut rng).with_grad(true));
        params.insert(POSITION_EMBEDDING, Tensor::randn(&[cfg.max_context, cfg.dim], std, &mut rng).with_grad(true));
        let d = cfg.dim;
        let layers = (0..cfg.layers)
            .map(|i| {
                let p = format!("decoder.layer{i}");
                let mut r = &mut rng;
                DecoderLayer {
                    ln1: LayerNorm::init(&mut params, &format!("{p}.ln1"), d),
                    q: Linear::init(&mut params, &format!("{p}.q"), d, d, true, &mut r),
                    k: Linear::init(&mut params, &format!("{p}.k"), d, d, true, &mut r),
                    v: Linear::init(&mut params, &format!("{p}.v"), d, d, true, &mut r),
                    out: Linear::init(&mut params, &format!("{p}.out"), d, d, true, &mut r),
                    ln2: LayerNorm::init(&mut params, &format!("{p}.ln2"), d),
                    ff: FeedForward::init(&mut params, &format!("{p}.ff"), d, cfg.ff_hidden, &mut r),
                }
            })
            .collect();
        let ln_f = LayerNorm::init(&mut params, "decoder.ln_f", d);
        Ok(ToyDecoder { cfg: cfg.clone(), params, layers, ln_f })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Replaces the weights, e.g. from a checkpoint.
    pub fn load_params(&mut self, other: &ParamStore) -> Result<()> {
        self.params.copy_values_from(other)?;
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.params.set_requires_grad(false);
    }

    pub fn is_frozen(&self) -> bool {
        self.params.num_trainable() == 0
    }

    pub fn embed_tokens(&self, g: &mut Graph, ids: &[usize]) -> Result<Var> {
        let table = g.param(&self.params, TOKEN_EMBEDDING)?;
        Ok(g.embedding(table, ids)?)
    }

    /// Logits for rows `first_row..` of the input `x: T × D`; rows whose
    /// position is `None` receive no positional embedding.
    pub fn forward(&self, g: &mut Graph, x: Var, positions: &[Option<usize>], first_row: usize) -> Result<Var> {
        let (t, d) = g.dims(x);
        if d != self.cfg.dim {
            return Err(CoreError::WidthMismatch { what: "decoder input", expected: self.cfg.dim, got: d });
        }
        if positions.len() != t || first_row >= t.max(1) {
            return Err(CoreError::Config(format!(
                "{} positions and first row {first_row} for {t} rows",
                positions.len()
            )));
        }
        if t > self.cfg.max_context {
            return Err(CoreError::ContextOverflow { what: "decoder context", len: t, max: self.cfg.max_context });
        }
        if let Some(bad) = positions.iter().flatten().find(|&&p| p >= self.cfg.max_context) {
            return Err(CoreError::ContextOverflow {
                what: "decoder positions",
                len: bad + 1,
                max: self.cfg.max_context,
            });
        }
        let table = g.param(&self.params, POSITION_EMBEDDING)?;
        let ids: Vec<usize> = positions.iter().map(|p| p.unwrap_or(0)).collect();
        let mut pe = g.embedding(table, &ids)?;
        if positions.iter().any(Option::is_none) {
            let mut keep = vec![0.0; t * d];
            for (i, p) in positions.iter().enumerate() {
                if p.is_some() {
                    keep[i * d..(i + 1) * d].iter_mut().for_each(|k| *k = 1.0);
                }
            }
            let keep = g.constant(&[t, d], keep)?;
            pe = g.mul(pe, keep)?;
        }
        let mut h = g.add(x, pe)?;
        let mask = causal_mask(g, t)?;
        let p = &self.params;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for l in &self.layers {
            let a = l.ln1.forward(g, p, h)?;
            let q = l.q.forward(g, p, a)?;
            let k = l.k.forward(g, p, a)?;
            let v = l.v.forward(g, p, a)?;
            let att = softmax_attention(g, q, k, v, self.cfg.heads, Some(mask))?;
            let att = l.out.forward(g, p, att)?;
            h = g.add(h, att)?;
            let f = l.ln2.forward(g, p, h)?;
            let f = l.ff.forward(g, p, f, 0.0, &mut rng)?;
            h = g.add(h, f)?;
        }
        let h = if first_row > 0 { g.slice_rows(h, first_row, t - first_row)? } else { h };
        let h = self.ln_f.forward(g, p, h)?;
        let table = g.param(&self.params, TOKEN_EMBEDDING)?;
        Ok(g.matmul_nt(h, table)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Fraction of sequences given a shuffled report-word prefix.
    pub hint_prob: f64,
    /// Largest number of padding rows mixed into a prefix.
    pub max_hint_filler: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 30,
            lr: 3e-3,
            weight_decay: 0.01,
            batch_size: 8,
            hint_prob: 0.5,
            max_hint_filler: 24,
            seed: 0,
        }
    }
}

/// Language-model warm-up on `[bos] prompt report [eot]` texts; returns
/// the mean loss of each epoch and leaves the decoder frozen. A fraction
/// of sequences is preceded by unpositioned rows holding the report's words
/// in random order mixed with padding, so the frozen model learns to read
/// content from rows placed before the text.
pub fn pretrain_decoder(
    decoder: &mut ToyDecoder,
    vocab: &Vocab,
    texts: &[(String, String)],
    cfg: &PretrainConfig,
) -> Result<Vec<f64>> {
    if texts.is_empty() {
        return Err(CoreError::Empty("pretraining corpus"));
    }
    if cfg.batch_size == 0 {
        return Err(CoreError::Config("pretraining batch size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.hint_prob) {
        return Err(CoreError::Config(format!("hint probability {} outside [0, 1]", cfg.hint_prob)));
    }
    decoder.params.set_requires_grad(true);
    let seqs: Vec<(Vec<usize>, Vec<usize>)> = texts
        .iter()
        .map(|(p, r)| {
            let report = vocab.encode(r);
            let mut ids = vec![BOS];
            ids.extend(vocab.encode(p));
            ids.extend(&report);
            ids.push(EOT);
            (ids, report)
        })
        .collect();
    let steps_per_epoch = seqs.len().div_ceil(cfg.batch_size);
    let sched = LinearSchedule::new(cfg.lr, steps_per_epoch * cfg.epochs, 0.05);
    let mut opt = AdamW::new(0.9, 0.99, 1e-8, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            decoder.params.zero_grad();
            for &i in chunk {
                let (ids, report) = &seqs[i];
                let mut hint = Vec::new();
                if rng.random::<f64>() < cfg.hint_prob {
                    hint.extend(report);
                    hint.extend(std::iter::repeat_n(PAD, rng.random_range(0..=cfg.max_hint_filler)));
                    hint.shuffle(&mut rng);
                }
                let t = ids.len() - 1;
                let h = hint.len();
                let mut all = hint;
                all.extend(&ids[..t]);
                let mut g = Graph::new();
                let x = decoder.embed_tokens(&mut g, &all)?;
                let pos: Vec<Option<usize>> = std::iter::repeat_n(None, h).chain((0..t).map(Some)).collect();
                let logits = decoder.forward(&mut g, x, &pos, h)?;
                let loss = g.cross_entropy(logits, &ids[1..], &vec![true; t])?;
                let scaled = g.scale(loss, 1.0 / chunk.len() as f64);
                g.backward(scaled)?;
                decoder.params.accumulate_grads(&g);
                total += g.scalar(loss);
            }
            opt.step(&mut decoder.params, sched.lr(step));
            step += 1;
        }
        curve.push(total / seqs.len() as f64);
    }
    decoder.freeze();
    Ok(curve)
}
