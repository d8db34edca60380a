//! Projector-only training against the frozen decoder and evaluation.

use celm_tensor::{Graph, ParamStore, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decoder::ToyDecoder;
use crate::error::{CoreError, Result};
use crate::fused::{build_fused, encode_text, nll_loss};
use crate::optim::{clip_grad_norm, grad_norm, AdamW, LinearSchedule};
use crate::projector::{Projector, EEG_END, EEG_START};
use crate::tokens::EpochTokens;
use crate::vocab::Vocab;

/// One EEG/report pair ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub tokens: EpochTokens,
    pub prompt: String,
    pub report: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub grad_accum: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub warmup_ratio: f64,
    /// Global gradient-norm clip applied before each update.
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            grad_accum: 4,
            lr: 1e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            epochs: 10,
            warmup_ratio: 0.1,
            max_grad_norm: Some(1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.batch_size > 0
            && self.grad_accum > 0
            && self.epochs > 0
            && self.lr > 0.0
            && self.weight_decay >= 0.0
            && self.eps > 0.0;
        if !positive {
            return Err(CoreError::Config(format!("training values must be positive: {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return Err(CoreError::Config(format!("warmup ratio {} outside [0, 1]", self.warmup_ratio)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(CoreError::Config("betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Samples consumed per optimizer update.
    pub fn samples_per_step(&self) -> usize {
        self.batch_size * self.grad_accum
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.samples_per_step())
    }
}

/// Per-epoch loss and perplexity for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub perplexity: f64,
}

/// `epoch,split,loss,perplexity` table.
pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from("epoch,split,loss,perplexity\n");
    for r in rows {
        s.push_str(&format!("{},{},{:.6},{:.6}\n", r.epoch, r.split, r.loss, r.perplexity));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub curves: Vec<CurveRow>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub steps: usize,
    pub decoder_hash_before: String,
    pub decoder_hash_after: String,
}

/// Token-weighted negative log-likelihood over a sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub mean_nll: f64,
    pub tokens: usize,
}

impl EvalStats {
    pub fn perplexity(&self) -> f64 {
        self.mean_nll.exp()
    }
}

#[derive(Debug, Clone)]
struct Encoded {
    prompt: Vec<usize>,
    target: Vec<usize>,
}

fn encode_all(vocab: &Vocab, samples: &[Sample]) -> Result<Vec<Encoded>> {
    samples
        .iter()
        .map(|s| {
            let (prompt, target) = encode_text(vocab, &s.prompt, Some(&s.report))?;
            Ok(Encoded { prompt, target: target.unwrap_or_default() })
        })
        .collect()
}

/// Same shape and session layout, all values zero.
pub fn zeroed(tokens: &EpochTokens) -> EpochTokens {
    EpochTokens { tokens: Tensor::zeros(tokens.tokens.shape()), session_starts: tokens.session_starts.clone() }
}

/// Records one sample's masked NLL; returns the loss node and the number of
/// supervised tokens.
#[allow(clippy::too_many_arguments)]
pub fn sample_loss(
    g: &mut Graph,
    proj: &dyn Projector,
    decoder: &ToyDecoder,
    tokens: &EpochTokens,
    prompt: &[usize],
    target: &[usize],
    pad: usize,
    rng: &mut dyn RngCore,
) -> Result<(Var, usize)> {
    let aligned = proj.forward(g, tokens, rng)?;
    let start = g.param(proj.params(), EEG_START)?;
    let end = g.param(proj.params(), EEG_END)?;
    let fused = build_fused(g, decoder, start, aligned, end, prompt, Some(target), pad)?;
    let first = fused.first_supervised_row().ok_or(CoreError::Empty("loss mask"))?;
    let logits = decoder.forward(g, fused.embeddings, &fused.positions, first)?;
    let loss = nll_loss(g, logits, &fused, first)?;
    Ok((loss, target.len() + 1))
}

/// Token-weighted NLL of `samples` in evaluation mode.
pub fn evaluate(
    proj: &dyn Projector,
    decoder: &ToyDecoder,
    vocab: &Vocab,
    samples: &[Sample],
    zero_eeg: bool,
) -> Result<EvalStats> {
    if samples.is_empty() {
        return Err(CoreError::Empty("evaluation set"));
    }
    let enc = encode_all(vocab, samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    let mut count = 0;
    for (s, e) in samples.iter().zip(&enc) {
        let tokens = if zero_eeg { zeroed(&s.tokens) } else { s.tokens.clone() };
        let mut g = Graph::new();
        let (loss, n) = sample_loss(&mut g, proj, decoder, &tokens, &e.prompt, &e.target, 0, &mut rng)?;
        total += g.scalar(loss) * n as f64;
        count += n;
    }
    Ok(EvalStats { mean_nll: total / count as f64, tokens: count })
}

/// `exp` of the token-weighted mean NLL.
pub fn perplexity(proj: &dyn Projector, decoder: &ToyDecoder, vocab: &Vocab, samples: &[Sample]) -> Result<f64> {
    Ok(evaluate(proj, decoder, vocab, samples, false)?.perplexity())
}

/// Trains only the projector. Keeps the parameters of the epoch with the
/// lowest validation loss (the last epoch when `val` is empty).
pub fn train(
    cfg: &TrainConfig,
    proj: &mut dyn Projector,
    decoder: &ToyDecoder,
    vocab: &Vocab,
    train_set: &[Sample],
    val_set: &[Sample],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(CoreError::Empty("training set"));
    }
    if !decoder.is_frozen() {
        return Err(CoreError::Config("decoder must be frozen before alignment training".into()));
    }
    let decoder_hash_before = decoder.params().content_hash();
    let enc = encode_all(vocab, train_set)?;
    let steps_per_epoch = cfg.steps_per_epoch(train_set.len());
    let sched = LinearSchedule::new(cfg.lr, steps_per_epoch * cfg.epochs, cfg.warmup_ratio);
    let mut opt = AdamW::new(cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d00d);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut curves = Vec::new();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut step = 0;
    proj.params_mut().zero_grad();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0usize;
        let mut epoch_nll = 0.0;
        for (batch, chunk) in order.chunks(cfg.samples_per_step()).enumerate() {
            let scale = 1.0 / chunk.len() as f64;
            for micro in chunk.chunks(cfg.batch_size) {
                for &i in micro {
                    let mut g = Graph::training();
                    let (loss, n) = sample_loss(
                        &mut g,
                        &*proj,
                        decoder,
                        &train_set[i].tokens,
                        &enc[i].prompt,
                        &enc[i].target,
                        0,
                        &mut dropout_rng,
                    )?;
                    let l = g.scalar(loss);
                    if !l.is_finite() {
                        return Err(CoreError::NonFinite { epoch, batch, max_grad_norm: grad_norm(proj.params()) });
                    }
                    let scaled = g.scale(loss, scale);
                    g.backward(scaled)?;
                    proj.params_mut().accumulate_grads(&g);
                    epoch_loss += l;
                    epoch_nll += l * n as f64;
                    epoch_tokens += n;
                }
            }
            let norm = match cfg.max_grad_norm {
                Some(m) => clip_grad_norm(proj.params_mut(), m),
                None => grad_norm(proj.params()),
            };
            if !norm.is_finite() {
                return Err(CoreError::NonFinite { epoch, batch, max_grad_norm: norm });
            }
            opt.step(proj.params_mut(), sched.lr(step));
            step += 1;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        curves.push(CurveRow {
            epoch,
            split: "train".into(),
            loss: train_loss,
            perplexity: (epoch_nll / epoch_tokens as f64).exp(),
        });
        let score = if val_set.is_empty() {
            train_loss
        } else {
            let v = evaluate(&*proj, decoder, vocab, val_set, false)?;
            curves.push(CurveRow { epoch, split: "val".into(), loss: v.mean_nll, perplexity: v.perplexity() });
            v.mean_nll
        };
        if !score.is_finite() {
            return Err(CoreError::NonFinite {
                epoch,
                batch: steps_per_epoch,
                max_grad_norm: grad_norm(proj.params()),
            });
        }
        let improved = best.as_ref().is_none_or(|(_, b, _)| score < *b);
        if improved || val_set.is_empty() {
            best = Some((epoch, score, proj.params().clone()));
        }
    }
    let (best_epoch, best_val_loss, params) = best.expect("at least one epoch");
    proj.params_mut().copy_values_from(&params)?;
    Ok(TrainOutcome {
        curves,
        best_epoch,
        best_val_loss,
        steps: step,
        decoder_hash_before,
        decoder_hash_after: decoder.params().content_hash(),
    })
}
