//! Autoregressive report generation from aligned EEG rows.

use celm_tensor::Graph;
use rand::{Rng, RngCore};

use crate::decoder::ToyDecoder;
use crate::error::{CoreError, Result};
use crate::fused::{build_fused, encode_text};
use crate::projector::AlignedEmbedding;
use crate::vocab::{Vocab, EOT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeMode {
    Greedy,
    Temperature(f64),
}

fn pick(logits: &[f64], mode: DecodeMode, rng: &mut dyn RngCore) -> usize {
    match mode {
        DecodeMode::Temperature(t) if t > 0.0 => {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|l| ((l - max) / t).exp()).collect();
            let total: f64 = w.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (i, wi) in w.iter().enumerate() {
                if u < *wi {
                    return i;
                }
                u -= wi;
            }
            w.len() - 1
        }
        _ => {
            let mut best = 0;
            for (i, &l) in logits.iter().enumerate() {
                if l > logits[best] {
                    best = i;
                }
            }
            best
        }
    }
}

/// Token ids produced after the prompt, excluding the end-of-text marker.
pub fn generate_ids(
    decoder: &ToyDecoder,
    aligned: &AlignedEmbedding,
    prompt: &[usize],
    max_tokens: usize,
    mode: DecodeMode,
    rng: &mut dyn RngCore,
) -> Result<Vec<usize>> {
    if max_tokens == 0 {
        return Err(CoreError::Config("max_tokens must be at least 1".into()));
    }
    let d = decoder.config().dim;
    let n = aligned.rows.shape().first().copied().unwrap_or(0);
    let mut out = Vec::new();
    let mut text = prompt.to_vec();
    while out.len() < max_tokens {
        let mut g = Graph::new();
        let start = g.constant(&[1, d], aligned.start.clone())?;
        let end = g.constant(&[1, d], aligned.end.clone())?;
        let rows = g.constant(&[n, d], aligned.rows.data().to_vec())?;
        let fused = build_fused(&mut g, decoder, start, rows, end, &text, None, 0)?;
        let last = fused.len() - 1;
        let logits = decoder.forward(&mut g, fused.embeddings, &fused.positions, last)?;
        let next = pick(g.value(logits), mode, rng);
        if next == EOT {
            break;
        }
        out.push(next);
        text.push(next);
    }
    Ok(out)
}

pub fn generate(
    decoder: &ToyDecoder,
    vocab: &Vocab,
    aligned: &AlignedEmbedding,
    prompt: &str,
    max_tokens: usize,
    mode: DecodeMode,
    rng: &mut dyn RngCore,
) -> Result<String> {
    let (p, _) = encode_text(vocab, prompt, None)?;
    let ids = generate_ids(decoder, aligned, &p, max_tokens, mode, rng)?;
    Ok(vocab.decode(&ids))
}
