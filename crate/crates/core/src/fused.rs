//! Decoder input assembly: `[start] H [end] prompt target`, with the loss
//! mask over target tokens and the closing end-of-text prediction.

use celm_tensor::{Graph, Var};

use crate::decoder::ToyDecoder;
use crate::error::{CoreError, Result};
use crate::vocab::{Vocab, EOT, MAX_UNKNOWN_RATE, PAD};

#[derive(Debug, Clone)]
pub struct FusedSequence {
    /// `T × D_llm` decoder input rows.
    pub embeddings: Var,
    pub positions: Vec<Option<usize>>,
    /// Next-token target for every row (padding where unsupervised).
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
    pub eeg_rows: usize,
    pub prompt_len: usize,
    pub target_len: usize,
    pub pad_len: usize,
}

impl FusedSequence {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Index of the `[end]` marker row.
    pub fn end_row(&self) -> usize {
        1 + self.eeg_rows
    }

    /// First row whose prediction is supervised, if any.
    pub fn first_supervised_row(&self) -> Option<usize> {
        self.mask.iter().position(|&m| m)
    }
}

/// Prompt and target ids with the unknown-token precondition applied to
/// their union.
pub fn encode_text(vocab: &Vocab, prompt: &str, target: Option<&str>) -> Result<(Vec<usize>, Option<Vec<usize>>)> {
    let p = vocab.encode(prompt);
    let t = target.map(|t| vocab.encode(t));
    let all: Vec<usize> = p.iter().chain(t.iter().flatten()).copied().collect();
    if !all.is_empty() {
        let unk = all.iter().filter(|&&i| i == crate::vocab::UNK).count();
        let rate = unk as f64 / all.len() as f64;
        if rate > MAX_UNKNOWN_RATE {
            return Err(CoreError::UnknownTokens { what: "prompt and target", rate, limit: MAX_UNKNOWN_RATE });
        }
    }
    Ok((p, t))
}

/// Concatenates the framing rows, aligned EEG rows and text embeddings.
/// `target = None` builds a generation prefix with an empty mask; `pad`
/// appends unsupervised padding rows.
#[allow(clippy::too_many_arguments)]
pub fn build_fused(
    g: &mut Graph,
    decoder: &ToyDecoder,
    start: Var,
    aligned: Var,
    end: Var,
    prompt: &[usize],
    target: Option<&[usize]>,
    pad: usize,
) -> Result<FusedSequence> {
    let d = decoder.config().dim;
    for (what, v) in [("start row", start), ("aligned rows", aligned), ("end row", end)] {
        let (_, w) = g.dims(v);
        if w != d {
            return Err(CoreError::WidthMismatch { what, expected: d, got: w });
        }
    }
    let (n, _) = g.dims(aligned);
    let tgt = target.unwrap_or(&[]);
    let total = 2 + n + prompt.len() + tgt.len() + pad;
    let max = decoder.config().max_context;
    if total > max {
        return Err(CoreError::ContextOverflow {
            what: "fused sequence (start + eeg + end + prompt + target)",
            len: total,
            max,
        });
    }
    let mut text: Vec<usize> = prompt.to_vec();
    text.extend_from_slice(tgt);
    text.extend(std::iter::repeat_n(PAD, pad));
    let mut parts = vec![start];
    if n > 0 {
        parts.push(aligned);
    }
    parts.push(end);
    if !text.is_empty() {
        parts.push(decoder.embed_tokens(g, &text)?);
    }
    let embeddings = g.concat_rows(&parts)?;
    let mut positions = vec![None; 1 + n];
    positions.extend((0..=text.len()).map(Some));
    let mut targets = vec![PAD; total];
    let mut mask = vec![false; total];
    if target.is_some() {
        let first = 1 + n + prompt.len();
        for (j, &tok) in tgt.iter().chain(std::iter::once(&EOT)).enumerate() {
            targets[first + j] = tok;
            mask[first + j] = true;
        }
    }
    Ok(FusedSequence {
        embeddings,
        positions,
        targets,
        mask,
        eeg_rows: n,
        prompt_len: prompt.len(),
        target_len: tgt.len(),
        pad_len: pad,
    })
}

/// Mean negative log-likelihood over the masked rows of `logits`, whose
/// first row corresponds to fused row `first_row`.
pub fn nll_loss(g: &mut Graph, logits: Var, fused: &FusedSequence, first_row: usize) -> Result<Var> {
    if !fused.mask.iter().any(|&m| m) {
        return Err(CoreError::Empty("loss mask"));
    }
    if fused.mask[..first_row].iter().any(|&m| m) {
        return Err(CoreError::Config("logits start after a supervised row".into()));
    }
    Ok(g.cross_entropy(logits, &fused.targets[first_row..], &fused.mask[first_row..])?)
}
