//! Mini-window tokens, epoch-level aggregation and token persistence.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use celm_signal::{EpochedRecording, Sidecar};
use celm_tensor::{read_checkpoint, write_checkpoint, Tensor};

use crate::encoder::{check_compatible, EegEncoder};
use crate::error::{CoreError, Result};

/// All mini-window tokens of a recording, `[epoch, slot, window, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniTokens {
    pub num_epochs: usize,
    /// Channel slots, excluding any summary slot.
    pub num_channels: usize,
    pub windows: usize,
    pub dim: usize,
    pub has_summary: bool,
    pub data: Vec<f64>,
}

impl MiniTokens {
    pub fn slots(&self) -> usize {
        self.num_channels + usize::from(self.has_summary)
    }

    /// Count of channel mini-window tokens, `N × C × W`.
    pub fn count(&self) -> usize {
        self.num_epochs * self.num_channels * self.windows
    }

    pub fn token(&self, epoch: usize, slot: usize, window: usize) -> &[f64] {
        let off = ((epoch * self.slots() + slot) * self.windows + window) * self.dim;
        &self.data[off..off + self.dim]
    }

    pub fn epoch_block(&self, epoch: usize) -> &[f64] {
        let len = self.slots() * self.windows * self.dim;
        &self.data[epoch * len..(epoch + 1) * len]
    }
}

/// Encodes every epoch of a recording into mini-window tokens.
pub fn encode_mini_windows(ep: &EpochedRecording, enc: &dyn EegEncoder) -> Result<MiniTokens> {
    check_compatible(ep, enc)?;
    let mut data = Vec::new();
    let mut windows = 0;
    for n in 0..ep.num_epochs {
        let e = enc.encode_epoch(ep.epoch(n), ep.samples_per_epoch)?;
        windows = e.windows;
        data.extend_from_slice(&e.data);
    }
    if windows == 0 {
        windows = ep.samples_per_epoch / enc.window_samples();
    }
    Ok(MiniTokens {
        num_epochs: ep.num_epochs,
        num_channels: ep.num_channels(),
        windows,
        dim: enc.dim(),
        has_summary: enc.has_summary_slot(),
        data,
    })
}

/// One token per epoch, with the start index of every session.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTokens {
    /// `N × D` tokens.
    pub tokens: Tensor,
    /// Sorted start offsets, the first always 0 when non-empty.
    pub session_starts: Vec<usize>,
}

impl EpochTokens {
    pub fn single(tokens: Tensor) -> Self {
        EpochTokens { tokens, session_starts: vec![0] }
    }

    pub fn len(&self) -> usize {
        self.tokens.shape().first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.tokens.shape().get(1).copied().unwrap_or(0)
    }

    pub fn num_sessions(&self) -> usize {
        self.session_starts.len().max(1)
    }

    /// Joins several sessions end to end.
    pub fn concat(parts: &[EpochTokens]) -> Result<Self> {
        let dim = parts.first().map(|p| p.dim()).ok_or(CoreError::Empty("session list"))?;
        let mut data = Vec::new();
        let mut starts = Vec::new();
        let mut n = 0;
        for p in parts {
            if p.dim() != dim {
                return Err(CoreError::WidthMismatch { what: "session tokens", expected: dim, got: p.dim() });
            }
            for &s in &p.session_starts {
                starts.push(n + s);
            }
            n += p.len();
            data.extend_from_slice(p.tokens.data());
        }
        Ok(EpochTokens { tokens: Tensor::new(vec![n, dim], data)?, session_starts: starts })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let ok = self.session_starts.windows(2).all(|w| w[0] < w[1])
            && self.session_starts.first().is_none_or(|&s| s == 0)
            && self.session_starts.last().is_none_or(|&s| s <= n);
        if !ok {
            return Err(CoreError::Config(format!("session starts {:?} do not fit {n} tokens", self.session_starts)));
        }
        if self.tokens.data().iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Config("epoch tokens contain non-finite values".into()));
        }
        Ok(())
    }
}

/// Per-feature standardization of epoch tokens with statistics fitted on a
/// reference set; features with no spread are only centered.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStandardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TokenStandardizer {
    pub const MEAN: &'static str = "standardizer.mean";
    pub const STD: &'static str = "standardizer.std";
    const MIN_STD: f64 = 1e-8;

    pub fn fit<'a, I: IntoIterator<Item = &'a EpochTokens>>(sets: I) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for t in sets {
            if t.is_empty() {
                continue;
            }
            if sum.is_empty() {
                sum = vec![0.0; t.dim()];
                sq = vec![0.0; t.dim()];
            }
            if t.dim() != sum.len() {
                return Err(CoreError::WidthMismatch { what: "standardizer input", expected: sum.len(), got: t.dim() });
            }
            for row in t.tokens.data().chunks(sum.len()) {
                for ((s, q), &x) in sum.iter_mut().zip(&mut sq).zip(row) {
                    *s += x;
                    *q += x * x;
                }
            }
            n += t.len();
        }
        if n == 0 {
            return Err(CoreError::Empty("standardizer reference tokens"));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let v = (q / nf - m * m).max(0.0).sqrt();
                if v < Self::MIN_STD {
                    1.0
                } else {
                    v
                }
            })
            .collect();
        Ok(TokenStandardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, t: &EpochTokens) -> Result<EpochTokens> {
        if !t.is_empty() && t.dim() != self.dim() {
            return Err(CoreError::WidthMismatch { what: "standardized tokens", expected: self.dim(), got: t.dim() });
        }
        let mut tokens = t.tokens.clone();
        let d = self.dim();
        for row in tokens.data_mut().chunks_mut(d) {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        Ok(EpochTokens { tokens, session_starts: t.session_starts.clone() })
    }

    /// `1 × D` tensors for checkpointing.
    pub fn tensors(&self) -> Result<[(&'static str, Tensor); 2]> {
        Ok([
            (Self::MEAN, Tensor::new(vec![1, self.dim()], self.mean.clone())?),
            (Self::STD, Tensor::new(vec![1, self.dim()], self.std.clone())?),
        ])
    }

    pub fn from_tensors(mean: &Tensor, std: &Tensor) -> Result<Self> {
        if mean.len() != std.len() || std.data().iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(CoreError::Config("invalid standardizer statistics".into()));
        }
        Ok(TokenStandardizer { mean: mean.data().to_vec(), std: std.data().to_vec() })
    }
}

/// Reduces the mini-window tokens of each epoch to one vector.
pub trait Aggregator: Send + Sync {
    fn name(&self) -> &str;
    fn aggregate_epoch(&self, mini: &MiniTokens, epoch: usize, out: &mut [f64]) -> Result<()>;
}

/// Mean over channels and mini-windows.
pub struct MeanAggregator;

impl Aggregator for MeanAggregator {
    fn name(&self) -> &str {
        "mean"
    }

    fn aggregate_epoch(&self, mini: &MiniTokens, epoch: usize, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        let count = (mini.num_channels * mini.windows) as f64;
        for c in 0..mini.num_channels {
            for w in 0..mini.windows {
                for (o, v) in out.iter_mut().zip(mini.token(epoch, c, w)) {
                    *o += v;
                }
            }
        }
        if count > 0.0 {
            out.iter_mut().for_each(|o| *o /= count);
        }
        Ok(())
    }
}

/// Mean of the encoder's summary slot over mini-windows.
pub struct ClsAggregator;

impl Aggregator for ClsAggregator {
    fn name(&self) -> &str {
        "cls"
    }

    fn aggregate_epoch(&self, mini: &MiniTokens, epoch: usize, out: &mut [f64]) -> Result<()> {
        if !mini.has_summary {
            return Err(CoreError::NoSummarySlot("input".into()));
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for w in 0..mini.windows {
            for (o, v) in out.iter_mut().zip(mini.token(epoch, mini.num_channels, w)) {
                *o += v / mini.windows as f64;
            }
        }
        Ok(())
    }
}

pub type AggregatorFactory = fn() -> Box<dyn Aggregator>;

/// Name-keyed aggregation strategies.
pub struct AggregationRegistry {
    entries: BTreeMap<String, AggregatorFactory>,
}

impl Default for AggregationRegistry {
    fn default() -> Self {
        let mut r = AggregationRegistry { entries: BTreeMap::new() };
        r.register("mean", || Box::new(MeanAggregator));
        r.register("cls", || Box::new(ClsAggregator));
        r
    }
}

impl AggregationRegistry {
    pub fn register(&mut self, name: &str, factory: AggregatorFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str) -> Result<Box<dyn Aggregator>> {
        self.entries.get(name).map(|f| f()).ok_or_else(|| CoreError::UnknownStrategy {
            kind: "aggregation",
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }
}

/// Collapses mini-window tokens to one token per epoch.
pub fn aggregate_epoch_tokens(mini: &MiniTokens, agg: &dyn Aggregator) -> Result<EpochTokens> {
    let d = mini.dim;
    let mut data = vec![0.0; mini.num_epochs * d];
    for n in 0..mini.num_epochs {
        agg.aggregate_epoch(mini, n, &mut data[n * d..(n + 1) * d])?;
    }
    Ok(EpochTokens::single(Tensor::new(vec![mini.num_epochs, d], data)?))
}

/// Encodes and aggregates epoch by epoch without keeping all mini tokens.
pub fn tokenize_recording(ep: &EpochedRecording, enc: &dyn EegEncoder, agg: &dyn Aggregator) -> Result<EpochTokens> {
    check_compatible(ep, enc)?;
    if agg.name() == "cls" && !enc.has_summary_slot() {
        return Err(CoreError::NoSummarySlot(enc.name().to_string()));
    }
    let d = enc.dim();
    let mut data = vec![0.0; ep.num_epochs * d];
    for n in 0..ep.num_epochs {
        let e = enc.encode_epoch(ep.epoch(n), ep.samples_per_epoch)?;
        let mini = MiniTokens {
            num_epochs: 1,
            num_channels: ep.num_channels(),
            windows: e.windows,
            dim: d,
            has_summary: enc.has_summary_slot(),
            data: e.data,
        };
        agg.aggregate_epoch(&mini, 0, &mut data[n * d..(n + 1) * d])?;
    }
    Ok(EpochTokens::single(Tensor::new(vec![ep.num_epochs, d], data)?))
}

/// Token counts before and after aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionReport {
    pub raw_samples: usize,
    pub mini_tokens: usize,
    pub epoch_tokens: usize,
}

impl CompressionReport {
    pub fn of(ep: &EpochedRecording, mini: &MiniTokens) -> Self {
        CompressionReport {
            raw_samples: ep.num_epochs * ep.num_channels() * ep.samples_per_epoch,
            mini_tokens: mini.count(),
            epoch_tokens: mini.num_epochs,
        }
    }

    /// Mini-window tokens per epoch token (`C × W`).
    pub fn vs_mini_windows(&self) -> f64 {
        self.mini_tokens as f64 / self.epoch_tokens.max(1) as f64
    }

    /// Raw scalar samples per epoch token (`C × T`).
    pub fn vs_raw_samples(&self) -> f64 {
        self.raw_samples as f64 / self.epoch_tokens.max(1) as f64
    }
}

pub const EPOCH_TOKENS_TENSOR: &str = "epoch_tokens";

/// Writes `<stem>.ckpt` and `<stem>.meta`; the sidecar records encoder and
/// aggregation names and the session starts.
pub fn save_epoch_tokens(
    tokens: &EpochTokens,
    sidecar: &Sidecar,
    encoder: &str,
    aggregation: &str,
    stem: &Path,
) -> Result<()> {
    let (ckpt, meta) = celm_signal::epoch_paths(stem);
    let mut w = std::io::BufWriter::new(fs::File::create(&ckpt)?);
    write_checkpoint(&mut w, [(EPOCH_TOKENS_TENSOR, &tokens.tokens)])?;
    std::io::Write::flush(&mut w)?;
    let mut side = sidecar.clone();
    side.epoch_count = tokens.len();
    side.extra.retain(|(k, _)| !matches!(k.as_str(), "encoder" | "aggregation" | "sessions"));
    side.extra.push(("encoder".into(), encoder.into()));
    side.extra.push(("aggregation".into(), aggregation.into()));
    let starts: Vec<String> = tokens.session_starts.iter().map(usize::to_string).collect();
    side.extra.push(("sessions".into(), starts.join(" ")));
    fs::write(meta, side.render())?;
    Ok(())
}

pub fn load_epoch_tokens(stem: &Path) -> Result<(EpochTokens, Sidecar)> {
    let (ckpt, meta) = celm_signal::epoch_paths(stem);
    let side = Sidecar::parse(&fs::read_to_string(meta)?)?;
    let f = fs::File::open(&ckpt)?;
    let entries = read_checkpoint(std::io::BufReader::new(f))?;
    let tokens = entries
        .into_iter()
        .find(|(n, _)| n == EPOCH_TOKENS_TENSOR)
        .map(|(_, t)| t)
        .ok_or_else(|| CoreError::Config(format!("{} has no epoch tokens", ckpt.display())))?;
    let session_starts = match side.extra.iter().find(|(k, _)| k == "sessions") {
        Some((_, v)) => v
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| CoreError::Config(format!("bad session start `{s}`"))))
            .collect::<Result<Vec<usize>>>()?,
        None => vec![0],
    };
    let t = EpochTokens { tokens, session_starts };
    t.validate()?;
    Ok((t, side))
}

#[cfg(test)]
mod tests {
    #[test]
    fn standardizer_gives_zero_mean_unit_spread() {
        let a = EpochTokens::single(Tensor::new(vec![2, 2], vec![1.0, 5.0, 3.0, 5.0]).unwrap());
        let b = EpochTokens::single(Tensor::new(vec![1, 2], vec![2.0, 5.0]).unwrap());
        let s = TokenStandardizer::fit([&a, &b]).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std[1], 1.0);
        let out = s.apply(&a).unwrap();
        let x = out.tokens.data();
        let sd = (2.0f64 / 3.0).sqrt();
        assert!((x[0] + 1.0 / sd).abs() < 1e-12 && (x[2] - 1.0 / sd).abs() < 1e-12);
        assert_eq!((x[1], x[3]), (0.0, 0.0));
        let [(_, m), (_, d)] = s.tensors().unwrap();
        assert_eq!(TokenStandardizer::from_tensors(&m, &d).unwrap(), s);
        assert!(TokenStandardizer::fit(std::iter::empty()).is_err());
    }

    use super::*;

    fn mini(values: &[&[f64]], dim: usize) -> MiniTokens {
        MiniTokens {
            num_epochs: 1,
            num_channels: values.len(),
            windows: 1,
            dim,
            has_summary: false,
            data: values.concat(),
        }
    }

    #[test]
    fn mean_of_constants_is_the_constant() {
        let v = [0.5, -1.0, 2.0];
        let m = mini(&[&v, &v, &v], 3);
        let t = aggregate_epoch_tokens(&m, &MeanAggregator).unwrap();
        assert_eq!(t.tokens.data(), &v);
    }

    #[test]
    fn mean_of_zero_and_two_is_one() {
        let m = mini(&[&[0.0; 4], &[2.0; 4]], 4);
        let t = aggregate_epoch_tokens(&m, &MeanAggregator).unwrap();
        assert_eq!(t.tokens.data(), &[1.0; 4]);
    }

    #[test]
    fn cls_without_summary_fails() {
        let m = mini(&[&[1.0]], 1);
        assert!(matches!(aggregate_epoch_tokens(&m, &ClsAggregator), Err(CoreError::NoSummarySlot(_))));
    }

    #[test]
    fn concat_offsets_sessions() {
        let a = EpochTokens::single(Tensor::zeros(&[3, 2]));
        let b = EpochTokens::single(Tensor::ones(&[2, 2]));
        let c = EpochTokens::concat(&[a, b]).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c.session_starts, vec![0, 3]);
        c.validate().unwrap();
    }

    #[test]
    fn registry_lists_strategies() {
        let r = AggregationRegistry::default();
        assert_eq!(r.names(), vec!["cls", "mean"]);
        assert!(r.build("max").is_err());
    }
}
