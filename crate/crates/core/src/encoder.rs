//! Frozen per-window EEG encoders and their registry.

use std::collections::BTreeMap;

use celm_signal::{default_bands, segment_band_powers, Band, EpochedRecording, Welch};
use celm_tensor::{ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

/// Construction parameters shared by every encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub num_channels: usize,
    pub sample_rate_hz: f64,
    pub dim: usize,
    pub window_seconds: f64,
    pub seed: u64,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec { num_channels: 22, sample_rate_hz: 200.0, dim: 200, window_seconds: 1.0, seed: 0 }
    }
}

/// Tokens for one epoch: `[slot, window, dim]` with one slot per channel
/// plus an optional trailing summary slot.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochEncoding {
    pub slots: usize,
    pub windows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

/// A frozen encoder mapping each mini-window of one channel to a vector.
pub trait EegEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn num_channels(&self) -> usize;
    fn sample_rate_hz(&self) -> f64;
    fn window_samples(&self) -> usize;
    /// Whether [`EegEncoder::encode_epoch`] appends a summary slot.
    fn has_summary_slot(&self) -> bool;
    /// Encodes one epoch laid out `[channel, sample]`.
    fn encode_epoch(&self, epoch: &[f64], samples_per_epoch: usize) -> Result<EpochEncoding>;
    fn params(&self) -> &ParamStore;
}

/// Natural log of `1 + P / P_ref` with `P_ref = 1 µV²`; zero for a flat window.
fn log_power_feature(p: f64) -> f64 {
    p.max(0.0).ln_1p()
}

/// Removes the band mean so the feature describes spectral shape, not scale.
fn center(z: &mut [f64]) {
    let m = z.iter().sum::<f64>() / z.len() as f64;
    z.iter_mut().for_each(|v| *v -= m);
}

/// Spectral toy encoder: band-centered log-powers per channel and window, mapped by
/// a fixed seeded random per-channel matrix, `bias + tanh(W z)`.
pub struct ToyEncoder {
    name: String,
    spec: EncoderSpec,
    bands: Vec<Band>,
    summary: bool,
    params: ParamStore,
}

impl ToyEncoder {
    pub const WEIGHT: &'static str = "encoder.weight";
    pub const BIAS: &'static str = "encoder.bias";
    pub const SUMMARY_WEIGHT: &'static str = "encoder.summary_weight";
    pub const SUMMARY_BIAS: &'static str = "encoder.summary_bias";

    pub fn new(spec: &EncoderSpec, summary: bool) -> Result<Self> {
        if spec.num_channels == 0 || spec.dim == 0 {
            return Err(CoreError::Config("encoder needs channels and width".into()));
        }
        let window = (spec.window_seconds * spec.sample_rate_hz).round() as usize;
        if window < 8 {
            return Err(CoreError::Config(format!("encoder window of {window} samples is too short")));
        }
        let bands = default_bands();
        let nb = bands.len();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let std = 1.0 / (nb as f64).sqrt() / 2.0;
        let mut params = ParamStore::new();
        let frozen = |t: Tensor| t.with_grad(false);
        params.insert(Self::WEIGHT, frozen(Tensor::randn(&[spec.num_channels, nb, spec.dim], std, &mut rng)));
        params.insert(Self::BIAS, frozen(Tensor::randn(&[spec.dim], 0.1, &mut rng)));
        if summary {
            params.insert(Self::SUMMARY_WEIGHT, frozen(Tensor::randn(&[nb, spec.dim], std, &mut rng)));
            params.insert(Self::SUMMARY_BIAS, frozen(Tensor::randn(&[spec.dim], 0.1, &mut rng)));
        }
        Ok(ToyEncoder {
            name: if summary { "toy-cls" } else { "toy" }.to_string(),
            spec: spec.clone(),
            bands,
            summary,
            params,
        })
    }

    fn map(weight: &[f64], bias: &[f64], z: &[f64], out: &mut [f64]) {
        let d = bias.len();
        out.copy_from_slice(bias);
        let mut pre = vec![0.0; d];
        for (b, &zb) in z.iter().enumerate() {
            if zb != 0.0 {
                for (p, w) in pre.iter_mut().zip(&weight[b * d..(b + 1) * d]) {
                    *p += zb * w;
                }
            }
        }
        for (o, p) in out.iter_mut().zip(pre) {
            *o += p.tanh();
        }
    }
}

impl EegEncoder for ToyEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn num_channels(&self) -> usize {
        self.spec.num_channels
    }

    fn sample_rate_hz(&self) -> f64 {
        self.spec.sample_rate_hz
    }

    fn window_samples(&self) -> usize {
        (self.spec.window_seconds * self.spec.sample_rate_hz).round() as usize
    }

    fn has_summary_slot(&self) -> bool {
        self.summary
    }

    fn encode_epoch(&self, epoch: &[f64], samples_per_epoch: usize) -> Result<EpochEncoding> {
        let c = self.spec.num_channels;
        if epoch.len() != c * samples_per_epoch {
            return Err(CoreError::WidthMismatch {
                what: "encoder epoch samples",
                expected: c * samples_per_epoch,
                got: epoch.len(),
            });
        }
        let ws = self.window_samples();
        let windows = samples_per_epoch / ws;
        if windows == 0 {
            return Err(CoreError::Config(format!(
                "epoch of {samples_per_epoch} samples is shorter than one {ws}-sample window"
            )));
        }
        let d = self.spec.dim;
        let nb = self.bands.len();
        let slots = c + usize::from(self.summary);
        let weight = self.params.get(Self::WEIGHT)?.data();
        let bias = self.params.get(Self::BIAS)?.data();
        let mut welch = Welch::new(self.spec.sample_rate_hz, ws);
        let mut data = vec![0.0; slots * windows * d];
        let mut powers = vec![0.0; nb];
        let mut z = vec![0.0; nb];
        let mut mean_z = vec![0.0; windows * nb];
        for ch in 0..c {
            let x = &epoch[ch * samples_per_epoch..(ch + 1) * samples_per_epoch];
            let w_ch = &weight[ch * nb * d..(ch + 1) * nb * d];
            for w in 0..windows {
                segment_band_powers(&mut welch, &x[w * ws..(w + 1) * ws], &self.bands, &mut powers);
                for (zi, &p) in z.iter_mut().zip(&powers) {
                    *zi = log_power_feature(p);
                }
                center(&mut z);
                for (m, &zi) in mean_z[w * nb..(w + 1) * nb].iter_mut().zip(&z) {
                    *m += zi / c as f64;
                }
                let off = (ch * windows + w) * d;
                Self::map(w_ch, bias, &z, &mut data[off..off + d]);
            }
        }
        if self.summary {
            let sw = self.params.get(Self::SUMMARY_WEIGHT)?.data();
            let sb = self.params.get(Self::SUMMARY_BIAS)?.data();
            for w in 0..windows {
                let off = (c * windows + w) * d;
                Self::map(sw, sb, &mean_z[w * nb..(w + 1) * nb], &mut data[off..off + d]);
            }
        }
        Ok(EpochEncoding { slots, windows, dim: d, data })
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }
}

pub type EncoderFactory = fn(&EncoderSpec) -> Result<Box<dyn EegEncoder>>;

/// Name-keyed encoder constructors.
pub struct EncoderRegistry {
    entries: BTreeMap<String, EncoderFactory>,
}

impl Default for EncoderRegistry {
    fn default() -> Self {
        let mut r = EncoderRegistry { entries: BTreeMap::new() };
        r.register("toy", |s| Ok(Box::new(ToyEncoder::new(s, false)?)));
        r.register("toy-cls", |s| Ok(Box::new(ToyEncoder::new(s, true)?)));
        r
    }
}

impl EncoderRegistry {
    pub fn register(&mut self, name: &str, factory: EncoderFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, spec: &EncoderSpec) -> Result<Box<dyn EegEncoder>> {
        let f = self.entries.get(name).ok_or_else(|| CoreError::UnknownStrategy {
            kind: "encoder",
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        f(spec)
    }
}

/// Checks that a recording's layout matches what the encoder was built for.
pub fn check_compatible(ep: &EpochedRecording, enc: &dyn EegEncoder) -> Result<()> {
    if ep.num_channels() != enc.num_channels() {
        return Err(CoreError::WidthMismatch {
            what: "encoder channels",
            expected: enc.num_channels(),
            got: ep.num_channels(),
        });
    }
    if (ep.sample_rate_hz - enc.sample_rate_hz()).abs() > 1e-9 {
        return Err(CoreError::Config(format!(
            "recording at {} Hz but encoder expects {} Hz",
            ep.sample_rate_hz,
            enc.sample_rate_hz()
        )));
    }
    Ok(())
}
