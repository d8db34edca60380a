//! Welch power spectral density and band-power features.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::epoch::EpochedRecording;
use crate::error::{Result, SignalError};

pub const POWER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub name: String,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl Band {
    pub fn new(name: &str, lo_hz: f64, hi_hz: f64) -> Self {
        Band { name: name.to_string(), lo_hz, hi_hz }
    }
}

/// Delta, theta, alpha, beta and gamma with the given alpha upper edge.
pub fn standard_bands(alpha_hi_hz: f64) -> Vec<Band> {
    vec![
        Band::new("delta", 0.5, 4.0),
        Band::new("theta", 4.0, 8.0),
        Band::new("alpha", 8.0, alpha_hi_hz),
        Band::new("beta", alpha_hi_hz, 30.0),
        Band::new("gamma", 30.0, 80.0),
    ]
}

pub fn default_bands() -> Vec<Band> {
    standard_bands(13.0)
}

fn validate_bands(bands: &[Band]) -> Result<()> {
    if bands.len() != 5 {
        return Err(SignalError::InvalidParameter(format!("expected five bands, got {}", bands.len())));
    }
    for b in bands {
        if !(b.lo_hz >= 0.0 && b.lo_hz < b.hi_hz) {
            return Err(SignalError::InvalidParameter(format!("band {} has edges {}..{}", b.name, b.lo_hz, b.hi_hz)));
        }
    }
    Ok(())
}

/// Reusable one-sided PSD estimator for a fixed segment length.
pub struct Welch {
    fs: f64,
    nperseg: usize,
    window: Vec<f64>,
    scale: f64,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl Welch {
    /// Periodic Hann of `nperseg` samples with density scaling.
    pub fn new(fs: f64, nperseg: usize) -> Self {
        let window: Vec<f64> = (0..nperseg).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / nperseg as f64).cos()).collect();
        let wss: f64 = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(nperseg);
        Welch { fs, nperseg, scale: 1.0 / (fs * wss), window, fft, buf: vec![Complex::new(0.0, 0.0); nperseg] }
    }

    pub fn nperseg(&self) -> usize {
        self.nperseg
    }

    pub fn df(&self) -> f64 {
        self.fs / self.nperseg as f64
    }

    pub fn num_bins(&self) -> usize {
        self.nperseg / 2 + 1
    }

    /// Mean-detrended, windowed periodogram of one segment added into `acc`.
    fn accumulate_segment(&mut self, seg: &[f64], acc: &mut [f64]) {
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        for ((b, &x), &w) in self.buf.iter_mut().zip(seg).zip(&self.window) {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        self.fft.process(&mut self.buf);
        let n = self.nperseg;
        for (k, a) in acc.iter_mut().enumerate() {
            let mut p = self.buf[k].norm_sqr() * self.scale;
            let is_nyquist = n.is_multiple_of(2) && k == n / 2;
            if k != 0 && !is_nyquist {
                p *= 2.0;
            }
            *a += p;
        }
    }

    /// Averaged PSD over 50%-overlapping segments of `x`.
    pub fn psd(&mut self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.num_bins()];
        let step = (self.nperseg / 2).max(1);
        let mut count = 0;
        let mut start = 0;
        while start + self.nperseg <= x.len() {
            self.accumulate_segment(&x[start..start + self.nperseg], &mut acc);
            count += 1;
            start += step;
        }
        if count > 0 {
            acc.iter_mut().for_each(|a| *a /= count as f64);
        }
        acc
    }

    /// Linear power `Σ psd · df` over bins with `lo <= f < hi`.
    pub fn band_power(&self, psd: &[f64], lo_hz: f64, hi_hz: f64) -> f64 {
        let df = self.df();
        psd.iter()
            .enumerate()
            .filter(|&(k, _)| {
                let f = k as f64 * df;
                f >= lo_hz && f < hi_hz
            })
            .map(|(_, p)| p * df)
            .sum()
    }
}

/// Band powers in dB laid out `[group, channel, band]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPowerFeatures {
    pub bands: Vec<Band>,
    pub num_groups: usize,
    pub num_channels: usize,
    pub values_db: Vec<f64>,
    /// Bands whose upper edge was clipped to Nyquist.
    pub truncated: Vec<String>,
    pub pool_epochs: usize,
}

impl BandPowerFeatures {
    pub fn get(&self, group: usize, channel: usize, band: usize) -> f64 {
        self.values_db[(group * self.num_channels + channel) * self.bands.len() + band]
    }
}

pub fn floor_db() -> f64 {
    10.0 * POWER_FLOOR.log10()
}

pub fn to_db(power: f64) -> f64 {
    10.0 * power.max(POWER_FLOOR).log10()
}

/// Welch band powers with 2 s Hann segments, pooling `pool_epochs`
/// consecutive epochs per group. The final group may hold fewer epochs.
pub fn welch_band_power(ep: &EpochedRecording, pool_epochs: usize, bands: &[Band]) -> Result<BandPowerFeatures> {
    ep.validate()?;
    validate_bands(bands)?;
    if pool_epochs == 0 {
        return Err(SignalError::InvalidParameter("pool_epochs must be ≥ 1".into()));
    }
    let fs = ep.sample_rate_hz;
    let nyquist = fs / 2.0;
    let mut truncated = Vec::new();
    let edges: Vec<(f64, f64)> = bands
        .iter()
        .map(|b| {
            if b.hi_hz > nyquist {
                truncated.push(b.name.clone());
                // Inclusive of the Nyquist bin.
                (b.lo_hz, nyquist + 1e-9)
            } else {
                (b.lo_hz, b.hi_hz)
            }
        })
        .collect();

    let t = ep.samples_per_epoch;
    let seg = ((2.0 * fs).round() as usize).max(1);
    let c = ep.num_channels();
    let num_groups = ep.num_epochs.div_ceil(pool_epochs);
    let mut values_db = Vec::with_capacity(num_groups * c * bands.len());
    let mut estimators: Vec<(usize, Welch)> = Vec::new();
    let mut joined = Vec::new();
    for g in 0..num_groups {
        let first = g * pool_epochs;
        let last = (first + pool_epochs).min(ep.num_epochs);
        let len = (last - first) * t;
        // Signals shorter than one segment use a single full-length window.
        let nperseg = seg.min(len);
        let idx = match estimators.iter().position(|(n, _)| *n == nperseg) {
            Some(i) => i,
            None => {
                estimators.push((nperseg, Welch::new(fs, nperseg)));
                estimators.len() - 1
            }
        };
        let welch = &mut estimators[idx].1;
        for ch in 0..c {
            joined.clear();
            for e in first..last {
                joined.extend_from_slice(ep.channel(e, ch));
            }
            let psd = welch.psd(&joined);
            for &(lo, hi) in &edges {
                values_db.push(to_db(welch.band_power(&psd, lo, hi)));
            }
        }
    }
    Ok(BandPowerFeatures { bands: bands.to_vec(), num_groups, num_channels: c, values_db, truncated, pool_epochs })
}

/// Linear band powers of one Hann-windowed segment, written into `out`.
pub fn segment_band_powers(welch: &mut Welch, x: &[f64], bands: &[Band], out: &mut [f64]) {
    let psd = welch.psd(x);
    for (o, b) in out.iter_mut().zip(bands) {
        *o = welch.band_power(&psd, b.lo_hz, b.hi_hz);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_noise_density_level() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..20_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut w = Welch::new(100.0, 200);
        let psd = w.psd(&x);
        // Variance 1/3 spread over 50 Hz one-sided.
        let mean: f64 = psd[5..95].iter().sum::<f64>() / 90.0;
        assert!((mean - 1.0 / 150.0).abs() < 0.05 / 150.0, "{mean}");
    }

    #[test]
    fn rejects_bad_band_table() {
        assert!(validate_bands(&default_bands()[..4]).is_err());
        let mut b = default_bands();
        b[2].hi_hz = 8.0;
        assert!(validate_bands(&b).is_err());
    }

    #[test]
    fn floor_constant() {
        assert_eq!(floor_db(), -120.0);
        assert_eq!(to_db(0.0), -120.0);
    }
}
