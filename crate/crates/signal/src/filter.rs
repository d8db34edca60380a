//! Zero-phase IIR filtering with cascaded biquads.

use std::f64::consts::PI;

use crate::error::{Result, SignalError};
use crate::recording::EegRecording;

/// Normalized biquad, `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn from_raw(b: [f64; 3], a: [f64; 3]) -> Self {
        Biquad { b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]], a: [a[1] / a[0], a[2] / a[0]] }
    }

    pub fn lowpass(fs: f64, f0: f64, q: f64) -> Self {
        let w = 2.0 * PI * f0 / fs;
        let (s, c) = w.sin_cos();
        let alpha = s / (2.0 * q);
        Self::from_raw([(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0], [1.0 + alpha, -2.0 * c, 1.0 - alpha])
    }

    pub fn highpass(fs: f64, f0: f64, q: f64) -> Self {
        let w = 2.0 * PI * f0 / fs;
        let (s, c) = w.sin_cos();
        let alpha = s / (2.0 * q);
        Self::from_raw([(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0], [1.0 + alpha, -2.0 * c, 1.0 - alpha])
    }

    pub fn notch(fs: f64, f0: f64, q: f64) -> Self {
        let w = 2.0 * PI * f0 / fs;
        let (s, c) = w.sin_cos();
        let alpha = s / (2.0 * q);
        Self::from_raw([1.0, -2.0 * c, 1.0], [1.0 + alpha, -2.0 * c, 1.0 - alpha])
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct-form II state for a constant input `x0`.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let y = self.dc_gain() * x0;
        let s2 = self.b[2] * x0 - self.a[1] * y;
        let s1 = y - self.b[0] * x0;
        [s1, s2]
    }

    fn run(&self, x: &mut [f64], mut s: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let xin = *v;
            let y = b0 * xin + s[0];
            s[0] = b1 * xin - a1 * y + s[1];
            s[1] = b2 * xin - a2 * y;
            *v = y;
        }
    }

    /// Complex response magnitude at `f` Hz.
    pub fn magnitude(&self, fs: f64, f: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let z1 = (w.cos(), -w.sin());
        let z2 = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (self.b[0] + self.b[1] * z1.0 + self.b[2] * z2.0, self.b[1] * z1.1 + self.b[2] * z2.1);
        let den = (1.0 + self.a[0] * z1.0 + self.a[1] * z2.0, self.a[0] * z1.1 + self.a[1] * z2.1);
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

/// Q of each biquad in an even-order Butterworth cascade.
pub fn butterworth_qs(order: usize) -> Vec<f64> {
    (1..=order / 2)
        .map(|k| {
            let theta = PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            -1.0 / (2.0 * theta.cos())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    pub fn magnitude(&self, fs: f64, f: f64) -> f64 {
        self.sections.iter().map(|s| s.magnitude(fs, f)).product()
    }

    fn pass(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let mut level = x0;
        for s in &self.sections {
            let zi = s.steady_state(level);
            level *= s.dc_gain();
            s.run(x, zi);
        }
    }

    /// Forward then backward pass over an odd-reflection padded copy.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (x[0], x[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));
        self.pass(&mut ext);
        ext.reverse();
        self.pass(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    /// `None` disables the notch.
    pub notch_hz: Option<f64>,
    pub order: usize,
    pub notch_q: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { low_hz: 0.1, high_hz: 75.0, notch_hz: Some(60.0), order: 4, notch_q: 30.0 }
    }
}

impl FilterConfig {
    pub fn design(&self, fs: f64) -> Result<SosFilter> {
        let nyquist = fs / 2.0;
        if !(self.low_hz > 0.0) || self.low_hz >= self.high_hz {
            return Err(SignalError::InvalidParameter(format!(
                "band {}..{} Hz must satisfy 0 < low < high",
                self.low_hz, self.high_hz
            )));
        }
        if self.order == 0 || !self.order.is_multiple_of(2) {
            return Err(SignalError::InvalidParameter(format!(
                "filter order {} must be even and positive",
                self.order
            )));
        }
        if self.high_hz >= nyquist {
            return Err(SignalError::SampleRateTooLow {
                rate_hz: fs,
                nyquist,
                what: format!("low-pass edge {} Hz", self.high_hz),
            });
        }
        let qs = butterworth_qs(self.order);
        let mut sections: Vec<Biquad> = qs.iter().map(|&q| Biquad::highpass(fs, self.low_hz, q)).collect();
        sections.extend(qs.iter().map(|&q| Biquad::lowpass(fs, self.high_hz, q)));
        if let Some(f0) = self.notch_hz {
            if f0 >= nyquist {
                return Err(SignalError::SampleRateTooLow { rate_hz: fs, nyquist, what: format!("notch {f0} Hz") });
            }
            sections.push(Biquad::notch(fs, f0, self.notch_q));
        }
        Ok(SosFilter { sections })
    }
}

/// Band-pass plus optional notch, zero phase, per channel.
pub fn bandpass_notch(rec: &EegRecording, cfg: &FilterConfig) -> Result<EegRecording> {
    rec.validate()?;
    let sos = cfg.design(rec.sample_rate_hz)?;
    let samples = rec.samples.iter().map(|ch| sos.filtfilt(ch)).collect();
    Ok(rec.map_samples(rec.sample_rate_hz, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn butterworth_fourth_order_qs() {
        let qs = butterworth_qs(4);
        assert!((qs[0] - 1.306_562_964_876_376_6).abs() < 1e-12);
        assert!((qs[1] - 0.541_196_100_146_197).abs() < 1e-12);
    }

    #[test]
    fn butterworth_half_power_at_cutoff() {
        let fs = 256.0;
        let lp = SosFilter { sections: butterworth_qs(4).into_iter().map(|q| Biquad::lowpass(fs, 30.0, q)).collect() };
        assert!((lp.magnitude(fs, 30.0) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!((lp.magnitude(fs, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steady_state_keeps_constant_input_constant() {
        let s = Biquad::lowpass(200.0, 20.0, 0.7);
        let mut x = vec![3.0; 50];
        s.run(&mut x, s.steady_state(3.0));
        assert!(x.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_band_above_nyquist() {
        let err = FilterConfig::default().design(100.0).unwrap_err();
        assert!(matches!(err, SignalError::SampleRateTooLow { .. }));
    }

    #[test]
    fn filtfilt_preserves_length() {
        let sos = FilterConfig::default().design(256.0).unwrap();
        for n in [0, 1, 2, 7, 300] {
            assert_eq!(sos.filtfilt(&vec![1.0; n]).len(), n);
        }
    }
}
