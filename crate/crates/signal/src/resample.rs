//! Band-limited resampling with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use crate::error::{Result, SignalError};
use crate::recording::EegRecording;

/// Kernel cutoff as a fraction of the lower Nyquist rate.
const CUTOFF_FRACTION: f64 = 0.8;
/// Zero crossings of the sinc on each side of the centre.
const HALF_ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 8.0;

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resamples one channel from `from_hz` to `to_hz`.
pub fn resample_channel(x: &[f64], from_hz: f64, to_hz: f64) -> Vec<f64> {
    if (from_hz - to_hz).abs() < 1e-12 {
        return x.to_vec();
    }
    let n = x.len();
    let n_out = (n as f64 * to_hz / from_hz).round() as usize;
    if n == 0 || n_out == 0 {
        return vec![0.0; n_out];
    }
    // Cutoff in cycles per input sample.
    let fc = CUTOFF_FRACTION * 0.5 * from_hz.min(to_hz) / from_hz;
    let half_width = HALF_ZERO_CROSSINGS / (2.0 * fc);
    let reach = half_width.ceil() as isize;
    let i0_beta = bessel_i0(KAISER_BETA);

    let at = |i: isize| -> f64 {
        // Odd reflection about each end keeps value and slope continuous.
        let last = n as isize - 1;
        if i < 0 {
            let j = (-i).min(last) as usize;
            2.0 * x[0] - x[j]
        } else if i > last {
            let j = (2 * last - i).max(0) as usize;
            2.0 * x[n - 1] - x[j]
        } else {
            x[i as usize]
        }
    };

    let step = from_hz / to_hz;
    let mut out = Vec::with_capacity(n_out);
    let mut taps = Vec::with_capacity(2 * reach as usize + 2);
    for j in 0..n_out {
        let u = j as f64 * step;
        let centre = u.floor() as isize;
        taps.clear();
        let mut norm = 0.0;
        for i in centre - reach..=centre + reach + 1 {
            let d = u - i as f64;
            let r = d / half_width;
            if r.abs() >= 1.0 {
                taps.push((i, 0.0));
                continue;
            }
            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta;
            let h = sinc(2.0 * fc * d) * w;
            norm += h;
            taps.push((i, h));
        }
        let acc: f64 = taps.iter().map(|&(i, h)| h * at(i)).sum();
        out.push(acc / norm);
    }
    out
}

pub fn resample(rec: &EegRecording, target_hz: f64) -> Result<EegRecording> {
    rec.validate()?;
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(SignalError::InvalidParameter(format!("target rate {target_hz} must be positive")));
    }
    let samples = rec.samples.iter().map(|ch| resample_channel(ch, rec.sample_rate_hz, target_hz)).collect();
    Ok(rec.map_samples(target_hz, samples))
}
