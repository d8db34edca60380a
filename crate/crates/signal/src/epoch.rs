use chrono::NaiveDateTime;

use crate::error::{Result, SignalError};
use crate::recording::EegRecording;

/// Non-overlapping fixed-length windows, stored `[N, C, T]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochedRecording {
    pub channels: Vec<String>,
    pub sample_rate_hz: f64,
    pub epoch_seconds: f64,
    pub num_epochs: usize,
    pub samples_per_epoch: usize,
    pub data: Vec<f64>,
    pub start_time: NaiveDateTime,
    pub patient_id: String,
    pub session_id: String,
    pub missing_channels: Vec<String>,
}

impl EpochedRecording {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.num_epochs, self.num_channels(), self.samples_per_epoch]
    }

    /// One epoch's channel-major block, length `C * T`.
    pub fn epoch(&self, n: usize) -> &[f64] {
        let stride = self.num_channels() * self.samples_per_epoch;
        &self.data[n * stride..(n + 1) * stride]
    }

    pub fn channel(&self, n: usize, c: usize) -> &[f64] {
        let t = self.samples_per_epoch;
        &self.epoch(n)[c * t..(c + 1) * t]
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.num_epochs * self.num_channels() * self.samples_per_epoch;
        if self.data.len() != expected {
            return Err(SignalError::InvalidRecording(format!(
                "epoch data has {} values, shape {:?} needs {expected}",
                self.data.len(),
                self.shape()
            )));
        }
        Ok(())
    }
}

/// Samples per epoch, requiring an exact integer.
pub fn samples_per_epoch(sample_rate_hz: f64, epoch_seconds: f64) -> Result<usize> {
    let t = sample_rate_hz * epoch_seconds;
    if !(epoch_seconds > 0.0) || (t - t.round()).abs() > 1e-9 || t.round() < 1.0 {
        return Err(SignalError::InvalidParameter(format!(
            "{epoch_seconds} s at {sample_rate_hz} Hz is not a whole number of samples"
        )));
    }
    Ok(t.round() as usize)
}

pub fn epoch(rec: &EegRecording, epoch_seconds: f64) -> Result<EpochedRecording> {
    rec.validate()?;
    let t = samples_per_epoch(rec.sample_rate_hz, epoch_seconds)?;
    let n = rec.num_samples() / t;
    if n == 0 {
        return Err(SignalError::TooShort { duration_s: rec.duration_seconds(), epoch_s: epoch_seconds });
    }
    let c = rec.num_channels();
    let mut data = Vec::with_capacity(n * c * t);
    for e in 0..n {
        for ch in &rec.samples {
            data.extend_from_slice(&ch[e * t..(e + 1) * t]);
        }
    }
    Ok(EpochedRecording {
        channels: rec.channels.clone(),
        sample_rate_hz: rec.sample_rate_hz,
        epoch_seconds,
        num_epochs: n,
        samples_per_epoch: t,
        data,
        start_time: rec.start_time,
        patient_id: rec.patient_id.clone(),
        session_id: rec.session_id.clone(),
        missing_channels: rec.missing_channels.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn flat(seconds: usize, channels: usize) -> EegRecording {
        let t0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let labels = (0..channels).map(|i| format!("ch{i}")).collect();
        let samples = (0..channels).map(|c| (0..seconds * 200).map(|i| (c * 1_000_000 + i) as f64).collect()).collect();
        EegRecording::new(labels, 200.0, samples, t0).unwrap()
    }

    #[test]
    fn floor_discards_partial_tail() {
        let ep = epoch(&flat(25, 2), 10.0).unwrap();
        assert_eq!(ep.shape(), [2, 2, 2000]);
        assert_eq!(ep.channel(1, 1)[0], 1_002_000.0);
    }

    #[test]
    fn exact_single_epoch() {
        assert_eq!(epoch(&flat(10, 1), 10.0).unwrap().num_epochs, 1);
    }

    #[test]
    fn too_short_errors() {
        assert!(matches!(epoch(&flat(9, 1), 10.0).unwrap_err(), SignalError::TooShort { .. }));
    }

    #[test]
    fn fractional_samples_rejected() {
        assert!(samples_per_epoch(256.0, 0.3).is_err());
        assert_eq!(samples_per_epoch(256.0, 0.5).unwrap(), 128);
    }
}
