use std::collections::HashSet;

use chrono::NaiveDateTime;

use crate::error::{Result, SignalError};

/// Multichannel EEG in microvolts, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EegRecording {
    pub channels: Vec<String>,
    pub sample_rate_hz: f64,
    pub samples: Vec<Vec<f64>>,
    /// UTC; EDF carries no zone so it is taken as already normalized.
    pub start_time: NaiveDateTime,
    pub patient_id: String,
    pub session_id: String,
    /// Canonical channels that were absent and zero-filled by the montage.
    pub missing_channels: Vec<String>,
    /// Set when EDF+ annotation signals were dropped on read.
    pub annotations_skipped: bool,
}

impl EegRecording {
    pub fn new(
        channels: Vec<String>,
        sample_rate_hz: f64,
        samples: Vec<Vec<f64>>,
        start_time: NaiveDateTime,
    ) -> Result<Self> {
        let rec = EegRecording {
            channels,
            sample_rate_hz,
            samples,
            start_time,
            patient_id: String::new(),
            session_id: String::new(),
            missing_channels: Vec::new(),
            annotations_skipped: false,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn with_ids(mut self, patient_id: impl Into<String>, session_id: impl Into<String>) -> Self {
        self.patient_id = patient_id.into();
        self.session_id = session_id.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(SignalError::InvalidRecording(format!("sample rate {} must be positive", self.sample_rate_hz)));
        }
        if self.channels.len() != self.samples.len() {
            return Err(SignalError::InvalidRecording(format!(
                "{} labels for {} channels",
                self.channels.len(),
                self.samples.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.channels {
            if !seen.insert(c.as_str()) {
                return Err(SignalError::InvalidRecording(format!("duplicate label `{c}`")));
            }
        }
        if let Some(first) = self.samples.first() {
            if self.samples.iter().any(|s| s.len() != first.len()) {
                return Err(SignalError::InvalidRecording("channels have different lengths".into()));
            }
        }
        Ok(())
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn num_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration_seconds(&self) -> f64 {
        self.num_samples() as f64 / self.sample_rate_hz
    }

    pub fn channel(&self, label: &str) -> Option<&[f64]> {
        self.channels.iter().position(|c| c == label).map(|i| self.samples[i].as_slice())
    }

    /// Same metadata, new per-channel data and rate.
    pub(crate) fn map_samples(&self, sample_rate_hz: f64, samples: Vec<Vec<f64>>) -> Self {
        EegRecording {
            channels: self.channels.clone(),
            sample_rate_hz,
            samples,
            start_time: self.start_time,
            patient_id: self.patient_id.clone(),
            session_id: self.session_id.clone(),
            missing_channels: self.missing_channels.clone(),
            annotations_skipped: self.annotations_skipped,
        }
    }
}
