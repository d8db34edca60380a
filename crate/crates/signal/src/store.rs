//! Epoch persistence: a tensor checkpoint plus a `key: value` sidecar.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use celm_tensor::{read_checkpoint, write_checkpoint, Tensor};
use chrono::NaiveDateTime;

use crate::epoch::EpochedRecording;
use crate::error::{Result, SignalError};

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
pub const EPOCHS_TENSOR: &str = "epochs";

#[derive(Debug, Clone, PartialEq)]
pub struct Sidecar {
    pub channels: Vec<String>,
    pub sample_rate_hz: f64,
    pub epoch_seconds: f64,
    pub epoch_count: usize,
    pub patient_id: String,
    pub session_id: String,
    pub start_time: NaiveDateTime,
    pub missing_channels: Vec<String>,
    /// Keys this version does not interpret, kept in order.
    pub extra: Vec<(String, String)>,
}

impl Sidecar {
    pub fn of(ep: &EpochedRecording) -> Self {
        Sidecar {
            channels: ep.channels.clone(),
            sample_rate_hz: ep.sample_rate_hz,
            epoch_seconds: ep.epoch_seconds,
            epoch_count: ep.num_epochs,
            patient_id: ep.patient_id.clone(),
            session_id: ep.session_id.clone(),
            start_time: ep.start_time,
            missing_channels: ep.missing_channels.clone(),
            extra: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: &str| {
            s.push_str(k);
            s.push_str(": ");
            s.push_str(v);
            s.push('\n');
        };
        line("channels", &self.channels.join(","));
        line("sample_rate_hz", &self.sample_rate_hz.to_string());
        line("epoch_seconds", &self.epoch_seconds.to_string());
        line("epoch_count", &self.epoch_count.to_string());
        line("patient_id", &self.patient_id);
        line("session_id", &self.session_id);
        line("start_time", &self.start_time.format(TIME_FORMAT).to_string());
        line("missing_channels", &self.missing_channels.join(","));
        for (k, v) in &self.extra {
            line(k, v);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let (k, v) =
                raw.split_once(':').ok_or_else(|| SignalError::Sidecar(format!("line {}: missing `:`", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let take = |key: &str| -> Result<String> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| SignalError::Sidecar(format!("missing key `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            take(key)?.parse().map_err(|_| SignalError::Sidecar(format!("`{key}` is not a number")))
        };
        let list = |v: String| -> Vec<String> {
            v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
        };
        const KNOWN: [&str; 8] = [
            "channels",
            "sample_rate_hz",
            "epoch_seconds",
            "epoch_count",
            "patient_id",
            "session_id",
            "start_time",
            "missing_channels",
        ];
        Ok(Sidecar {
            channels: list(take("channels")?),
            sample_rate_hz: num("sample_rate_hz")?,
            epoch_seconds: num("epoch_seconds")?,
            epoch_count: take("epoch_count")?
                .parse()
                .map_err(|_| SignalError::Sidecar("`epoch_count` is not an integer".into()))?,
            patient_id: take("patient_id")?,
            session_id: take("session_id")?,
            start_time: NaiveDateTime::parse_from_str(&take("start_time")?, TIME_FORMAT)
                .map_err(|e| SignalError::Sidecar(format!("start_time: {e}")))?,
            missing_channels: list(take("missing_channels").unwrap_or_default()),
            extra: pairs.iter().filter(|(k, _)| !KNOWN.contains(&k.as_str())).cloned().collect(),
        })
    }
}

/// `<stem>.ckpt` and `<stem>.meta` next to each other.
pub fn epoch_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("ckpt"), stem.with_extension("meta"))
}

pub fn save_epochs(ep: &EpochedRecording, stem: &Path) -> Result<()> {
    ep.validate()?;
    let (ckpt, meta) = epoch_paths(stem);
    let t = Tensor::new(ep.shape().to_vec(), ep.data.clone())?;
    let mut w = BufWriter::new(fs::File::create(&ckpt)?);
    write_checkpoint(&mut w, [(EPOCHS_TENSOR, &t)])?;
    drop(w);
    fs::write(meta, Sidecar::of(ep).render())?;
    Ok(())
}

pub fn load_epochs(stem: &Path) -> Result<(EpochedRecording, Sidecar)> {
    let (ckpt, meta) = epoch_paths(stem);
    let side = Sidecar::parse(&fs::read_to_string(meta)?)?;
    let tensors = read_checkpoint(BufReader::new(fs::File::open(ckpt)?))?;
    let (_, t) = tensors
        .into_iter()
        .find(|(n, _)| n == EPOCHS_TENSOR)
        .ok_or_else(|| SignalError::Sidecar(format!("checkpoint lacks `{EPOCHS_TENSOR}`")))?;
    let shape = t.shape().to_vec();
    if shape.len() != 3 || shape[0] != side.epoch_count || shape[1] != side.channels.len() {
        return Err(SignalError::Sidecar(format!(
            "tensor shape {shape:?} disagrees with sidecar ({} epochs, {} channels)",
            side.epoch_count,
            side.channels.len()
        )));
    }
    let ep = EpochedRecording {
        channels: side.channels.clone(),
        sample_rate_hz: side.sample_rate_hz,
        epoch_seconds: side.epoch_seconds,
        num_epochs: shape[0],
        samples_per_epoch: shape[2],
        data: t.into_data(),
        start_time: side.start_time,
        patient_id: side.patient_id.clone(),
        session_id: side.session_id.clone(),
        missing_channels: side.missing_channels.clone(),
    };
    Ok((ep, side))
}
