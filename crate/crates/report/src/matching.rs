//! Report-to-session pairing by patient and start-time window.

use chrono::{DateTime, Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{ReportError, Result};
use crate::split::SplitTag;

/// Parses `YYYY-MM-DDTHH:MM:SS` (space also accepted), optionally with a
/// `Z` or numeric offset, into naive UTC.
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let t = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Ok(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(t.trim_end_matches('Z'), fmt) {
            return Ok(dt);
        }
    }
    Err(ReportError::Timestamp(s.to_string()))
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub report_id: String,
    pub patient_id: String,
    pub timestamp: NaiveDateTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionInfo {
    pub session_id: String,
    pub patient_id: String,
    pub start_time: NaiveDateTime,
    pub duration_s: f64,
    pub eeg_path: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Single,
    MultiSession,
    NoSession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPair {
    pub report_id: String,
    pub patient_id: String,
    pub session_ids: Vec<String>,
    pub eeg_paths: Vec<String>,
    pub status: PairStatus,
    pub split: Option<SplitTag>,
}

impl BenchmarkPair {
    pub fn is_modeling(&self) -> bool {
        self.status == PairStatus::Single
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub window_hours: f64,
    /// Sessions longer than this never match.
    pub max_recording_seconds: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { window_hours: 24.0, max_recording_seconds: 10_000.0 }
    }
}

/// All reports with their candidate sessions; use [`modeling_pairs`] to keep
/// single-session pairs only.
pub fn match_report_to_sessions(
    reports: &[ReportMeta],
    sessions: &[SessionInfo],
    cfg: &MatchConfig,
) -> Vec<BenchmarkPair> {
    let window = Duration::milliseconds((cfg.window_hours * 3_600_000.0).round() as i64);
    reports
        .iter()
        .map(|r| {
            let hits: Vec<&SessionInfo> = sessions
                .iter()
                .filter(|s| {
                    s.patient_id == r.patient_id
                        && s.duration_s <= cfg.max_recording_seconds
                        && s.start_time <= r.timestamp
                        && s.start_time >= r.timestamp - window
                })
                .collect();
            let status = match hits.len() {
                0 => PairStatus::NoSession,
                1 => PairStatus::Single,
                _ => PairStatus::MultiSession,
            };
            BenchmarkPair {
                report_id: r.report_id.clone(),
                patient_id: r.patient_id.clone(),
                session_ids: hits.iter().map(|s| s.session_id.clone()).collect(),
                eeg_paths: hits.iter().map(|s| s.eeg_path.clone()).collect(),
                status,
                split: None,
            }
        })
        .collect()
}

pub fn modeling_pairs(pairs: &[BenchmarkPair]) -> Vec<BenchmarkPair> {
    pairs.iter().filter(|p| p.is_modeling()).cloned().collect()
}
