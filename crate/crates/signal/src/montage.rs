use crate::recording::EegRecording;

/// Canonical 22-channel 10-20 order.
pub const CANONICAL_CHANNELS: [&str; 22] = [
    "C3", "C4", "O1", "O2", "Cz", "F3", "F4", "F7", "F8", "Fz", "Fp1", "Fp2", "Fpz", "P3", "P4", "Pz", "T3", "T4",
    "T5", "T6", "A1", "A2",
];

/// Modern 10-10 names folded onto their 10-20 equivalents.
const ALIASES: [(&str, &str); 6] = [("T7", "T3"), ("T8", "T4"), ("P7", "T5"), ("P8", "T6"), ("M1", "A1"), ("M2", "A2")];

const REFERENCE_SUFFIXES: [&str; 4] = ["-REF", "-LE", "-AR", "-AVG"];

/// Canonical label for a raw channel name, if it is one of the 22.
pub fn canonical_label(raw: &str) -> Option<&'static str> {
    let mut s = raw.trim().to_ascii_uppercase();
    if let Some(rest) = s.strip_prefix("EEG ") {
        s = rest.trim().to_string();
    }
    for suf in REFERENCE_SUFFIXES {
        if let Some(rest) = s.strip_suffix(suf) {
            s = rest.trim().to_string();
            break;
        }
    }
    for (from, to) in ALIASES {
        if s == from {
            s = to.to_ascii_uppercase();
        }
    }
    CANONICAL_CHANNELS.iter().find(|c| c.to_ascii_uppercase() == s).copied()
}

/// Reorders to the canonical montage; absent channels become zeros and are
/// appended to `missing_channels`.
pub fn montage_map(rec: &EegRecording) -> EegRecording {
    let n = rec.num_samples();
    let mut samples = Vec::with_capacity(CANONICAL_CHANNELS.len());
    let mut missing = Vec::new();
    for &label in &CANONICAL_CHANNELS {
        let found = rec.channels.iter().position(|c| canonical_label(c) == Some(label));
        match found {
            Some(i) => samples.push(rec.samples[i].clone()),
            None => {
                samples.push(vec![0.0; n]);
                missing.push(label.to_string());
            }
        }
    }
    // A second pass sees canonical names; keep flags from the first.
    for m in &rec.missing_channels {
        if !missing.contains(m) {
            missing.push(m.clone());
        }
    }
    missing.sort_by_key(|m| CANONICAL_CHANNELS.iter().position(|c| c == m));
    let mut out = rec.map_samples(rec.sample_rate_hz, samples);
    out.channels = CANONICAL_CHANNELS.iter().map(|s| s.to_string()).collect();
    out.missing_channels = missing;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn rec(labels: &[&str]) -> EegRecording {
        let t0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let samples = (0..labels.len()).map(|i| vec![i as f64 + 1.0; 4]).collect();
        EegRecording::new(labels.iter().map(|s| s.to_string()).collect(), 200.0, samples, t0).unwrap()
    }

    #[test]
    fn label_normalization() {
        assert_eq!(canonical_label("FP1"), Some("Fp1"));
        assert_eq!(canonical_label("EEG FP2-REF"), Some("Fp2"));
        assert_eq!(canonical_label("t7"), Some("T3"));
        assert_eq!(canonical_label("EEG CZ-LE"), Some("Cz"));
        assert_eq!(canonical_label("ECG"), None);
    }

    #[test]
    fn canonical_input_is_identity() {
        let r = rec(&CANONICAL_CHANNELS);
        let m = montage_map(&r);
        assert_eq!(m, r);
        assert!(m.missing_channels.is_empty());
    }

    #[test]
    fn uppercase_alias_is_mapped() {
        let m = montage_map(&rec(&["FP1"]));
        assert_eq!(m.channel("Fp1").unwrap(), &[1.0; 4]);
        assert_eq!(m.missing_channels.len(), 21);
    }

    #[test]
    fn missing_ears_are_zero_filled() {
        let labels: Vec<&str> = CANONICAL_CHANNELS[..20].to_vec();
        let m = montage_map(&rec(&labels));
        assert_eq!(m.num_channels(), 22);
        assert_eq!(m.missing_channels, vec!["A1", "A2"]);
        assert_eq!(m.channel("A1").unwrap(), &[0.0; 4]);
    }

    #[test]
    fn idempotent() {
        let once = montage_map(&rec(&["EEG O2-REF", "t8", "Cz", "ECG"]));
        assert_eq!(montage_map(&once), once);
    }
}
