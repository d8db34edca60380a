//! Classic EDF reader and writer.
//!
//! Layout: a 256-byte fixed header, then 256 bytes per signal split into
//! field columns, then `records` data records holding `samples_per_record`
//! little-endian i16 values for each signal in turn.

use chrono::{NaiveDate, NaiveDateTime};

use crate::error::{Result, SignalError};
use crate::recording::EegRecording;

const FIXED_HEADER: usize = 256;
const PER_SIGNAL: usize = 256;

/// Per-signal header columns in file order: (name, width).
const SIGNAL_FIELDS: [(&str, usize); 10] = [
    ("label", 16),
    ("transducer", 80),
    ("physical_dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefiltering", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SignalHeader {
    pub label: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub samples_per_record: usize,
}

impl SignalHeader {
    fn is_annotation(&self) -> bool {
        self.label.trim() == "EDF Annotations"
    }

    /// Physical units per digital step.
    pub fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min) as f64
    }

    fn to_physical(&self, d: i16) -> f64 {
        (d as i32 - self.digital_min) as f64 * self.gain() + self.physical_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub patient: String,
    pub recording: String,
    pub start_time: NaiveDateTime,
    pub header_bytes: usize,
    pub reserved: String,
    pub records: usize,
    pub record_duration_s: f64,
    pub signals: Vec<SignalHeader>,
}

fn ascii(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).trim().to_string()
}

fn parse_num<T: std::str::FromStr>(field: &'static str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| SignalError::BadField { field, value: raw.to_string() })
}

fn parse_start(date: &str, time: &str) -> Result<NaiveDateTime> {
    let bad = |field, value: &str| SignalError::BadField { field, value: value.to_string() };
    let dp: Vec<u32> =
        date.split('.').map(|p| p.trim().parse().map_err(|_| bad("startdate", date))).collect::<Result<_>>()?;
    let tp: Vec<u32> =
        time.split('.').map(|p| p.trim().parse().map_err(|_| bad("starttime", time))).collect::<Result<_>>()?;
    if dp.len() != 3 || tp.len() != 3 {
        return Err(bad("startdate", date));
    }
    // EDF clipping date: yy 85..99 → 19yy, otherwise 20yy.
    let year = if dp[2] >= 85 { 1900 + dp[2] } else { 2000 + dp[2] } as i32;
    NaiveDate::from_ymd_opt(year, dp[1], dp[0])
        .and_then(|d| d.and_hms_opt(tp[0], tp[1], tp[2]))
        .ok_or_else(|| bad("startdate", date))
}

pub fn read_header(bytes: &[u8]) -> Result<EdfHeader> {
    if bytes.len() < FIXED_HEADER {
        return Err(SignalError::TruncatedHeader { needed: FIXED_HEADER, have: bytes.len() });
    }
    let f = |a: usize, b: usize| ascii(&bytes[a..b]);
    let version = f(0, 8);
    if version != "0" {
        return Err(SignalError::BadField { field: "version", value: version });
    }
    let patient = f(8, 88);
    let recording = f(88, 168);
    let start_time = parse_start(&f(168, 176), &f(176, 184))?;
    let header_bytes: usize = parse_num("header_bytes", &f(184, 192))?;
    let reserved = f(192, 236);
    let records_raw: i64 = parse_num("records", &f(236, 244))?;
    let record_duration_s: f64 = parse_num("record_duration", &f(244, 252))?;
    let ns: usize = parse_num("signal_count", &f(252, 256))?;

    let needed = FIXED_HEADER + ns * PER_SIGNAL;
    if bytes.len() < needed {
        return Err(SignalError::TruncatedHeader { needed, have: bytes.len() });
    }
    if header_bytes != needed {
        return Err(SignalError::BadField { field: "header_bytes", value: header_bytes.to_string() });
    }

    // Each field is stored as a column: ns values of `width` bytes.
    let mut columns: Vec<Vec<String>> = Vec::with_capacity(SIGNAL_FIELDS.len());
    let mut off = FIXED_HEADER;
    for (_, width) in SIGNAL_FIELDS {
        let col = (0..ns).map(|i| ascii(&bytes[off + i * width..off + (i + 1) * width])).collect();
        columns.push(col);
        off += ns * width;
    }
    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let sig = SignalHeader {
            label: columns[0][i].clone(),
            physical_dimension: columns[2][i].clone(),
            physical_min: parse_num("physical_min", &columns[3][i])?,
            physical_max: parse_num("physical_max", &columns[4][i])?,
            digital_min: parse_num("digital_min", &columns[5][i])?,
            digital_max: parse_num("digital_max", &columns[6][i])?,
            samples_per_record: parse_num("samples_per_record", &columns[8][i])?,
        };
        if sig.digital_max == sig.digital_min {
            return Err(SignalError::ZeroDigitalRange { signal: i, label: sig.label });
        }
        signals.push(sig);
    }

    let record_bytes: usize = signals.iter().map(|s| s.samples_per_record * 2).sum();
    let remaining = bytes.len() - needed;
    let records = if records_raw < 0 {
        // -1 marks an unfinished recording; infer from the payload.
        if record_bytes == 0 || !remaining.is_multiple_of(record_bytes) {
            return Err(SignalError::DataSizeMismatch { records: 0, record_bytes, remaining });
        }
        remaining / record_bytes
    } else {
        records_raw as usize
    };
    if records * record_bytes != remaining {
        return Err(SignalError::DataSizeMismatch { records, record_bytes, remaining });
    }

    Ok(EdfHeader { patient, recording, start_time, header_bytes, reserved, records, record_duration_s, signals })
}

fn unit_scale(dim: &str) -> f64 {
    match dim.trim().to_ascii_lowercase().as_str() {
        "mv" => 1e3,
        "v" => 1e6,
        "nv" => 1e-3,
        _ => 1.0,
    }
}

/// Parses a classic EDF (or continuous EDF+) byte stream.
pub fn read_edf(bytes: &[u8]) -> Result<EegRecording> {
    let header = read_header(bytes)?;
    if header.reserved.starts_with("EDF+D") {
        return Err(SignalError::Unsupported("discontinuous EDF+D records".into()));
    }
    let keep: Vec<usize> = (0..header.signals.len()).filter(|&i| !header.signals[i].is_annotation()).collect();
    let annotations_skipped = keep.len() != header.signals.len();

    let mut rates: Vec<f64> =
        keep.iter().map(|&i| header.signals[i].samples_per_record as f64 / header.record_duration_s).collect();
    rates.dedup();
    if rates.len() > 1 {
        return Err(SignalError::MixedSampleRates(rates));
    }
    let sample_rate_hz = match rates.first() {
        Some(&r) if r > 0.0 && r.is_finite() => r,
        Some(&r) => return Err(SignalError::BadField { field: "samples_per_record", value: r.to_string() }),
        // No signals: nominal one sample per record.
        None if header.record_duration_s > 0.0 => 1.0 / header.record_duration_s,
        None => 1.0,
    };

    let mut samples: Vec<Vec<f64>> =
        keep.iter().map(|&i| Vec::with_capacity(header.records * header.signals[i].samples_per_record)).collect();
    let mut pos = header.header_bytes;
    for _ in 0..header.records {
        let mut k = 0;
        for (i, sig) in header.signals.iter().enumerate() {
            let n = sig.samples_per_record;
            let raw = &bytes[pos..pos + 2 * n];
            pos += 2 * n;
            if keep.get(k) != Some(&i) {
                continue;
            }
            let scale = unit_scale(&sig.physical_dimension);
            samples[k].extend(raw.chunks_exact(2).map(|c| sig.to_physical(i16::from_le_bytes([c[0], c[1]])) * scale));
            k += 1;
        }
    }

    let channels = keep.iter().map(|&i| header.signals[i].label.clone()).collect();
    let patient_id = header.patient.split_whitespace().next().unwrap_or("").to_string();
    let mut rec = EegRecording::new(channels, sample_rate_hz, samples, header.start_time)?
        .with_ids(patient_id, header.recording.clone());
    rec.annotations_skipped = annotations_skipped;
    Ok(rec)
}

/// Largest (`up == false`) or smallest value not past `v` whose rendering
/// fits in `width` characters.
fn fit_bound(v: f64, width: usize, up: bool) -> f64 {
    for decimals in (0..=6).rev() {
        let p = 10f64.powi(decimals);
        let r = if up { (v * p).ceil() / p } else { (v * p).floor() / p };
        let s = fit_number(r, width);
        if let Ok(back) = s.parse::<f64>() {
            if (up && back >= v || !up && back <= v) && s.len() <= width {
                return back;
            }
        }
    }
    if up {
        v.ceil()
    } else {
        v.floor()
    }
}

/// Shortest decimal rendering of `v` that fits in `width` characters.
fn fit_number(v: f64, width: usize) -> String {
    for decimals in (0..=width).rev() {
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
        if s.len() <= width {
            return s;
        }
    }
    format!("{v:.0}")
}

fn pad(out: &mut Vec<u8>, s: &str, width: usize) {
    let mut b: Vec<u8> = s.bytes().filter(u8::is_ascii).take(width).collect();
    b.resize(width, b' ');
    out.extend_from_slice(&b);
}

/// Writes `rec` as classic EDF with 1 s records and the full i16 range.
///
/// The sample rate must be a whole number of samples per second. Physical
/// bounds are rendered first and quantization uses the rendered values, so
/// a read-back is exact to half a digital step.
pub fn write_edf(rec: &EegRecording) -> Result<Vec<u8>> {
    rec.validate()?;
    let spr = rec.sample_rate_hz.round();
    if (spr - rec.sample_rate_hz).abs() > 1e-9 {
        return Err(SignalError::InvalidParameter(format!(
            "EDF writer needs an integer sample rate, got {}",
            rec.sample_rate_hz
        )));
    }
    let spr = spr as usize;
    let n = rec.num_samples();
    if !n.is_multiple_of(spr) {
        return Err(SignalError::InvalidParameter(format!("{n} samples is not a whole number of 1 s records")));
    }
    let records = n / spr;
    let ns = rec.num_channels();
    let (dmin, dmax) = (i16::MIN as i32, i16::MAX as i32);

    let mut bounds = Vec::with_capacity(ns);
    for ch in &rec.samples {
        let lo = ch.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ch.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (-1.0, 1.0) };
        let margin = ((hi - lo).abs() * 1e-3).max(1e-3);
        let pmin = fit_bound(lo - margin, 8, false);
        let mut pmax = fit_bound(hi + margin, 8, true);
        if pmax <= pmin {
            pmax = pmin + 1.0;
        }
        bounds.push((pmin, pmax));
    }

    let mut out = Vec::with_capacity(FIXED_HEADER + ns * PER_SIGNAL + n * ns * 2);
    pad(&mut out, "0", 8);
    pad(&mut out, &format!("{} X X X", rec.patient_id), 80);
    pad(&mut out, &rec.session_id, 80);
    let t = rec.start_time;
    pad(&mut out, &t.format("%d.%m.%y").to_string(), 8);
    pad(&mut out, &t.format("%H.%M.%S").to_string(), 8);
    pad(&mut out, &(FIXED_HEADER + ns * PER_SIGNAL).to_string(), 8);
    pad(&mut out, "", 44);
    pad(&mut out, &records.to_string(), 8);
    pad(&mut out, "1", 8);
    pad(&mut out, &ns.to_string(), 4);

    for (field, width) in SIGNAL_FIELDS {
        for (i, label) in rec.channels.iter().enumerate() {
            let v = match field {
                "label" => label.clone(),
                "physical_dimension" => "uV".into(),
                "physical_min" => fit_number(bounds[i].0, 8),
                "physical_max" => fit_number(bounds[i].1, 8),
                "digital_min" => dmin.to_string(),
                "digital_max" => dmax.to_string(),
                "samples_per_record" => spr.to_string(),
                _ => String::new(),
            };
            pad(&mut out, &v, width);
        }
    }

    let steps = (dmax - dmin) as f64;
    for r in 0..records {
        for (ch, &(pmin, pmax)) in rec.samples.iter().zip(&bounds) {
            let gain = (pmax - pmin) / steps;
            for &v in &ch[r * spr..(r + 1) * spr] {
                let d = ((v - pmin) / gain).round() as i64 + dmin as i64;
                let d = d.clamp(dmin as i64, dmax as i64) as i16;
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_with_signals(ns: usize) -> Vec<u8> {
        let mut out = Vec::new();
        pad(&mut out, "0", 8);
        pad(&mut out, "P01 X X X", 80);
        pad(&mut out, "S01", 80);
        pad(&mut out, "02.03.21", 8);
        pad(&mut out, "04.05.06", 8);
        pad(&mut out, &(256 + ns * 256).to_string(), 8);
        pad(&mut out, "", 44);
        pad(&mut out, "0", 8);
        pad(&mut out, "1", 8);
        pad(&mut out, &ns.to_string(), 4);
        out
    }

    #[test]
    fn short_stream_is_truncated_header() {
        let err = read_edf(&[b'0'; 100]).unwrap_err();
        assert_eq!(err, SignalError::TruncatedHeader { needed: 256, have: 100 });
    }

    #[test]
    fn zero_signals_is_empty_recording() {
        let rec = read_edf(&header_with_signals(0)).unwrap();
        assert_eq!(rec.num_channels(), 0);
        assert_eq!(rec.patient_id, "P01");
        assert_eq!(rec.start_time, NaiveDate::from_ymd_opt(2021, 3, 2).unwrap().and_hms_opt(4, 5, 6).unwrap());
    }

    #[test]
    fn two_digit_years_follow_the_clipping_rule() {
        assert_eq!(parse_start("01.01.85", "00.00.00").unwrap().and_utc().format("%Y").to_string(), "1985");
        assert_eq!(parse_start("01.01.84", "00.00.00").unwrap().and_utc().format("%Y").to_string(), "2084");
    }

    #[test]
    fn fit_number_respects_width() {
        for v in [-1234.56789, 0.000123, 98765432.1, -3.0] {
            assert!(fit_number(v, 8).len() <= 8, "{v}");
        }
        assert_eq!(fit_number(-3.0, 8), "-3");
    }
}
