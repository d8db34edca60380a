//! Synthetic paired corpora: pink-noise EEG with injected spectral events
//! and reports that are a deterministic function of the injected events.

use std::f64::consts::PI;

use celm_signal::{EpochedRecording, CANONICAL_CHANNELS};
use chrono::{Duration, NaiveDate};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::Config;
use crate::error::{HarnessError, Result};

/// A named narrow-band event and the report phrase it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub name: String,
    pub freq_hz: f64,
    pub channels: Vec<String>,
    pub amplitude_uv: f64,
    pub probability: f64,
    pub phrase: String,
}

impl EventSpec {
    fn new(name: &str, freq_hz: f64, channels: &[&str], amplitude_uv: f64, phrase: &str) -> Self {
        EventSpec {
            name: name.into(),
            freq_hz,
            channels: channels.iter().map(|c| c.to_string()).collect(),
            amplitude_uv,
            probability: 0.35,
            phrase: phrase.into(),
        }
    }
}

pub fn default_catalog() -> Vec<EventSpec> {
    vec![
        EventSpec::new(
            "posterior_alpha",
            10.0,
            &["O1", "O2", "P3", "P4", "Pz"],
            30.0,
            "well formed posterior alpha rhythm.",
        ),
        EventSpec::new(
            "left_temporal_theta",
            6.0,
            &["T3", "T5", "F7"],
            35.0,
            "intermittent left temporal theta slowing.",
        ),
        EventSpec::new("right_delta", 2.0, &["T4", "T6", "F8"], 45.0, "focal right hemisphere delta activity."),
        EventSpec::new("frontal_beta", 20.0, &["Fp1", "Fp2", "F3", "F4", "Fz"], 20.0, "excess frontal beta activity."),
        EventSpec::new("central_gamma", 40.0, &["C3", "C4", "Cz"], 15.0, "central fast activity noted."),
    ]
}

pub const DEFAULT_NORMAL_PHRASE: &str = "no abnormal findings.";

const CONTEXT_TEMPLATES: [&str; 3] = [
    "{age} year old {sex} with {complaint}.",
    "referred for {complaint}, {age} year old {sex}.",
    "{sex} patient, age {age}, history of {complaint}.",
];
const SEXES: [&str; 2] = ["male", "female"];
const COMPLAINTS: [&str; 6] =
    ["new onset seizure", "syncope", "headache", "altered mental status", "memory complaints", "staring spells"];
const AGE_RANGE: (u32, u32) = (18, 85);

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_pairs: usize,
    /// Train, validation and test counts, in corpus order.
    pub split: [usize; 3],
    pub epochs_min: usize,
    pub epochs_max: usize,
    pub epoch_seconds: usize,
    pub sample_rate_hz: usize,
    /// Standard deviation of the pink background per channel.
    pub noise_uv: f64,
    /// Fraction of a recording's epochs covered by each present event.
    pub coverage_min: f64,
    pub coverage_max: f64,
    pub catalog: Vec<EventSpec>,
    pub normal_phrase: String,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_pairs: 300,
            split: [200, 50, 50],
            epochs_min: 30,
            epochs_max: 30,
            epoch_seconds: 10,
            sample_rate_hz: 200,
            noise_uv: 20.0,
            coverage_min: 0.3,
            coverage_max: 0.7,
            catalog: default_catalog(),
            normal_phrase: DEFAULT_NORMAL_PHRASE.into(),
            seed: 0,
        }
    }
}

const SYNTH_KEYS: &[&str] = &[
    "n_pairs",
    "train",
    "val",
    "test",
    "epochs_min",
    "epochs_max",
    "epoch_seconds",
    "sample_rate_hz",
    "noise_uv",
    "coverage_min",
    "coverage_max",
    "normal_phrase",
    "default_catalog",
    "edf_count",
];
const EVENT_KEYS: &[&str] = &["freq_hz", "channels", "amplitude_uv", "probability", "phrase"];

impl SyntheticSpec {
    /// Reads `[synth]` and one `[event.NAME]` section per catalog event.
    /// Listed events replace the default catalog unless `default_catalog`
    /// says otherwise; `default_catalog = false` with no events is an empty
    /// catalog.
    pub fn from_config(cfg: &Config, seed: u64) -> Result<Self> {
        let s = "synth";
        cfg.check_keys(s, SYNTH_KEYS)?;
        let d = SyntheticSpec::default();
        let split =
            [cfg.value(s, "train", d.split[0])?, cfg.value(s, "val", d.split[1])?, cfg.value(s, "test", d.split[2])?];
        let names: Vec<&str> = cfg.sections_with_prefix("event.").collect();
        let mut catalog =
            if cfg.value(s, "default_catalog", names.is_empty())? { default_catalog() } else { Vec::new() };
        for sec in names {
            cfg.check_keys(sec, EVENT_KEYS)?;
            catalog.push(EventSpec {
                name: sec.trim_start_matches("event.").to_string(),
                freq_hz: cfg
                    .require(sec, "freq_hz")?
                    .parse()
                    .map_err(|_| HarnessError::Config(format!("[{sec}] freq_hz is not a number")))?,
                channels: cfg.list(sec, "channels").unwrap_or_default(),
                amplitude_uv: cfg.value(sec, "amplitude_uv", 30.0)?,
                probability: cfg.value(sec, "probability", 0.35)?,
                phrase: cfg.require(sec, "phrase")?.to_string(),
            });
        }
        let spec = SyntheticSpec {
            n_pairs: cfg.value(s, "n_pairs", split.iter().sum())?,
            split,
            epochs_min: cfg.value(s, "epochs_min", d.epochs_min)?,
            epochs_max: cfg.value(s, "epochs_max", d.epochs_max)?,
            epoch_seconds: cfg.value(s, "epoch_seconds", d.epoch_seconds)?,
            sample_rate_hz: cfg.value(s, "sample_rate_hz", d.sample_rate_hz)?,
            noise_uv: cfg.value(s, "noise_uv", d.noise_uv)?,
            coverage_min: cfg.value(s, "coverage_min", d.coverage_min)?,
            coverage_max: cfg.value(s, "coverage_max", d.coverage_max)?,
            catalog,
            normal_phrase: cfg.string(s, "normal_phrase", &d.normal_phrase),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.catalog.is_empty() {
            return bad("event catalog is empty".into());
        }
        if self.n_pairs == 0 || self.split.iter().sum::<usize>() != self.n_pairs {
            return bad(format!("split {:?} must sum to n_pairs {}", self.split, self.n_pairs));
        }
        if self.epochs_min == 0 || self.epochs_min > self.epochs_max {
            return bad(format!("epoch range {}..={} is empty", self.epochs_min, self.epochs_max));
        }
        if self.epoch_seconds == 0 || self.sample_rate_hz == 0 {
            return bad("epoch length and sample rate must be positive".into());
        }
        if !(0.0 < self.coverage_min && self.coverage_min <= self.coverage_max && self.coverage_max <= 1.0) {
            return bad(format!("coverage {}..{} outside (0, 1]", self.coverage_min, self.coverage_max));
        }
        if !(self.noise_uv > 0.0) {
            return bad("noise level must be positive".into());
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        let mut phrases = vec![self.normal_phrase.as_str()];
        for e in &self.catalog {
            if !(0.0..=1.0).contains(&e.probability) {
                return bad(format!("event {} probability {} outside [0, 1]", e.name, e.probability));
            }
            if !(e.freq_hz > 0.0 && e.freq_hz < nyquist) {
                return bad(format!("event {} frequency {} Hz outside (0, {nyquist})", e.name, e.freq_hz));
            }
            if e.channels.is_empty() {
                return bad(format!("event {} has no channels", e.name));
            }
            for c in &e.channels {
                if !CANONICAL_CHANNELS.contains(&c.as_str()) {
                    return bad(format!("event {} uses unknown channel {c}", e.name));
                }
            }
            if phrases.contains(&e.phrase.as_str()) {
                return bad(format!("phrase `{}` is not unique", e.phrase));
            }
            phrases.push(&e.phrase);
        }
        Ok(())
    }

    /// Every string synthesized text can draw words from, so a vocabulary
    /// built over it covers all generated reports and contexts.
    pub fn lexicon_texts(&self) -> Vec<String> {
        let mut out: Vec<String> = self.catalog.iter().map(|e| e.phrase.clone()).collect();
        out.push(self.normal_phrase.clone());
        out.extend(CONTEXT_TEMPLATES.iter().map(|t| t.replace(['{', '}'], " ")));
        out.extend(SEXES.iter().map(|s| s.to_string()));
        out.extend(COMPLAINTS.iter().map(|s| s.to_string()));
        out.push((AGE_RANGE.0..=AGE_RANGE.1).map(|a| a.to_string()).collect::<Vec<_>>().join(" "));
        out
    }

    pub fn split_of(&self, index: usize) -> &'static str {
        if index < self.split[0] {
            "train"
        } else if index < self.split[0] + self.split[1] {
            "val"
        } else {
            "test"
        }
    }
}

/// One synthesized recording with its report and context string.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthItem {
    pub id: String,
    pub split: &'static str,
    pub recording: EpochedRecording,
    /// Names of the injected events, in catalog order.
    pub events: Vec<String>,
    /// Epochs carrying each injected event.
    pub event_epochs: Vec<Vec<usize>>,
    pub report: String,
    pub context: String,
}

/// A lazily generated corpus; item `i` depends only on the spec and `i`.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    spec: SyntheticSpec,
}

pub fn synth_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    Ok(SyntheticCorpus { spec: spec.clone() })
}

impl SyntheticCorpus {
    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.spec.n_pairs
    }

    pub fn is_empty(&self) -> bool {
        self.spec.n_pairs == 0
    }

    pub fn item(&self, index: usize) -> SynthItem {
        let s = &self.spec;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(index as u64 + 1);
        let n = rng.random_range(s.epochs_min..=s.epochs_max);
        let t = s.epoch_seconds * s.sample_rate_hz;
        let c = CANONICAL_CHANNELS.len();
        let mut data = vec![0.0; n * c * t];
        for ch in 0..c {
            let noise = pink_noise(n * t, s.noise_uv, &mut rng);
            for e in 0..n {
                let dst = (e * c + ch) * t;
                data[dst..dst + t].copy_from_slice(&noise[e * t..(e + 1) * t]);
            }
        }
        let mut events = Vec::new();
        let mut event_epochs = Vec::new();
        let mut phrases = Vec::new();
        for ev in &s.catalog {
            if rng.random::<f64>() >= ev.probability {
                continue;
            }
            let cover = rng.random_range(s.coverage_min..=s.coverage_max);
            let len = ((cover * n as f64).round() as usize).clamp(1, n);
            let start = rng.random_range(0..=n - len);
            let epochs: Vec<usize> = (start..start + len).collect();
            for &e in &epochs {
                let amp = ev.amplitude_uv * rng.random_range(0.8..1.2);
                let phase = rng.random_range(0.0..2.0 * PI);
                for name in &ev.channels {
                    let ch = CANONICAL_CHANNELS.iter().position(|c| c == name).expect("validated channel");
                    let dst = (e * c + ch) * t;
                    for k in 0..t {
                        let x = k as f64 / s.sample_rate_hz as f64;
                        data[dst + k] += amp * taper(k, t) * (2.0 * PI * ev.freq_hz * x + phase).sin();
                    }
                }
            }
            events.push(ev.name.clone());
            event_epochs.push(epochs);
            phrases.push(ev.phrase.as_str());
        }
        let report = if phrases.is_empty() { s.normal_phrase.clone() } else { phrases.join(" ") };
        let context = sample_context(&mut rng);
        let id = format!("syn{index:05}");
        let start_time = NaiveDate::from_ymd_opt(2020, 1, 1).and_then(|d| d.and_hms_opt(8, 0, 0)).expect("valid date")
            + Duration::minutes(index as i64);
        SynthItem {
            id: id.clone(),
            split: s.split_of(index),
            recording: EpochedRecording {
                channels: CANONICAL_CHANNELS.iter().map(|c| c.to_string()).collect(),
                sample_rate_hz: s.sample_rate_hz as f64,
                epoch_seconds: s.epoch_seconds as f64,
                num_epochs: n,
                samples_per_epoch: t,
                data,
                start_time,
                patient_id: format!("pat{index:05}"),
                session_id: id,
                missing_channels: Vec::new(),
            },
            events,
            event_epochs,
            report,
            context,
        }
    }
}

/// Tukey window with 0.5 s cosine ramps, unity in the middle.
fn taper(k: usize, t: usize) -> f64 {
    let ramp = (t / 20).max(1);
    let edge = k.min(t - 1 - k);
    if edge >= ramp {
        1.0
    } else {
        0.5 * (1.0 - (PI * edge as f64 / ramp as f64).cos())
    }
}

/// 1/f noise from white noise through a fixed pinking filter, scaled to
/// standard deviation `std`.
fn pink_noise<R: Rng + ?Sized>(n: usize, std: f64, rng: &mut R) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let w: f64 = rng.sample(StandardNormal);
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        out.push(b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362);
        b[6] = w * 0.115926;
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    let var = out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = std / var.sqrt().max(1e-12);
    out.iter_mut().for_each(|x| *x = (*x - mean) * scale);
    out
}

fn sample_context<R: Rng + ?Sized>(rng: &mut R) -> String {
    let template = CONTEXT_TEMPLATES.choose(rng).expect("templates");
    let age = rng.random_range(AGE_RANGE.0..=AGE_RANGE.1);
    template
        .replace("{age}", &age.to_string())
        .replace("{sex}", SEXES.choose(rng).expect("sexes"))
        .replace("{complaint}", COMPLAINTS.choose(rng).expect("complaints"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec { n_pairs: 6, split: [4, 1, 1], epochs_min: 3, epochs_max: 5, ..SyntheticSpec::default() }
    }

    #[test]
    fn empty_catalog_is_rejected() {
        let spec = SyntheticSpec { catalog: Vec::new(), ..small() };
        assert!(matches!(synth_corpus(&spec), Err(HarnessError::Config(_))));
    }

    #[test]
    fn duplicate_phrase_is_rejected() {
        let mut spec = small();
        spec.catalog[1].phrase = spec.catalog[0].phrase.clone();
        assert!(synth_corpus(&spec).is_err());
    }

    #[test]
    fn single_certain_event_gives_its_phrase_everywhere() {
        let mut spec = small();
        spec.catalog.truncate(1);
        spec.catalog[0].probability = 1.0;
        let c = synth_corpus(&spec).unwrap();
        for i in 0..c.len() {
            assert_eq!(c.item(i).report, spec.catalog[0].phrase);
        }
    }

    #[test]
    fn items_are_deterministic_and_distinct() {
        let c = synth_corpus(&small()).unwrap();
        assert_eq!(c.item(2), c.item(2));
        assert_ne!(c.item(2).recording.data, c.item(3).recording.data);
        let r = c.item(0).recording;
        assert_eq!(r.num_channels(), 22);
        assert!((3..=5).contains(&r.num_epochs));
        r.validate().unwrap();
    }

    #[test]
    fn reports_follow_catalog_order() {
        let mut spec = small();
        spec.catalog.iter_mut().for_each(|e| e.probability = 1.0);
        let item = synth_corpus(&spec).unwrap().item(0);
        let want: Vec<&str> = spec.catalog.iter().map(|e| e.phrase.as_str()).collect();
        assert_eq!(item.report, want.join(" "));
    }

    #[test]
    fn pink_noise_has_requested_scale_and_falls_with_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = pink_noise(40_000, 20.0, &mut rng);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var.sqrt() - 20.0).abs() < 1e-9);
        let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let dvar = d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        assert!(dvar < var, "differenced power {dvar} vs {var}");
    }

    #[test]
    fn splits_follow_counts() {
        let spec = small();
        let tags: Vec<_> = (0..6).map(|i| spec.split_of(i)).collect();
        assert_eq!(tags, ["train", "train", "train", "train", "val", "test"]);
    }
}
