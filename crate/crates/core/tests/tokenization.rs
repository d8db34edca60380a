//! Epoch token budget, aggregation properties and persistence.

use celm_core::{
    aggregate_epoch_tokens, encode_mini_windows, load_epoch_tokens, save_epoch_tokens, tokenize_recording,
    AggregationRegistry, Aggregator, CompressionReport, EegEncoder, EncoderRegistry, EncoderSpec, MeanAggregator,
    MiniTokens,
};
use celm_signal::{EpochedRecording, Sidecar, CANONICAL_CHANNELS};
use chrono::NaiveDate;
use proptest::prelude::*;

fn recording(seconds: usize, epoch_seconds: usize) -> EpochedRecording {
    let rate = 200;
    let t = rate * epoch_seconds;
    let n = seconds / epoch_seconds;
    let c = CANONICAL_CHANNELS.len();
    let mut data = Vec::with_capacity(n * c * t);
    for e in 0..n {
        for ch in 0..c {
            for s in 0..t {
                let x = (e * t + s) as f64 / rate as f64;
                data.push(20.0 * (2.0 * std::f64::consts::PI * (8.0 + ch as f64 * 0.5) * x).sin());
            }
        }
    }
    EpochedRecording {
        channels: CANONICAL_CHANNELS.iter().map(|s| s.to_string()).collect(),
        sample_rate_hz: rate as f64,
        epoch_seconds: epoch_seconds as f64,
        num_epochs: n,
        samples_per_epoch: t,
        data,
        start_time: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
        patient_id: "p0".into(),
        session_id: "s0".into(),
        missing_channels: Vec::new(),
    }
}

fn toy() -> Box<dyn EegEncoder> {
    EncoderRegistry::default().build("toy", &EncoderSpec::default()).unwrap()
}

#[test]
fn two_hour_session_token_budget() {
    let ep = recording(7200, 10);
    let enc = toy();
    let mini = encode_mini_windows(&ep, &*enc).unwrap();
    assert_eq!(mini.count(), 158_400);
    let tokens = aggregate_epoch_tokens(&mini, &MeanAggregator).unwrap();
    assert_eq!(tokens.len(), 720);
    assert_eq!(tokens.dim(), 200);
    let report = CompressionReport::of(&ep, &mini);
    assert_eq!(report.epoch_tokens, 720);
    assert_eq!(report.vs_mini_windows(), 220.0);
    assert_eq!(report.vs_raw_samples(), 44_000.0);
    let streamed = tokenize_recording(&ep, &*enc, &MeanAggregator).unwrap();
    assert_eq!(streamed, tokens);
}

#[test]
fn single_epoch_has_220_mini_tokens() {
    let ep = recording(10, 10);
    let mini = encode_mini_windows(&ep, &*toy()).unwrap();
    assert_eq!(mini.count(), 220);
}

#[test]
fn cls_needs_summary_slot() {
    let ep = recording(20, 10);
    let cls = AggregationRegistry::default().build("cls").unwrap();
    assert!(tokenize_recording(&ep, &*toy(), &*cls).is_err());
    let with = EncoderRegistry::default().build("toy-cls", &EncoderSpec::default()).unwrap();
    assert_eq!(tokenize_recording(&ep, &*with, &*cls).unwrap().len(), 2);
}

#[test]
fn tokens_round_trip_through_checkpoint() {
    let ep = recording(30, 10);
    let tokens = tokenize_recording(&ep, &*toy(), &MeanAggregator).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("rec");
    save_epoch_tokens(&tokens, &Sidecar::of(&ep), "toy", "mean", &stem).unwrap();
    let (back, side) = load_epoch_tokens(&stem).unwrap();
    assert_eq!(back, tokens);
    assert_eq!(side.epoch_count, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn mean_is_permutation_invariant(
        (c, w, vals, perm) in (1usize..5, 1usize..5).prop_flat_map(|(c, w)| {
            let n = c * w;
            (
                Just(c),
                Just(w),
                proptest::collection::vec(-10.0f64..10.0, n * 3),
                Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            )
        })
    ) {
        let d = 3;
        let mini = MiniTokens { num_epochs: 1, num_channels: c, windows: w, dim: d, has_summary: false, data: vals.clone() };
        let mut shuffled = vec![0.0; vals.len()];
        for (dst, &src) in perm.iter().enumerate() {
            shuffled[dst * d..(dst + 1) * d].copy_from_slice(&vals[src * d..(src + 1) * d]);
        }
        let other = MiniTokens { data: shuffled, ..mini.clone() };
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        MeanAggregator.aggregate_epoch(&mini, 0, &mut a).unwrap();
        MeanAggregator.aggregate_epoch(&other, 0, &mut b).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
