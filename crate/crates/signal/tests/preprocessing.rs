use std::f64::consts::PI;

use celm_signal::*;
use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t0() -> chrono::NaiveDateTime {
    NaiveDate::from_ymd_opt(2021, 6, 1).unwrap().and_hms_opt(8, 30, 0).unwrap()
}

fn tone(freq: f64, fs: f64, seconds: f64, amp: f64) -> Vec<f64> {
    let n = (fs * seconds).round() as usize;
    (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / fs).sin()).collect()
}

fn single(x: Vec<f64>, fs: f64) -> EegRecording {
    EegRecording::new(vec!["Cz".into()], fs, vec![x], t0()).unwrap()
}

/// Least-squares amplitude of a known-frequency sinusoid.
fn fitted_amplitude(x: &[f64], freq: f64, fs: f64) -> f64 {
    let (mut ss, mut cc, mut sc, mut xs, mut xc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let w = 2.0 * PI * freq * i as f64 / fs;
        let (s, c) = w.sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        xs += v * s;
        xc += v * c;
    }
    let det = ss * cc - sc * sc;
    let a = (xs * cc - xc * sc) / det;
    let b = (xc * ss - xs * sc) / det;
    a.hypot(b)
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn steady(x: &[f64], fs: f64, trim_s: f64) -> &[f64] {
    let k = (trim_s * fs) as usize;
    &x[k..x.len() - k]
}

#[test]
fn zero_signal_filters_to_zero() {
    let out = bandpass_notch(&single(vec![0.0; 2560], 256.0), &FilterConfig::default()).unwrap();
    assert!(out.samples[0].iter().all(|&v| v == 0.0));
}

#[test]
fn ten_hz_passes_within_five_percent() {
    let fs = 256.0;
    let out = bandpass_notch(&single(tone(10.0, fs, 40.0, 1.0), fs), &FilterConfig::default()).unwrap();
    let amp = fitted_amplitude(steady(&out.samples[0], fs, 10.0), 10.0, fs);
    assert!((amp - 1.0).abs() < 0.05, "amplitude {amp}");
}

#[test]
fn sixty_hz_is_notched() {
    let fs = 256.0;
    let out = bandpass_notch(&single(tone(60.0, fs, 40.0, 1.0), fs), &FilterConfig::default()).unwrap();
    let amp = fitted_amplitude(steady(&out.samples[0], fs, 10.0), 60.0, fs);
    assert!(amp < 0.05, "residual {amp}");
}

#[test]
fn filtering_preserves_length_and_order() {
    let fs = 200.0;
    let rec = EegRecording::new(
        vec!["O1".into(), "C3".into()],
        fs,
        vec![tone(10.0, fs, 3.0, 1.0), tone(3.0, fs, 3.0, 2.0)],
        t0(),
    )
    .unwrap();
    let out = bandpass_notch(&rec, &FilterConfig::default()).unwrap();
    assert_eq!(out.channels, rec.channels);
    assert_eq!(out.num_samples(), rec.num_samples());
}

#[test]
fn too_low_rate_is_rejected() {
    let err = bandpass_notch(&single(vec![0.0; 100], 100.0), &FilterConfig::default()).unwrap_err();
    assert!(matches!(err, SignalError::SampleRateTooLow { .. }));
}

#[test]
fn resample_identity_at_same_rate() {
    let rec = single(tone(7.0, 200.0, 2.0, 1.0), 200.0);
    assert_eq!(resample(&rec, 200.0).unwrap(), rec);
}

#[test]
fn resample_five_hz_matches_analytic_sine() {
    let x = tone(5.0, 512.0, 10.0, 1.0);
    let out = resample(&single(x, 512.0), 200.0).unwrap();
    let y = &out.samples[0];
    assert_eq!(y.len(), 2000);
    let err: Vec<f64> = y.iter().enumerate().map(|(i, v)| v - (2.0 * PI * 5.0 * i as f64 / 200.0).sin()).collect();
    let e = rms(&err);
    assert!(e < 1e-2, "rms error {e}");
    assert!((out.duration_seconds() - 10.0).abs() <= 1.0 / 200.0);
}

#[test]
fn downsampling_suppresses_tone_above_new_nyquist() {
    let out = resample(&single(tone(90.0, 400.0, 10.0, 1.0), 400.0), 200.0).unwrap();
    let r = rms(&out.samples[0]);
    assert!(r < 0.05, "alias rms {r}");
}

fn one_epoch(x: Vec<f64>, fs: f64) -> EpochedRecording {
    epoch(&single(x, fs), 10.0).unwrap()
}

#[test]
fn alpha_tone_concentrates_in_alpha() {
    let ep = one_epoch(tone(10.0, 200.0, 10.0, 1.0), 200.0);
    let f = welch_band_power(&ep, 1, &default_bands()).unwrap();
    let lin: Vec<f64> = (0..5).map(|b| 10f64.powf(f.get(0, 0, b) / 10.0)).collect();
    let share = lin[2] / lin.iter().sum::<f64>();
    assert!(share >= 0.95, "alpha share {share}");
}

#[test]
fn zero_epoch_hits_floor() {
    let ep = one_epoch(vec![0.0; 2000], 200.0);
    let f = welch_band_power(&ep, 1, &default_bands()).unwrap();
    assert!(f.values_db.iter().all(|&v| v == floor_db()));
}

#[test]
fn delta_and_beta_tones_balance() {
    let a = tone(2.0, 200.0, 10.0, 1.0);
    let b = tone(20.0, 200.0, 10.0, 1.0);
    let x = a.iter().zip(&b).map(|(p, q)| p + q).collect();
    let f = welch_band_power(&one_epoch(x, 200.0), 1, &default_bands()).unwrap();
    let (delta, beta) = (f.get(0, 0, 0), f.get(0, 0, 3));
    assert!((delta - beta).abs() < 0.5, "delta {delta} beta {beta}");
}

#[test]
fn gamma_edge_is_truncated_below_160_hz() {
    let ep = one_epoch(tone(10.0, 100.0, 10.0, 1.0), 100.0);
    let f = welch_band_power(&ep, 1, &default_bands()).unwrap();
    assert_eq!(f.truncated, vec!["gamma".to_string()]);
    assert!(f.values_db.iter().all(|v| v.is_finite()));
}

#[test]
fn pooling_concatenates_consecutive_epochs() {
    let rec = single(tone(10.0, 200.0, 50.0, 1.0), 200.0);
    let ep = epoch(&rec, 10.0).unwrap();
    let f = welch_band_power(&ep, 2, &default_bands()).unwrap();
    assert_eq!(f.num_groups, 3);
    assert_eq!(f.values_db.len(), 3 * 5);
}

#[test]
fn band_powers_obey_parseval_on_noise() {
    let fs = 200.0;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..2000).map(|_| rng.random_range(-10.0..10.0)).collect();
        let ep = one_epoch(x.clone(), fs);
        let f = welch_band_power(&ep, 1, &default_bands()).unwrap();
        let bands: f64 = (0..5).map(|b| 10f64.powf(f.get(0, 0, b) / 10.0)).sum();

        // Direct one-sided DFT power over 0.5 Hz <= f < 80 Hz.
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let df = fs / n as f64;
        let mut direct = 0.0;
        for k in 1..n / 2 {
            let fk = k as f64 * df;
            if !(0.5..80.0).contains(&fk) {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in x.iter().enumerate() {
                let w = 2.0 * PI * (k * i) as f64 / n as f64;
                re += (v - mean) * w.cos();
                im -= (v - mean) * w.sin();
            }
            direct += 2.0 * (re * re + im * im) / (n * n) as f64;
        }
        let ratio = bands / direct;
        assert!((ratio - 1.0).abs() < 0.10, "seed {seed}: ratio {ratio}");
    }
}

#[test]
fn epoch_counts() {
    for (secs, n) in [(25usize, 2usize), (10, 1), (39, 3), (100, 10)] {
        let rec = single(vec![0.0; secs * 200], 200.0);
        assert_eq!(epoch(&rec, 10.0).unwrap().num_epochs, n);
    }
}

#[test]
fn two_hour_recording_shape() {
    let rec = EegRecording::new(
        CANONICAL_CHANNELS.iter().map(|s| s.to_string()).collect(),
        200.0,
        vec![vec![0.0; 7200 * 200]; 22],
        t0(),
    )
    .unwrap();
    let ep = epoch(&rec, 10.0).unwrap();
    assert_eq!(ep.shape(), [720, 22, 2000]);
}

#[test]
fn edf_header_errors_are_distinct() {
    let rec = single(tone(3.0, 200.0, 2.0, 50.0), 200.0);
    let bytes = write_edf(&rec).unwrap();
    assert!(matches!(read_edf(&bytes[..bytes.len() - 2]).unwrap_err(), SignalError::DataSizeMismatch { .. }));
    assert!(matches!(read_edf(&bytes[..300]).unwrap_err(), SignalError::TruncatedHeader { needed: 512, .. }));
    // digital_max column of signal 0 set equal to digital_min.
    let mut bad = bytes.clone();
    let off = 256 + 16 + 80 + 8 + 8 + 8 + 8;
    bad[off..off + 8].copy_from_slice(b"-32768  ");
    assert!(matches!(read_edf(&bad).unwrap_err(), SignalError::ZeroDigitalRange { signal: 0, .. }));
}

#[test]
fn edf_annotation_channel_is_skipped() {
    let rec =
        EegRecording::new(vec!["Cz".into(), "EDF Annotations".into()], 10.0, vec![vec![1.0; 20], vec![0.0; 20]], t0())
            .unwrap();
    let back = read_edf(&write_edf(&rec).unwrap()).unwrap();
    assert_eq!(back.channels, vec!["Cz".to_string()]);
    assert!(back.annotations_skipped);
}

#[test]
fn preprocess_chain_shapes() {
    let fs = 256.0;
    let rec = EegRecording::new(
        vec!["EEG FP1-REF".into(), "EEG T7-REF".into()],
        fs,
        vec![tone(10.0, fs, 20.0, 30.0), tone(6.0, fs, 20.0, 30.0)],
        t0(),
    )
    .unwrap();
    let out = preprocess(&rec, 200.0, &FilterConfig::default()).unwrap();
    assert_eq!(out.num_channels(), 22);
    assert_eq!(out.num_samples(), 4000);
    assert_eq!(out.missing_channels.len(), 20);
    assert!(out.channel("T3").unwrap().iter().any(|v| v.abs() > 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edf_round_trip_within_one_lsb(
        seed in any::<u64>(),
        channels in 1usize..4,
        seconds in 1usize..4,
        rate in prop::sample::select(vec![1usize, 10, 128, 200]),
        scale in 1e-2f64..1e4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = (0..channels).map(|i| format!("ch{i}")).collect();
        let samples: Vec<Vec<f64>> = (0..channels)
            .map(|_| (0..seconds * rate).map(|_| rng.random_range(-scale..scale)).collect())
            .collect();
        let rec = EegRecording::new(labels, rate as f64, samples, t0())
            .unwrap()
            .with_ids("P3", "S3_2");
        let bytes = write_edf(&rec).unwrap();
        let back = read_edf(&bytes).unwrap();
        let header = read_header(&bytes).unwrap();
        prop_assert_eq!(&back.channels, &rec.channels);
        prop_assert_eq!(back.start_time, rec.start_time);
        prop_assert_eq!(back.patient_id.as_str(), "P3");
        prop_assert_eq!(back.sample_rate_hz, rate as f64);
        for (c, (a, b)) in rec.samples.iter().zip(&back.samples).enumerate() {
            let lsb = header.signals[c].gain();
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < lsb, "{x} vs {y}, lsb {lsb}");
            }
        }
    }

    #[test]
    fn montage_is_idempotent(mask in prop::collection::vec(any::<bool>(), 22), upper in any::<bool>()) {
        let labels: Vec<String> = CANONICAL_CHANNELS
            .iter()
            .zip(&mask)
            .filter(|(_, &k)| k)
            .map(|(c, _)| if upper { c.to_uppercase() } else { c.to_string() })
            .collect();
        let k = labels.len();
        let rec = EegRecording::new(labels, 200.0, vec![vec![1.0; 3]; k], t0()).unwrap();
        let once = montage_map(&rec);
        prop_assert_eq!(once.missing_channels.len(), 22 - k);
        prop_assert_eq!(montage_map(&once), once);
    }

    #[test]
    fn epoch_count_is_floor(samples in 2000usize..20_000) {
        let rec = single(vec![0.0; samples], 200.0);
        let ep = epoch(&rec, 10.0).unwrap();
        prop_assert_eq!(ep.num_epochs, samples / 2000);
    }
}
