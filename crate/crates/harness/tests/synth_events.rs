use celm_harness::{synth_corpus, SyntheticSpec};
use celm_signal::{default_bands, welch_band_power};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn injected_alpha_raises_alpha_band_by_six_db() {
    let mut spec = SyntheticSpec { n_pairs: 12, split: [12, 0, 0], seed: 4, ..SyntheticSpec::default() };
    spec.catalog.retain(|e| e.name == "posterior_alpha");
    spec.catalog[0].probability = 1.0;
    let bands = default_bands();
    let alpha = bands.iter().position(|b| b.name == "alpha").unwrap();
    let corpus = synth_corpus(&spec).unwrap();
    let mut worst = f64::INFINITY;
    for i in 0..corpus.len() {
        let item = corpus.item(i);
        let on = &item.event_epochs[0];
        let off: Vec<usize> = (0..item.recording.num_epochs).filter(|e| !on.contains(e)).collect();
        assert!(!on.is_empty() && !off.is_empty());
        let bp = welch_band_power(&item.recording, 1, &bands).unwrap();
        for name in &spec.catalog[0].channels {
            let c = item.recording.channels.iter().position(|x| x == name).unwrap();
            let db = |es: &[usize]| mean(&es.iter().map(|&e| bp.get(e, c, alpha)).collect::<Vec<_>>());
            worst = worst.min(db(on) - db(&off));
        }
    }
    assert!(worst >= 6.0, "smallest alpha rise {worst:.2} dB");
}

#[test]
fn event_free_channels_are_unchanged() {
    let mut spec = SyntheticSpec { n_pairs: 6, split: [6, 0, 0], seed: 5, ..SyntheticSpec::default() };
    spec.catalog.retain(|e| e.name == "posterior_alpha");
    spec.catalog[0].probability = 1.0;
    let bands = default_bands();
    let alpha = bands.iter().position(|b| b.name == "alpha").unwrap();
    let corpus = synth_corpus(&spec).unwrap();
    for i in 0..corpus.len() {
        let item = corpus.item(i);
        let on = &item.event_epochs[0];
        let off: Vec<usize> = (0..item.recording.num_epochs).filter(|e| !on.contains(e)).collect();
        let bp = welch_band_power(&item.recording, 1, &bands).unwrap();
        let c = item.recording.channels.iter().position(|x| x == "Fp1").unwrap();
        let db = |es: &[usize]| mean(&es.iter().map(|&e| bp.get(e, c, alpha)).collect::<Vec<_>>());
        assert!((db(on) - db(&off)).abs() < 3.0);
    }
}
