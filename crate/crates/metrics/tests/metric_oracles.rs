use celm_metrics::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FROZEN: &str = include_str!("fixtures/frozen_20.jsonl");

#[test]
fn frozen_fixture_matches_reference_scorer() {
    let mut n = 0;
    for line in FROZEN.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let hyp = v["hypothesis"].as_str().unwrap();
        let reference = v["reference"].as_str().unwrap();
        let got = score_pair(hyp, reference);
        for name in METRIC_NAMES {
            let want = v[name].as_f64().unwrap();
            let have = got.get(name).unwrap();
            assert!((have - want).abs() < 1e-6, "{} {name}: {have} vs {want}", v["id"]);
        }
        n += 1;
    }
    assert_eq!(n, 20);
}

#[test]
fn bleu_hand_cases() {
    assert_eq!(bleu("a b c d e", "a b c d e", 4), 1.0);
    let b = bleu("the cat", "the cat sat", 1);
    assert!((b - 0.606_530_659_712_633_4).abs() < 1e-12);
    let h = "alpha beta gamma delta theta kappa lambda omicron sigma tau upsilon phi chi psi omega rho pi nu xi mu";
    let r = "one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen sixteen seventeen eighteen nineteen twenty";
    let d = bleu(h, r, 4);
    assert!(d > 0.0 && d < 0.01, "{d}");
    assert_eq!(bleu("", "x", 1), 0.0);
}

#[test]
fn rouge_hand_cases() {
    assert_eq!(rouge_n("a b c", "a b c", 1), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
    let p = rouge_n("a b", "a b c", 1);
    assert_eq!(p.precision, 1.0);
    assert!((p.recall - 2.0 / 3.0).abs() < 1e-15);
    assert!((p.f1 - 0.8).abs() < 1e-15);
    assert_eq!(rouge_n("d e", "a b c", 2).f1, 0.0);
    let l = rouge_l("a c", "a b c");
    assert!((l.precision - 1.0).abs() < 1e-15 && (l.f1 - 0.8).abs() < 1e-15);
    let multi = "Normal EEG. No spikes.\nGood sleep.";
    assert_eq!(rouge_l(multi, multi).f1, 1.0);
    assert_eq!(rouge_lsum(multi, multi).f1, 1.0);
}

#[test]
fn meteor_hand_cases() {
    assert!((meteor_lite("the cat sat", "the sat cat") - 0.5).abs() < 1e-15);
    assert_eq!(meteor_lite("x y", "a b"), 0.0);
    let m = 5.0f64;
    assert!((meteor_lite("a b c d e", "a b c d e") - (1.0 - 0.5 / m.powi(3))).abs() < 1e-15);
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const WORDS: [&str; 14] = [
        "normal", "slow", "slowing", "spike", "spikes", "alpha", "left", "right", "temporal", ".", ",", "eeg", "the",
        "\n",
    ];
    let n = rng.random_range(0..25);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

#[test]
fn all_scores_in_unit_interval_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let (h, r) = (random_text(&mut rng), random_text(&mut rng));
        for v in score_pair(&h, &r).0 {
            assert!((0.0..=1.0).contains(&v) && v.is_finite(), "{v} for {h:?} / {r:?}");
        }
    }
}

fn text_strategy() -> impl Strategy<Value = Vec<&'static str>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "spike", "spikes", "wave", ".", "slow"]), 0..20)
}

proptest! {
    #[test]
    fn identity_is_maximal(words in text_strategy()) {
        let x = words.join(" ");
        let toks = tokenize(&x);
        prop_assume!(!toks.is_empty());
        let s = score_pair(&x, &x);
        prop_assert_eq!(s.get("bleu1").unwrap(), 1.0);
        if toks.len() >= 4 {
            prop_assert!((s.get("bleu4").unwrap() - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(s.get("rouge1").unwrap(), 1.0);
        prop_assert_eq!(s.get("rougeL").unwrap(), 1.0);
        prop_assert_eq!(s.get("rougeLsum").unwrap(), 1.0);
        if toks.len() >= 2 {
            prop_assert_eq!(s.get("rouge2").unwrap(), 1.0);
        }
        let m = toks.len() as f64;
        prop_assert!((s.get("meteor").unwrap() - (1.0 - 0.5 / m.powi(3))).abs() < 1e-12);
    }

    #[test]
    fn deleting_matching_tokens_never_raises_recall(
        hyp in text_strategy(),
        reference in text_strategy(),
        drop in any::<prop::sample::Index>(),
    ) {
        let r = reference.join(" ");
        let h = hyp.join(" ");
        let rt = tokenize(&r);
        let matching: Vec<usize> = hyp.iter().enumerate()
            .filter(|(_, w)| rt.iter().any(|t| t == *w))
            .map(|(i, _)| i)
            .collect();
        prop_assume!(!matching.is_empty());
        let k = matching[drop.index(matching.len())];
        let mut shorter = hyp.clone();
        shorter.remove(k);
        let before = rouge_n(&h, &r, 1).recall;
        let after = rouge_n(&shorter.join(" "), &r, 1).recall;
        prop_assert!(after <= before);
    }

    #[test]
    fn lsum_equals_l_for_single_sentences(
        hyp in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..12),
        reference in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..12),
    ) {
        let (h, r) = (hyp.join(" "), reference.join(" "));
        prop_assert_eq!(rouge_lsum(&h, &r), rouge_l(&h, &r));
    }
}
