use std::collections::BTreeSet;

use celm_report::*;
use chrono::Duration;
use proptest::prelude::*;

const FIXTURE: &str = include_str!("fixtures/reports_30.jsonl");

fn fixture() -> Vec<(ReportRecord, Vec<String>)> {
    let recs = read_reports(FIXTURE.as_bytes()).unwrap();
    let headers = FIXTURE.lines().map(|l| {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        v["headers"].as_array().unwrap().iter().map(|h| h.as_str().unwrap().to_string()).collect()
    });
    recs.into_iter().zip(headers).collect()
}

#[test]
fn fixture_headers_are_all_detected() {
    let lx = Lexicon::default();
    let corpus = fixture();
    assert_eq!(corpus.len(), 30);
    for (rec, expected) in &corpus {
        let found: Vec<String> = detect_sections(&rec.text, &lx).iter().map(|s| s.header_text.clone()).collect();
        assert_eq!(&found, expected, "{}", rec.id);
    }
}

#[test]
fn fixture_sections_are_verbatim() {
    let lx = Lexicon::default();
    for (rec, _) in fixture() {
        let sr = structure_report((&rec.id, &rec.patient, &rec.timestamp), &rec.text, &lx, &CopyExtractor).unwrap();
        assert!(!sr.sections.is_empty());
        for (_, piece) in &sr.pieces {
            assert!(rec.text.contains(piece.as_str()), "{}: {piece:?}", rec.id);
        }
        for (cat, value) in &sr.sections {
            let pieces: Vec<&str> = sr.pieces.iter().filter(|(c, _)| c == cat).map(|(_, p)| p.as_str()).collect();
            assert_eq!(value, &pieces.join(DUPLICATE_SEPARATOR));
            if pieces.len() == 1 {
                assert!(rec.text.contains(value.as_str()));
            }
        }
    }
}

#[test]
fn fixture_spans_tile_after_first_header() {
    let lx = Lexicon::default();
    for (rec, _) in fixture() {
        let spans = detect_sections(&rec.text, &lx);
        for w in spans.windows(2) {
            assert!(w[0].start_offset < w[0].end_offset);
            assert!(w[0].end_offset <= w[1].start_offset);
        }
        let cov = coverage(rec.text.len(), &spans);
        assert_eq!(cov[0].1, spans[0].start_offset);
        assert_eq!(cov.last().unwrap().2, rec.text.len());
        for w in cov.windows(2) {
            assert_eq!(w[0].2, w[1].1);
        }
        let sections = cov.iter().filter(|r| matches!(r.0, Region::Section(_))).count();
        assert_eq!(sections, spans.len());
    }
}

#[test]
fn fixture_splits_never_share_patients() {
    let corpus = fixture();
    for seed in 0..20 {
        let split = patient_split(&corpus, |(r, _)| r.patient.as_str(), [0.6, 0.2, 0.2], seed).unwrap();
        let sets: Vec<BTreeSet<&str>> = SplitTag::ALL
            .iter()
            .map(|&t| split.indices(t).into_iter().map(|i| corpus[i].0.patient.as_str()).collect())
            .collect();
        for a in 0..3 {
            assert!(!sets[a].is_empty());
            for b in a + 1..3 {
                assert!(sets[a].is_disjoint(&sets[b]), "seed {seed}");
            }
        }
    }
}

#[test]
fn patient_with_many_pairs_stays_together() {
    let mut items: Vec<(String, String)> = (0..9).map(|i| (format!("r{i}"), format!("p{i}"))).collect();
    items.extend((0..5).map(|i| (format!("x{i}"), "heavy".to_string())));
    for seed in 0..10 {
        let s = patient_split(&items, |(_, p)| p.as_str(), [0.6, 0.2, 0.2], seed).unwrap();
        let tags: BTreeSet<SplitTag> = (9..14).map(|i| s.assignment[i]).collect();
        assert_eq!(tags.len(), 1);
    }
}

#[test]
fn matched_pairs_feed_the_split() {
    let corpus = fixture();
    let reports: Vec<ReportMeta> = corpus
        .iter()
        .map(|(r, _)| ReportMeta {
            report_id: r.id.clone(),
            patient_id: r.patient.clone(),
            timestamp: parse_timestamp(&r.timestamp).unwrap(),
        })
        .collect();
    let sessions: Vec<SessionInfo> = reports
        .iter()
        .map(|r| SessionInfo {
            session_id: format!("S{}", r.report_id),
            patient_id: r.patient_id.clone(),
            start_time: r.timestamp - Duration::hours(3),
            duration_s: 1200.0,
            eeg_path: format!("{}.edf", r.report_id),
        })
        .collect();
    let pairs = match_report_to_sessions(&reports, &sessions, &MatchConfig::default());
    let modeling = modeling_pairs(&pairs);
    assert!(modeling.iter().all(|p| p.session_ids.len() == 1));
    let split = patient_split(&modeling, |p| p.patient_id.as_str(), [0.6, 0.2, 0.2], 3).unwrap();
    let ids: Vec<String> = modeling.iter().map(|p| p.report_id.clone()).collect();
    let manifest = split_manifest(&ids, &split);
    assert_eq!(manifest.values().map(Vec::len).sum::<usize>(), modeling.len());
}

fn report_strategy() -> impl Strategy<Value = String> {
    let header = prop::sample::select(vec![
        "IMPRESSION",
        "history",
        "Background",
        "EVENTS",
        "Meds",
        "Interpretation",
        "FINDINGS",
    ]);
    let body = "[a-zA-Z0-9 .,:é\\n-]{0,40}";
    let sep = prop::sample::select(vec![": ", ":", " : ", "\n"]);
    prop::collection::vec((header, sep, body), 0..6)
        .prop_map(|parts| parts.into_iter().map(|(h, s, b)| format!("{h}{s}{b}")).collect::<Vec<_>>().join("\n"))
}

proptest! {
    #[test]
    fn sections_are_substrings(report in report_strategy()) {
        let lx = Lexicon::default();
        let sr = structure_report(("r", "p", "t"), &report, &lx, &CopyExtractor).unwrap();
        for (_, piece) in &sr.pieces {
            prop_assert!(report.contains(piece.as_str()));
        }
        let spans = detect_sections(&report, &lx);
        let cov = coverage(report.len(), &spans);
        if let Some(first) = spans.first() {
            prop_assert_eq!(cov[0].1, first.start_offset);
            prop_assert_eq!(cov.last().unwrap().2, report.len());
            for w in cov.windows(2) {
                prop_assert_eq!(w[0].2, w[1].1);
            }
        }
    }

    #[test]
    fn splits_have_zero_leakage(
        patients in prop::collection::vec(0u8..40, 3..80),
        seed in any::<u64>(),
    ) {
        let items: Vec<String> = patients.iter().map(|p| format!("p{p}")).collect();
        let distinct: BTreeSet<&String> = items.iter().collect();
        prop_assume!(distinct.len() >= 3);
        let s = patient_split(&items, |s| s.as_str(), [0.6, 0.2, 0.2], seed).unwrap();
        for (i, a) in items.iter().enumerate() {
            for (j, b) in items.iter().enumerate() {
                if a == b {
                    prop_assert_eq!(s.assignment[i], s.assignment[j]);
                }
            }
        }
        for t in SplitTag::ALL {
            prop_assert!(!s.indices(t).is_empty());
        }
    }
}
