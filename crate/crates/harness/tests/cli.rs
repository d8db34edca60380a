use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use celm_harness::Manifest;

fn celm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_celm")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const TINY_SYNTH: &str = "
[synth]
train = 6
val = 2
test = 2
epochs_min = 3
epochs_max = 4
edf_count = 2
";

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn missing_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("absent.cfg").display().to_string();
    let out = tmp.path().join("o").display().to_string();
    let o = celm(&["synth", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = celm(&["synth", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.cfg", TINY_SYNTH);
    let o = celm(&["synth", "--config", &cfg, "--out", "x", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = celm(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_twice_gives_identical_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.cfg", TINY_SYNTH);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = celm(&["synth", "--config", &cfg, "--seed", "7", "--out", &dir.display().to_string()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.seed, 7);
    assert!(ma.outputs.iter().any(|f| f.path == "pairs.jsonl"));
    assert_eq!(ma.outputs.iter().filter(|f| f.path.ends_with(".edf")).count(), 2);
    let c = tmp.path().join("c");
    assert!(celm(&["synth", "--config", &cfg, "--seed", "8", "--out", &c.display().to_string()]).status.success());
    assert_ne!(manifest(&c).outputs_digest(), ma.outputs_digest());
}

#[test]
fn empty_catalog_reports_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.cfg", &format!("{TINY_SYNTH}default_catalog = false\n"));
    let o = celm(&["synth", "--config", &cfg, "--out", &tmp.path().join("o").display().to_string()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error[config]:") && err.contains("catalog is empty"), "{err}");
}

#[test]
fn custom_catalog_section_is_used() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{TINY_SYNTH}[event.alpha]\nfreq_hz = 10\nchannels = O1, O2\nprobability = 1\nphrase = alpha posterior.\n"
    );
    let cfg = write(tmp.path(), "s.cfg", &text);
    let out = tmp.path().join("o");
    assert!(celm(&["synth", "--config", &cfg, "--out", &out.display().to_string()]).status.success());
    let pairs = celm_harness::corpus::read_pairs(&out.join("pairs.jsonl")).unwrap();
    assert_eq!(pairs.len(), 10);
    assert!(pairs.iter().all(|p| p.report == "alpha posterior."));
}

#[test]
fn score_identical_files_gives_maximal_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let lines = "left temporal slowing is seen.\nnormal awake record with alpha rhythm.\n";
    write(tmp.path(), "hyp.txt", lines);
    write(tmp.path(), "ref.txt", lines);
    let cfg = write(
        tmp.path(),
        "score.cfg",
        &format!(
            "[score]\nhypotheses = {}\nreferences = {}\n",
            tmp.path().join("hyp.txt").display(),
            tmp.path().join("ref.txt").display()
        ),
    );
    let out = tmp.path().join("o");
    let o = celm(&["score", "--config", &cfg, "--out", &out.display().to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).filter(|l| l.starts_with("all,")).collect();
    assert_eq!(rows.len(), 7);
    // METEOR-lite tops out at 1 - 0.5 / m^3 for m matched tokens.
    let meteor_max: f64 =
        lines.lines().map(|l| 1.0 - 0.5 / (celm_metrics::tokenize(l).len() as f64).powi(3)).sum::<f64>() / 2.0;
    for r in rows {
        let mean: f64 = r.split(',').nth(2).unwrap().parse().unwrap();
        let want = if r.starts_with("all,meteor,") { meteor_max } else { 1.0 };
        assert!((mean - want).abs() < 1e-6, "{r}");
    }
    let m = manifest(&out);
    assert_eq!(m.inputs.len(), 3);
}

#[test]
fn structure_writes_sections_and_disjoint_splits() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../report/tests/fixtures/reports_30.jsonl");
    let cfg = write(tmp.path(), "st.cfg", &format!("[structure]\ninput = {}\n", fixture.display()));
    let out = tmp.path().join("o");
    let o = celm(&["structure", "--config", &cfg, "--seed", "3", "--out", &out.display().to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let structured = fs::read_to_string(out.join("structured.jsonl")).unwrap();
    assert_eq!(structured.lines().count(), 30);
    let ids: Vec<Vec<String>> = ["train", "val", "test"]
        .iter()
        .map(|s| {
            fs::read_to_string(out.join("splits").join(format!("{s}.txt"))).unwrap().lines().map(String::from).collect()
        })
        .collect();
    assert_eq!(ids.iter().map(Vec::len).sum::<usize>(), 30);
}

#[test]
fn preprocess_turns_edf_into_epochs_and_tokens() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.cfg", TINY_SYNTH);
    let corpus = tmp.path().join("corpus");
    assert!(celm(&["synth", "--config", &cfg, "--out", &corpus.display().to_string()]).status.success());
    let pcfg = write(tmp.path(), "p.cfg", &format!("[preprocess]\ninput = {}\n", corpus.join("edf").display()));
    let out = tmp.path().join("pre");
    let o = celm(&["preprocess", "--config", &pcfg, "--out", &out.display().to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m.inputs.len(), 3);
    let (tokens, _) = celm_core::load_epoch_tokens(&out.join("tokens/syn00000")).unwrap();
    let (ep, _) = celm_signal::load_epochs(&out.join("epochs/syn00000")).unwrap();
    assert_eq!(tokens.len(), ep.num_epochs);
    assert_eq!(ep.num_channels(), 22);
}

#[test]
fn preprocess_without_edf_files_fails_with_category() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "p.cfg", &format!("[preprocess]\ninput = {}\n", tmp.path().display()));
    let o = celm(&["preprocess", "--config", &cfg, "--out", &tmp.path().join("o").display().to_string()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[corpus]:"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.cfg", &format!("{TINY_SYNTH}n_pair = 3\n"));
    let o = celm(&["synth", "--config", &cfg, "--out", &tmp.path().join("o").display().to_string()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown key [synth] n_pair"), "{}", stderr(&o));
}

fn pipeline_config(dir: &Path) -> String {
    write(
        dir,
        "p.cfg",
        &format!(
            "{TINY_SYNTH}
[experiment]
corpus = {corpus}
variants = linear, sca
max_new_tokens = 12

[train]
epochs = 2
grad_accum = 1
lr = 1e-3

[decoder]
dim = 16
ff_hidden = 32
pretrain_epochs = 2

[generate]
model = {model}
variant = sca
split = test

[score]
generations = {gens}
",
            corpus = dir.join("corpus").display(),
            model = dir.join("train").display(),
            gens = dir.join("gen/generations.jsonl").display(),
        ),
    )
}

#[test]
fn train_generate_score_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = pipeline_config(tmp.path());
    for (cmd, dir) in [("synth", "corpus"), ("train", "train"), ("generate", "gen"), ("score", "score")] {
        let o = celm(&[cmd, "--config", &cfg, "--seed", "1", "--out", &tmp.path().join(dir).display().to_string()]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let train = tmp.path().join("train");
    for f in [
        "train.cfg",
        "vocab.txt",
        "decoder.ckpt",
        "standardizer.ckpt",
        "results.csv",
        "sca/projector.ckpt",
        "linear/curves.csv",
    ] {
        assert!(train.join(f).is_file(), "{f}");
    }
    let results = fs::read_to_string(train.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    let gens = fs::read_to_string(tmp.path().join("gen/generations.jsonl")).unwrap();
    assert_eq!(gens.lines().count(), 2);
    let first: serde_json::Value = serde_json::from_str(gens.lines().next().unwrap()).unwrap();
    for k in ["id", "prompt", "hypothesis", "reference", "section"] {
        assert!(first.get(k).is_some(), "{k}");
    }
    assert!(tmp.path().join("score/summary.csv").is_file());
}

#[test]
fn generate_from_a_non_model_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "g.cfg", &format!("[generate]\nmodel = {}\n", tmp.path().display()));
    let o = celm(&["generate", "--config", &cfg, "--out", &tmp.path().join("o").display().to_string()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[corpus]:"), "{}", stderr(&o));
}
