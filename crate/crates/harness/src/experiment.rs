//! Pretraining the decoder, training projector variants, generating and
//! scoring: one run per seed, shared data order across variants.

use std::fs;
use std::path::{Path, PathBuf};

use celm_core::{
    align, curves_csv, evaluate, generate, pretrain_decoder, train, zeroed, CurveRow, DecodeMode, DecoderConfig,
    PretrainConfig, Projector, ProjectorConfig, ProjectorRegistry, Sample, TokenStandardizer, ToyDecoder, TrainConfig,
    TrainOutcome, Vocab, DEFAULT_VOCAB_CAP,
};
use celm_metrics::{
    aggregate, aggregate_by_group, aggregate_table, sample_table, score_pair, Aggregate, GenerationRecord, METRIC_NAMES,
};
use celm_tensor::{read_checkpoint, write_checkpoint, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::corpus::{load_corpus, LoadedPair, PairedCorpus};
use crate::error::{HarnessError, Result};
use crate::manifest::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// The clinical context string is the prompt.
    WithContext,
    /// Only EEG is given; the prompt is empty.
    ZeroContext,
}

impl Task {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "with-context" => Ok(Task::WithContext),
            "zero-context" => Ok(Task::ZeroContext),
            other => Err(HarnessError::Config(format!("task `{other}` is not one of with-context, zero-context"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::WithContext => "with-context",
            Task::ZeroContext => "zero-context",
        }
    }

    pub fn prompt(self, pair: &LoadedPair) -> String {
        match self {
            Task::WithContext => pair.record.context.clone(),
            Task::ZeroContext => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderSettings {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub max_context: usize,
    pub pretrain: PretrainConfig,
}

impl Default for DecoderSettings {
    fn default() -> Self {
        let d = DecoderConfig::desk(0);
        DecoderSettings {
            dim: d.dim,
            layers: d.layers,
            heads: d.heads,
            ff_hidden: d.ff_hidden,
            max_context: d.max_context,
            pretrain: PretrainConfig::default(),
        }
    }
}

impl DecoderSettings {
    pub fn decoder_config(&self, vocab_size: usize) -> DecoderConfig {
        DecoderConfig {
            vocab_size,
            dim: self.dim,
            layers: self.layers,
            heads: self.heads,
            ff_hidden: self.ff_hidden,
            max_context: self.max_context,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub variants: Vec<String>,
    pub train: TrainConfig,
    pub decoder: DecoderSettings,
    pub corpus: PathBuf,
    pub task: Task,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub max_new_tokens: usize,
    pub vocab_cap: usize,
    /// Overrides for the desk projector defaults.
    pub query_count: Option<usize>,
    pub dropout: Option<f64>,
    /// Also generate from zeroed EEG rows on the validation split.
    pub zero_eeg_arm: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variants: ProjectorRegistry::default().names().iter().map(|s| s.to_string()).collect(),
            train: TrainConfig::default(),
            decoder: DecoderSettings::default(),
            corpus: PathBuf::from("corpus"),
            task: Task::WithContext,
            out: PathBuf::from("runs"),
            seeds: vec![0],
            max_new_tokens: 48,
            vocab_cap: DEFAULT_VOCAB_CAP,
            query_count: None,
            dropout: None,
            zero_eeg_arm: true,
        }
    }
}

const EXPERIMENT_KEYS: &[&str] = &[
    "variants",
    "corpus",
    "task",
    "out",
    "seeds",
    "max_new_tokens",
    "vocab_cap",
    "query_count",
    "dropout",
    "zero_eeg_arm",
];
const TRAIN_KEYS: &[&str] = &[
    "batch_size",
    "grad_accum",
    "lr",
    "weight_decay",
    "beta1",
    "beta2",
    "eps",
    "epochs",
    "warmup_ratio",
    "max_grad_norm",
];
const DECODER_KEYS: &[&str] = &[
    "dim",
    "layers",
    "heads",
    "ff_hidden",
    "max_context",
    "pretrain_epochs",
    "pretrain_lr",
    "pretrain_weight_decay",
    "pretrain_batch_size",
    "pretrain_hint_prob",
    "pretrain_max_hint_filler",
];

impl ExperimentConfig {
    /// Reads `[experiment]`, `[train]` and `[decoder]`; relative paths are
    /// resolved against `base`.
    pub fn from_config(cfg: &Config, base: &Path) -> Result<Self> {
        cfg.check_keys("experiment", EXPERIMENT_KEYS)?;
        cfg.check_keys("train", TRAIN_KEYS)?;
        cfg.check_keys("decoder", DECODER_KEYS)?;
        let d = ExperimentConfig::default();
        let e = "experiment";
        let resolve = |p: String| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let seeds = match cfg.list(e, "seeds") {
            Some(v) => v
                .iter()
                .map(|s| s.parse().map_err(|_| HarnessError::Config(format!("seed `{s}` is not an integer"))))
                .collect::<Result<Vec<u64>>>()?,
            None => d.seeds.clone(),
        };
        let t = "train";
        let td = TrainConfig::default();
        let train = TrainConfig {
            batch_size: cfg.value(t, "batch_size", td.batch_size)?,
            grad_accum: cfg.value(t, "grad_accum", td.grad_accum)?,
            lr: cfg.value(t, "lr", td.lr)?,
            weight_decay: cfg.value(t, "weight_decay", td.weight_decay)?,
            beta1: cfg.value(t, "beta1", td.beta1)?,
            beta2: cfg.value(t, "beta2", td.beta2)?,
            eps: cfg.value(t, "eps", td.eps)?,
            epochs: cfg.value(t, "epochs", td.epochs)?,
            warmup_ratio: cfg.value(t, "warmup_ratio", td.warmup_ratio)?,
            max_grad_norm: if cfg.get(t, "max_grad_norm").is_some() {
                cfg.opt(t, "max_grad_norm")?
            } else {
                td.max_grad_norm
            },
            seed: seeds.first().copied().unwrap_or(0),
        };
        let k = "decoder";
        let dd = DecoderSettings::default();
        let pd = dd.pretrain.clone();
        let decoder = DecoderSettings {
            dim: cfg.value(k, "dim", dd.dim)?,
            layers: cfg.value(k, "layers", dd.layers)?,
            heads: cfg.value(k, "heads", dd.heads)?,
            ff_hidden: cfg.value(k, "ff_hidden", dd.ff_hidden)?,
            max_context: cfg.value(k, "max_context", dd.max_context)?,
            pretrain: PretrainConfig {
                epochs: cfg.value(k, "pretrain_epochs", pd.epochs)?,
                lr: cfg.value(k, "pretrain_lr", pd.lr)?,
                weight_decay: cfg.value(k, "pretrain_weight_decay", pd.weight_decay)?,
                batch_size: cfg.value(k, "pretrain_batch_size", pd.batch_size)?,
                hint_prob: cfg.value(k, "pretrain_hint_prob", pd.hint_prob)?,
                max_hint_filler: cfg.value(k, "pretrain_max_hint_filler", pd.max_hint_filler)?,
                seed: 0,
            },
        };
        let out = ExperimentConfig {
            variants: cfg.list(e, "variants").unwrap_or(d.variants),
            train,
            decoder,
            corpus: resolve(cfg.string(e, "corpus", "corpus")),
            task: Task::parse(&cfg.string(e, "task", d.task.name()))?,
            out: resolve(cfg.string(e, "out", "runs")),
            seeds,
            max_new_tokens: cfg.value(e, "max_new_tokens", d.max_new_tokens)?,
            vocab_cap: cfg.value(e, "vocab_cap", d.vocab_cap)?,
            query_count: cfg.opt(e, "query_count")?,
            dropout: cfg.opt(e, "dropout")?,
            zero_eeg_arm: cfg.value(e, "zero_eeg_arm", d.zero_eeg_arm)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(HarnessError::Config("no projector variants selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("no seeds selected".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(HarnessError::Config("max_new_tokens must be at least 1".into()));
        }
        let reg = ProjectorRegistry::default();
        for v in &self.variants {
            if !reg.names().contains(&v.as_str()) {
                return Err(HarnessError::Config(format!(
                    "unknown projector variant `{v}`; available: {}",
                    reg.names().join(", ")
                )));
            }
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn projector_config(&self, variant: &str) -> ProjectorConfig {
        let mut p = ProjectorConfig::desk(variant, self.decoder.dim);
        if let (Some(q), true) = (self.query_count, p.query_count > 0) {
            p.query_count = q;
        }
        if let Some(d) = self.dropout {
            p.dropout = d;
        }
        p
    }
}

/// Vocabulary, frozen decoder and samples shared by every variant of a seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub vocab: Vocab,
    pub decoder: ToyDecoder,
    pub pretrain_curve: Vec<f64>,
    /// Fitted on the training tokens, applied to every split.
    pub standardizer: TokenStandardizer,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn samples(task: Task, pairs: &[&LoadedPair], norm: &TokenStandardizer) -> Result<Vec<Sample>> {
    pairs
        .iter()
        .map(|p| {
            Ok(Sample {
                id: p.record.id.clone(),
                tokens: norm.apply(&p.tokens)?,
                prompt: task.prompt(p),
                report: p.record.report.clone(),
            })
        })
        .collect()
}

pub fn build_vocab(corpus: &PairedCorpus, cap: usize) -> Result<Vocab> {
    let train = corpus.split("train");
    let texts = train
        .iter()
        .flat_map(|p| [p.record.report.as_str(), p.record.context.as_str()])
        .chain(corpus.lexicon.iter().map(String::as_str));
    Ok(Vocab::build(texts, cap)?)
}

pub fn prepare(cfg: &ExperimentConfig, corpus: &PairedCorpus, seed: u64) -> Result<Prepared> {
    let train_pairs = corpus.split("train");
    if train_pairs.is_empty() {
        return Err(HarnessError::Corpus("corpus has no training pairs".into()));
    }
    let vocab = build_vocab(corpus, cfg.vocab_cap)?;
    let mut decoder = ToyDecoder::new(&cfg.decoder.decoder_config(vocab.len()), seed)?;
    let standardizer = TokenStandardizer::fit(train_pairs.iter().map(|p| &p.tokens))?;
    let train = samples(cfg.task, &train_pairs, &standardizer)?;
    let texts: Vec<(String, String)> = train.iter().map(|s| (s.prompt.clone(), s.report.clone())).collect();
    let pcfg = PretrainConfig { seed, ..cfg.decoder.pretrain.clone() };
    let pretrain_curve = pretrain_decoder(&mut decoder, &vocab, &texts, &pcfg)?;
    Ok(Prepared {
        vocab,
        decoder,
        pretrain_curve,
        train,
        val: samples(cfg.task, &corpus.split("val"), &standardizer)?,
        test: samples(cfg.task, &corpus.split("test"), &standardizer)?,
        standardizer,
    })
}

/// Greedy generations for `set`, optionally from zeroed EEG rows.
pub fn generate_set(
    proj: &dyn Projector,
    decoder: &ToyDecoder,
    vocab: &Vocab,
    set: &[Sample],
    max_new_tokens: usize,
    zero_eeg: bool,
    section: &str,
) -> Result<Vec<GenerationRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    set.iter()
        .map(|s| {
            let tokens = if zero_eeg { zeroed(&s.tokens) } else { s.tokens.clone() };
            let aligned = align(proj, &tokens)?;
            let hypothesis =
                generate(decoder, vocab, &aligned, &s.prompt, max_new_tokens, DecodeMode::Greedy, &mut rng)?;
            Ok(GenerationRecord {
                id: s.id.clone(),
                hypothesis,
                reference: s.report.clone(),
                section: section.to_string(),
            })
        })
        .collect()
}

pub fn score_records(records: &[GenerationRecord]) -> Result<Aggregate> {
    let scores: Vec<_> = records.iter().map(|r| score_pair(&r.hypothesis, &r.reference)).collect();
    Ok(aggregate(&scores)?)
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub variant: String,
    pub seed: u64,
    pub outcome: TrainOutcome,
    pub val_perplexity: f64,
    pub test_perplexity: Option<f64>,
    pub val: Aggregate,
    pub zero_eeg_val: Option<Aggregate>,
    pub val_generations: Vec<GenerationRecord>,
    pub val_prompts: Vec<String>,
    pub params: ParamStore,
}

pub fn run_variant(cfg: &ExperimentConfig, prep: &Prepared, variant: &str, seed: u64) -> Result<VariantResult> {
    if prep.val.is_empty() {
        return Err(HarnessError::Corpus("corpus has no validation pairs".into()));
    }
    let pcfg = cfg.projector_config(variant);
    let mut proj = ProjectorRegistry::default().build(&pcfg, seed)?;
    let tcfg = TrainConfig { seed, ..cfg.train.clone() };
    let outcome = train(&tcfg, &mut *proj, &prep.decoder, &prep.vocab, &prep.train, &prep.val)?;
    let val_perplexity = evaluate(&*proj, &prep.decoder, &prep.vocab, &prep.val, false)?.perplexity();
    let test_perplexity = if prep.test.is_empty() {
        None
    } else {
        Some(evaluate(&*proj, &prep.decoder, &prep.vocab, &prep.test, false)?.perplexity())
    };
    let val_generations =
        generate_set(&*proj, &prep.decoder, &prep.vocab, &prep.val, cfg.max_new_tokens, false, "val")?;
    let val = score_records(&val_generations)?;
    let zero_eeg_val = if cfg.zero_eeg_arm {
        let g = generate_set(&*proj, &prep.decoder, &prep.vocab, &prep.val, cfg.max_new_tokens, true, "val")?;
        Some(score_records(&g)?)
    } else {
        None
    };
    Ok(VariantResult {
        variant: variant.to_string(),
        seed,
        outcome,
        val_perplexity,
        test_perplexity,
        val,
        zero_eeg_val,
        val_generations,
        val_prompts: prep.val.iter().map(|s| s.prompt.clone()).collect(),
        params: proj.params().clone(),
    })
}

/// Header of the per-variant results table.
pub fn results_header() -> String {
    let mut s = String::from("seed,variant");
    for m in METRIC_NAMES {
        s.push(',');
        s.push_str(m);
    }
    s.push_str(",perplexity,zero_eeg_rouge1,best_epoch\n");
    s
}

pub fn results_row(r: &VariantResult) -> String {
    let mut s = format!("{},{}", r.seed, r.variant);
    for v in r.val.mean {
        s.push_str(&format!(",{v:.6}"));
    }
    let z = r.zero_eeg_val.as_ref().map_or(String::from("nan"), |a| format!("{:.6}", a.mean[2]));
    s.push_str(&format!(",{:.6},{z},{}\n", r.val_perplexity, r.outcome.best_epoch));
    s
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub results: Vec<VariantResult>,
    /// `(seed, variant, error)` for runs that aborted.
    pub failures: Vec<(u64, String, String)>,
    pub table: String,
}

impl AblationReport {
    pub fn get(&self, seed: u64, variant: &str) -> Option<&VariantResult> {
        self.results.iter().find(|r| r.seed == seed && r.variant == variant)
    }
}

/// One generated report with the prompt that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLine {
    pub id: String,
    pub prompt: String,
    pub hypothesis: String,
    pub reference: String,
    pub section: String,
}

/// Line-delimited generation records; `prompts` pairs with `records`.
pub fn generations_jsonl(records: &[GenerationRecord], prompts: &[String]) -> Result<String> {
    let mut jsonl = String::new();
    for (g, p) in records.iter().zip(prompts) {
        let line = GenerationLine {
            id: g.id.clone(),
            prompt: p.clone(),
            hypothesis: g.hypothesis.clone(),
            reference: g.reference.clone(),
            section: g.section.clone(),
        };
        jsonl.push_str(&serde_json::to_string(&line)?);
        jsonl.push('\n');
    }
    Ok(jsonl)
}

/// Per-sample scores and the overall/per-section summary tables.
pub fn score_tables(records: &[GenerationRecord]) -> Result<(String, String)> {
    let scores: Vec<_> = records.iter().map(|g| score_pair(&g.hypothesis, &g.reference)).collect();
    let overall = aggregate(&scores)?;
    let groups =
        aggregate_by_group(&records.iter().zip(&scores).map(|(g, s)| (g.section.clone(), *s)).collect::<Vec<_>>());
    Ok((sample_table(records, &scores), aggregate_table(&overall, &groups)))
}

pub fn write_variant_outputs(dir: &Path, r: &VariantResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("curves.csv"), curves_csv(&r.outcome.curves))?;
    fs::write(dir.join("generations_val.jsonl"), generations_jsonl(&r.val_generations, &r.val_prompts)?)?;
    let (samples, summary) = score_tables(&r.val_generations)?;
    fs::write(dir.join("scores_val.csv"), samples)?;
    fs::write(dir.join("summary_val.csv"), summary)?;
    let info = serde_json::json!({
        "variant": r.variant,
        "seed": r.seed,
        "best_epoch": r.outcome.best_epoch,
        "best_val_loss": r.outcome.best_val_loss,
        "steps": r.outcome.steps,
        "val_perplexity": r.val_perplexity,
        "test_perplexity": r.test_perplexity,
        "decoder_hash_before": r.outcome.decoder_hash_before,
        "decoder_hash_after": r.outcome.decoder_hash_after,
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&info)? + "\n")?;
    crate::model::save_projector(dir, &r.params)
}

pub const STANDARDIZER_FILE: &str = "standardizer.ckpt";

pub fn write_standardizer(path: &Path, s: &TokenStandardizer) -> Result<()> {
    let tensors = s.tensors()?;
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    write_checkpoint(&mut w, tensors.iter().map(|(n, t)| (*n, t)))?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

pub fn read_standardizer(path: &Path) -> Result<TokenStandardizer> {
    let entries = read_checkpoint(std::io::BufReader::new(fs::File::open(path)?))?;
    let find = |name: &str| {
        entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| HarnessError::Corpus(format!("{} lacks {name}", path.display())))
    };
    Ok(TokenStandardizer::from_tensors(find(TokenStandardizer::MEAN)?, find(TokenStandardizer::STD)?)?)
}

/// Trains every variant for every seed. Results are written after each run;
/// a failing run is recorded in `failures.txt` and the others continue.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationReport> {
    cfg.validate()?;
    let corpus = load_corpus(&cfg.corpus)?;
    fs::create_dir_all(&cfg.out)?;
    let mut table = results_header();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let persist = |table: &str, failures: &[(u64, String, String)]| -> Result<()> {
        fs::write(cfg.out.join("results.csv"), table)?;
        let notes: String = failures.iter().map(|(s, v, e)| format!("seed {s} variant {v}: {e}\n")).collect();
        if notes.is_empty() {
            let _ = fs::remove_file(cfg.out.join("failures.txt"));
        } else {
            fs::write(cfg.out.join("failures.txt"), notes)?;
        }
        Ok(())
    };
    for &seed in &cfg.seeds {
        let prep = match prepare(cfg, &corpus, seed) {
            Ok(p) => p,
            Err(e) => {
                for v in &cfg.variants {
                    failures.push((seed, v.clone(), format!("decoder pretraining failed: {e}")));
                }
                persist(&table, &failures)?;
                continue;
            }
        };
        let seed_dir = cfg.out.join(format!("seed{seed}"));
        fs::create_dir_all(&seed_dir)?;
        let curve: String =
            prep.pretrain_curve.iter().enumerate().map(|(i, l)| format!("{},{l:.6}\n", i + 1)).collect();
        fs::write(seed_dir.join("pretrain_curve.csv"), format!("epoch,loss\n{curve}"))?;
        write_standardizer(&seed_dir.join(STANDARDIZER_FILE), &prep.standardizer)?;
        for variant in &cfg.variants {
            match run_variant(cfg, &prep, variant, seed) {
                Ok(r) => {
                    write_variant_outputs(&seed_dir.join(variant), &r)?;
                    table.push_str(&results_row(&r));
                    results.push(r);
                }
                Err(e) => failures.push((seed, variant.clone(), e.to_string())),
            }
            persist(&table, &failures)?;
        }
    }
    Ok(AblationReport { results, failures, table })
}

/// Per-epoch curves of several runs, tagged with the variant.
pub fn combined_curves(results: &[VariantResult]) -> String {
    let mut s = String::from("seed,variant,epoch,split,loss,perplexity\n");
    for r in results {
        for c in &r.outcome.curves {
            let CurveRow { epoch, split, loss, perplexity } = c;
            s.push_str(&format!("{},{},{epoch},{split},{loss:.6},{perplexity:.6}\n", r.seed, r.variant));
        }
    }
    s
}

/// Content hash of a results table, for determinism checks.
pub fn table_hash(table: &str) -> String {
    sha256_hex(table.as_bytes())
}
