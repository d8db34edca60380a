//! `celm` subcommands. Each reads a config file, writes its artifacts
//! under `--out` and finishes with a manifest of inputs and output hashes.
//! Relative paths in the config are taken from the working directory.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use celm_core::{save_epoch_tokens, tokenize_recording, AggregationRegistry, Sample};
use celm_metrics::{read_generations, GenerationRecord};
use celm_report::{
    patient_split, read_reports, split_manifest, structure_report, write_structured, CopyExtractor, Lexicon,
};
use celm_signal::{epoch, preprocess, read_edf, save_epochs, FilterConfig, Sidecar};
use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::corpus::{load_corpus, write_synthetic, TokenizerConfig};
use crate::error::{HarnessError, Result};
use crate::experiment::{
    generate_set, generations_jsonl, prepare, results_header, results_row, run_ablation, run_variant, score_tables,
    write_variant_outputs, ExperimentConfig,
};
use crate::manifest::{list_files, Manifest};
use crate::model::{load_model, save_shared};
use crate::synth::{synth_corpus, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(name = "celm", version, about = "EEG-to-report pipeline at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Configuration file (`[section]` headers and `key = value` lines).
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; created if missing.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// EDF directory to an epoched store and epoch tokens.
    Preprocess(CommonArgs),
    /// Report corpus to structured sections and patient-disjoint splits.
    Structure(CommonArgs),
    /// Synthetic paired corpus from an event catalog.
    Synth(CommonArgs),
    /// Pretrains the decoder and trains the configured projectors.
    Train(CommonArgs),
    /// Generates reports with a trained model.
    Generate(CommonArgs),
    /// Scores hypotheses against references.
    Score(CommonArgs),
    /// Trains and compares every configured variant over every seed.
    Ablate(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Preprocess(_) => "preprocess",
            Command::Structure(_) => "structure",
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Generate(_) => "generate",
            Command::Score(_) => "score",
            Command::Ablate(_) => "ablate",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Preprocess(a)
            | Command::Structure(a)
            | Command::Synth(a)
            | Command::Train(a)
            | Command::Generate(a)
            | Command::Score(a)
            | Command::Ablate(a) => a,
        }
    }
}

/// Loaded config plus the values every command needs.
struct Ctx<'a> {
    cfg: Config,
    text: String,
    seed: u64,
    out: &'a Path,
}

impl Ctx<'_> {
    fn path(&self, section: &str, key: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.cfg.require(section, key)?))
    }
}

/// Runs one subcommand and returns its manifest.
pub fn run(command: &Command) -> Result<Manifest> {
    let args = command.args();
    let text = fs::read_to_string(&args.config)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg = Config::parse(&text)?;
    fs::create_dir_all(&args.out)?;
    let ctx = Ctx { cfg, text, seed: args.seed, out: &args.out };
    let mut inputs = vec![args.config.clone()];
    match command {
        Command::Preprocess(_) => preprocess_cmd(&ctx, &mut inputs)?,
        Command::Structure(_) => structure_cmd(&ctx, &mut inputs)?,
        Command::Synth(_) => synth_cmd(&ctx)?,
        Command::Train(_) => train_cmd(&ctx, &mut inputs)?,
        Command::Generate(_) => generate_cmd(&ctx, &mut inputs)?,
        Command::Score(_) => score_cmd(&ctx, &mut inputs)?,
        Command::Ablate(_) => ablate_cmd(&ctx, &mut inputs)?,
    }
    let manifest = Manifest::collect(command.name(), ctx.seed, &ctx.text, &inputs, ctx.out)?;
    manifest.write(ctx.out)?;
    Ok(manifest)
}

fn expand(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(list_files(dir)?.into_iter().map(|p| dir.join(p)).collect())
}

const PREPROCESS_KEYS: &[&str] =
    &["input", "target_hz", "epoch_seconds", "low_hz", "high_hz", "notch_hz", "filter_order", "notch_q", "tokenize"];

fn preprocess_cmd(ctx: &Ctx, inputs: &mut Vec<PathBuf>) -> Result<()> {
    let p = "preprocess";
    ctx.cfg.check_keys(p, PREPROCESS_KEYS)?;
    let input = ctx.path(p, "input")?;
    let fd = FilterConfig::default();
    let filter = FilterConfig {
        low_hz: ctx.cfg.value(p, "low_hz", fd.low_hz)?,
        high_hz: ctx.cfg.value(p, "high_hz", fd.high_hz)?,
        notch_hz: if ctx.cfg.get(p, "notch_hz").is_some() { ctx.cfg.opt(p, "notch_hz")? } else { fd.notch_hz },
        order: ctx.cfg.value(p, "filter_order", fd.order)?,
        notch_q: ctx.cfg.value(p, "notch_q", fd.notch_q)?,
    };
    let target_hz: f64 = ctx.cfg.value(p, "target_hz", 200.0)?;
    let epoch_seconds: f64 = ctx.cfg.value(p, "epoch_seconds", 10.0)?;
    let tokenize: bool = ctx.cfg.value(p, "tokenize", true)?;
    let tok = TokenizerConfig::from_config(&ctx.cfg)?;
    let mut files: Vec<PathBuf> = fs::read_dir(&input)
        .map_err(|e| HarnessError::Corpus(format!("cannot list {}: {e}", input.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("edf")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::Corpus(format!("no .edf files in {}", input.display())));
    }
    let encoder = if tokenize {
        Some((tok.build_encoder(target_hz.round() as usize)?, AggregationRegistry::default().build(&tok.aggregation)?))
    } else {
        None
    };
    fs::create_dir_all(ctx.out.join("epochs"))?;
    for f in &files {
        let stem = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let rec = read_edf(&fs::read(f)?).map_err(|e| HarnessError::Corpus(format!("{}: {e}", f.display())))?;
        let ep = epoch(&preprocess(&rec, target_hz, &filter)?, epoch_seconds)?;
        save_epochs(&ep, &ctx.out.join("epochs").join(&stem))?;
        if let Some((enc, agg)) = &encoder {
            fs::create_dir_all(ctx.out.join("tokens"))?;
            let tokens = tokenize_recording(&ep, &**enc, &**agg)?;
            save_epoch_tokens(&tokens, &Sidecar::of(&ep), enc.name(), agg.name(), &ctx.out.join("tokens").join(&stem))?;
        }
    }
    inputs.extend(files);
    Ok(())
}

const STRUCTURE_KEYS: &[&str] = &["input", "lexicon", "train_ratio", "val_ratio", "test_ratio"];

fn structure_cmd(ctx: &Ctx, inputs: &mut Vec<PathBuf>) -> Result<()> {
    let s = "structure";
    ctx.cfg.check_keys(s, STRUCTURE_KEYS)?;
    let input = ctx.path(s, "input")?;
    let lexicon = match ctx.cfg.get(s, "lexicon") {
        Some(_) => {
            let path = ctx.path(s, "lexicon")?;
            inputs.push(path.clone());
            Lexicon::parse(&fs::read_to_string(path)?)?
        }
        None => Lexicon::default(),
    };
    let ratios = [
        ctx.cfg.value(s, "train_ratio", 0.8)?,
        ctx.cfg.value(s, "val_ratio", 0.1)?,
        ctx.cfg.value(s, "test_ratio", 0.1)?,
    ];
    let reports = read_reports(BufReader::new(fs::File::open(&input)?))?;
    if reports.is_empty() {
        return Err(HarnessError::Corpus(format!("no reports in {}", input.display())));
    }
    inputs.push(input);
    let structured = reports
        .iter()
        .map(|r| structure_report((&r.id, &r.patient, &r.timestamp), &r.text, &lexicon, &CopyExtractor))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut buf = Vec::new();
    write_structured(&mut buf, &structured)?;
    fs::write(ctx.out.join("structured.jsonl"), buf)?;
    let split = patient_split(&reports, |r| r.patient.as_str(), ratios, ctx.seed)?;
    let ids: Vec<String> = reports.iter().map(|r| r.id.clone()).collect();
    fs::create_dir_all(ctx.out.join("splits"))?;
    for (name, list) in split_manifest(&ids, &split) {
        let body: String = list.iter().map(|id| format!("{id}\n")).collect();
        fs::write(ctx.out.join("splits").join(format!("{name}.txt")), body)?;
    }
    Ok(())
}

fn synth_cmd(ctx: &Ctx) -> Result<()> {
    let spec = SyntheticSpec::from_config(&ctx.cfg, ctx.seed)?;
    let tok = TokenizerConfig::from_config(&ctx.cfg)?;
    let edf_count = ctx.cfg.value("synth", "edf_count", 0usize)?;
    write_synthetic(&synth_corpus(&spec)?, &tok, edf_count, ctx.out)?;
    Ok(())
}

fn experiment(ctx: &Ctx) -> Result<ExperimentConfig> {
    let mut exp = ExperimentConfig::from_config(&ctx.cfg, Path::new(""))?;
    exp.out = ctx.out.to_path_buf();
    Ok(exp)
}

/// Config as stored with a trained model: corpus path made absolute.
fn stored_config(ctx: &Ctx, exp: &ExperimentConfig) -> Result<Config> {
    let mut cfg = ctx.cfg.clone();
    let corpus = fs::canonicalize(&exp.corpus).unwrap_or_else(|_| exp.corpus.clone());
    cfg.set("experiment", "corpus", corpus.display().to_string());
    cfg.set("experiment", "seeds", ctx.seed.to_string());
    Ok(cfg)
}

fn train_cmd(ctx: &Ctx, inputs: &mut Vec<PathBuf>) -> Result<()> {
    let exp = experiment(ctx)?;
    let corpus = load_corpus(&exp.corpus)?;
    inputs.extend(expand(&exp.corpus)?);
    let prep = prepare(&exp, &corpus, ctx.seed)?;
    save_shared(ctx.out, &stored_config(ctx, &exp)?, &prep)?;
    let curve: String = prep.pretrain_curve.iter().enumerate().map(|(i, l)| format!("{},{l:.6}\n", i + 1)).collect();
    fs::write(ctx.out.join("pretrain_curve.csv"), format!("epoch,loss\n{curve}"))?;
    let mut table = results_header();
    for v in &exp.variants {
        let r = run_variant(&exp, &prep, v, ctx.seed)?;
        write_variant_outputs(&ctx.out.join(v), &r)?;
        table.push_str(&results_row(&r));
    }
    fs::write(ctx.out.join("results.csv"), table)?;
    Ok(())
}

const GENERATE_KEYS: &[&str] = &["model", "variant", "split", "zero_eeg", "max_new_tokens"];

fn generate_cmd(ctx: &Ctx, inputs: &mut Vec<PathBuf>) -> Result<()> {
    let g = "generate";
    ctx.cfg.check_keys(g, GENERATE_KEYS)?;
    let model_dir = ctx.path(g, "model")?;
    let variant = ctx.cfg.string(g, "variant", "sca");
    let split = ctx.cfg.string(g, "split", "test");
    let zero_eeg: bool = ctx.cfg.value(g, "zero_eeg", false)?;
    let model = load_model(&model_dir, &variant)?;
    let max_new = ctx.cfg.value(g, "max_new_tokens", model.config.max_new_tokens)?;
    let corpus_dir = match ctx.cfg.get("experiment", "corpus") {
        Some(_) => ctx.path("experiment", "corpus")?,
        None => model.config.corpus.clone(),
    };
    let corpus = load_corpus(&corpus_dir)?;
    inputs.extend(expand(&model_dir)?);
    let pairs = corpus.split(&split);
    if pairs.is_empty() {
        return Err(HarnessError::Corpus(format!("split `{split}` is empty")));
    }
    let samples = pairs
        .iter()
        .map(|p| {
            Ok(Sample {
                id: p.record.id.clone(),
                tokens: model.standardizer.apply(&p.tokens)?,
                prompt: model.config.task.prompt(p),
                report: p.record.report.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let records = generate_set(&*model.projector, &model.decoder, &model.vocab, &samples, max_new, zero_eeg, &split)?;
    let prompts: Vec<String> = samples.iter().map(|s| s.prompt.clone()).collect();
    fs::write(ctx.out.join("generations.jsonl"), generations_jsonl(&records, &prompts)?)?;
    Ok(())
}

const SCORE_KEYS: &[&str] = &["generations", "hypotheses", "references"];

fn score_cmd(ctx: &Ctx, inputs: &mut Vec<PathBuf>) -> Result<()> {
    let s = "score";
    ctx.cfg.check_keys(s, SCORE_KEYS)?;
    let records: Vec<GenerationRecord> = if ctx.cfg.get(s, "generations").is_some() {
        let path = ctx.path(s, "generations")?;
        let recs = read_generations(BufReader::new(fs::File::open(&path)?))?;
        inputs.push(path);
        recs
    } else {
        let hyp_path = ctx.path(s, "hypotheses")?;
        let ref_path = ctx.path(s, "references")?;
        let hyps = fs::read_to_string(&hyp_path)?;
        let refs = fs::read_to_string(&ref_path)?;
        let hyps: Vec<&str> = hyps.lines().collect();
        let refs: Vec<&str> = refs.lines().collect();
        if hyps.len() != refs.len() {
            return Err(HarnessError::Corpus(format!("{} hypotheses but {} references", hyps.len(), refs.len())));
        }
        inputs.extend([hyp_path, ref_path]);
        hyps.iter()
            .zip(&refs)
            .enumerate()
            .map(|(i, (h, r))| GenerationRecord {
                id: format!("line{}", i + 1),
                hypothesis: h.to_string(),
                reference: r.to_string(),
                section: String::new(),
            })
            .collect()
    };
    if records.is_empty() {
        return Err(HarnessError::Corpus("nothing to score".into()));
    }
    let (samples, summary) = score_tables(&records)?;
    fs::write(ctx.out.join("scores.csv"), samples)?;
    fs::write(ctx.out.join("summary.csv"), summary)?;
    Ok(())
}

fn ablate_cmd(ctx: &Ctx, inputs: &mut Vec<PathBuf>) -> Result<()> {
    let mut exp = experiment(ctx)?;
    if ctx.cfg.get("experiment", "seeds").is_none() {
        exp.seeds = vec![ctx.seed];
    }
    inputs.extend(expand(&exp.corpus)?);
    let report = run_ablation(&exp)?;
    if report.results.is_empty() {
        let first = report.failures.first().map(|f| f.2.clone()).unwrap_or_default();
        return Err(HarnessError::Corpus(format!("every ablation run failed; first: {first}")));
    }
    Ok(())
}
