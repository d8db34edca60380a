//! On-disk paired corpus: `pairs.jsonl` plus one epoch-token store per pair.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use celm_core::{
    load_epoch_tokens, save_epoch_tokens, tokenize_recording, AggregationRegistry, EegEncoder, EncoderRegistry,
    EncoderSpec, EpochTokens,
};
use celm_signal::{write_edf, EegRecording, EpochedRecording, Sidecar};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::synth::SyntheticCorpus;

pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const LEXICON_FILE: &str = "lexicon.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub patient: String,
    pub split: String,
    /// Clinical context offered as the prompt in the with-context task.
    #[serde(default)]
    pub context: String,
    pub report: String,
    #[serde(default)]
    pub events: Vec<String>,
    /// Token store stem relative to the corpus directory.
    pub tokens: String,
}

#[derive(Debug, Clone)]
pub struct LoadedPair {
    pub record: PairRecord,
    pub tokens: EpochTokens,
}

#[derive(Debug, Clone)]
pub struct PairedCorpus {
    pub dir: PathBuf,
    pub pairs: Vec<LoadedPair>,
    /// Extra texts guaranteed to be in the vocabulary.
    pub lexicon: Vec<String>,
}

impl PairedCorpus {
    pub fn split(&self, name: &str) -> Vec<&LoadedPair> {
        self.pairs.iter().filter(|p| p.record.split == name).collect()
    }
}

pub fn write_pairs(path: &Path, pairs: &[PairRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs(path: &Path) -> Result<Vec<PairRecord>> {
    let r = BufReader::new(
        fs::File::open(path).map_err(|e| HarnessError::Corpus(format!("cannot open {}: {e}", path.display())))?,
    );
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| HarnessError::Corpus(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn load_corpus(dir: &Path) -> Result<PairedCorpus> {
    let records = read_pairs(&dir.join(PAIRS_FILE))?;
    if records.is_empty() {
        return Err(HarnessError::Corpus(format!("{} has no pairs", dir.display())));
    }
    let mut pairs = Vec::with_capacity(records.len());
    for record in records {
        let (tokens, _) = load_epoch_tokens(&dir.join(&record.tokens))?;
        pairs.push(LoadedPair { record, tokens });
    }
    let lexicon = match fs::read_to_string(dir.join(LEXICON_FILE)) {
        Ok(s) => s.lines().map(str::to_string).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    Ok(PairedCorpus { dir: dir.to_path_buf(), pairs, lexicon })
}

/// Encoder and aggregation used to turn recordings into epoch tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerConfig {
    pub encoder: String,
    pub aggregation: String,
    pub encoder_seed: u64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig { encoder: "toy".into(), aggregation: "mean".into(), encoder_seed: 0 }
    }
}

impl TokenizerConfig {
    /// Reads the optional `[tokenizer]` section.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let t = "tokenizer";
        cfg.check_keys(t, &["encoder", "aggregation", "encoder_seed"])?;
        let d = TokenizerConfig::default();
        Ok(TokenizerConfig {
            encoder: cfg.string(t, "encoder", &d.encoder),
            aggregation: cfg.string(t, "aggregation", &d.aggregation),
            encoder_seed: cfg.value(t, "encoder_seed", d.encoder_seed)?,
        })
    }

    pub fn build_encoder(&self, sample_rate_hz: usize) -> Result<Box<dyn EegEncoder>> {
        let spec =
            EncoderSpec { sample_rate_hz: sample_rate_hz as f64, seed: self.encoder_seed, ..EncoderSpec::default() };
        Ok(EncoderRegistry::default().build(&self.encoder, &spec)?)
    }
}

/// Continuous recording from an epoched one, channel-major.
pub fn unepoch(ep: &EpochedRecording) -> Result<EegRecording> {
    let samples = (0..ep.num_channels())
        .map(|c| (0..ep.num_epochs).flat_map(|n| ep.channel(n, c).iter().copied()).collect())
        .collect();
    Ok(EegRecording::new(ep.channels.clone(), ep.sample_rate_hz, samples, ep.start_time)?
        .with_ids(ep.patient_id.clone(), ep.session_id.clone()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWriteSummary {
    pub pairs: usize,
    pub edf_files: usize,
    pub encoder_hash_before: String,
    pub encoder_hash_after: String,
}

/// Tokenizes every synthesized recording and writes the corpus; the first
/// `edf_count` recordings are also written as EDF files.
pub fn write_synthetic(
    corpus: &SyntheticCorpus,
    tok: &TokenizerConfig,
    edf_count: usize,
    out: &Path,
) -> Result<SynthWriteSummary> {
    fs::create_dir_all(out.join("tokens"))?;
    if edf_count > 0 {
        fs::create_dir_all(out.join("edf"))?;
    }
    let encoder = tok.build_encoder(corpus.spec().sample_rate_hz)?;
    let agg = AggregationRegistry::default().build(&tok.aggregation)?;
    let before = encoder.params().content_hash();
    let mut records = Vec::with_capacity(corpus.len());
    for i in 0..corpus.len() {
        let item = corpus.item(i);
        let tokens = tokenize_recording(&item.recording, &*encoder, &*agg)?;
        let stem = format!("tokens/{}", item.id);
        save_epoch_tokens(&tokens, &Sidecar::of(&item.recording), encoder.name(), agg.name(), &out.join(&stem))?;
        if i < edf_count {
            let bytes = write_edf(&unepoch(&item.recording)?)?;
            fs::write(out.join("edf").join(format!("{}.edf", item.id)), bytes)?;
        }
        records.push(PairRecord {
            id: item.id,
            patient: item.recording.patient_id.clone(),
            split: item.split.to_string(),
            context: item.context,
            report: item.report,
            events: item.events,
            tokens: stem,
        });
    }
    write_pairs(&out.join(PAIRS_FILE), &records)?;
    fs::write(out.join(LEXICON_FILE), corpus.spec().lexicon_texts().join("\n") + "\n")?;
    Ok(SynthWriteSummary {
        pairs: records.len(),
        edf_files: edf_count.min(corpus.len()),
        encoder_hash_before: before,
        encoder_hash_after: encoder.params().content_hash(),
    })
}
