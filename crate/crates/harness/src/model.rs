//! On-disk bundle of a trained run: vocabulary, frozen decoder, token
//! standardizer and one projector per variant.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use celm_core::{Projector, ProjectorRegistry, TokenStandardizer, ToyDecoder, Vocab};
use celm_tensor::ParamStore;

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::experiment::{read_standardizer, write_standardizer, ExperimentConfig, Prepared, STANDARDIZER_FILE};

pub const TRAIN_CONFIG_FILE: &str = "train.cfg";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const DECODER_FILE: &str = "decoder.ckpt";
pub const PROJECTOR_FILE: &str = "projector.ckpt";

pub struct ModelBundle {
    pub config: ExperimentConfig,
    pub vocab: Vocab,
    pub decoder: ToyDecoder,
    pub standardizer: TokenStandardizer,
    pub projector: Box<dyn Projector>,
}

fn save_store(path: &Path, store: &ParamStore) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    store.save(&mut w)?;
    w.flush()?;
    Ok(())
}

fn load_store(path: &Path) -> Result<ParamStore> {
    let f = fs::File::open(path)
        .map_err(|e| HarnessError::Corpus(format!("cannot open checkpoint {}: {e}", path.display())))?;
    Ok(ParamStore::load(BufReader::new(f))?)
}

/// Writes the parts shared by every variant of one run.
pub fn save_shared(dir: &Path, config: &Config, prep: &Prepared) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(TRAIN_CONFIG_FILE), config.render())?;
    fs::write(dir.join(VOCAB_FILE), prep.vocab.render())?;
    save_store(&dir.join(DECODER_FILE), prep.decoder.params())?;
    write_standardizer(&dir.join(STANDARDIZER_FILE), &prep.standardizer)?;
    Ok(())
}

pub fn save_projector(dir: &Path, params: &ParamStore) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_store(&dir.join(PROJECTOR_FILE), params)
}

/// Rebuilds the frozen decoder and the `variant` projector of a run.
pub fn load_model(dir: &Path, variant: &str) -> Result<ModelBundle> {
    let cfg_path = dir.join(TRAIN_CONFIG_FILE);
    if !cfg_path.is_file() {
        return Err(HarnessError::Corpus(format!("{} is not a trained model directory", dir.display())));
    }
    let config = ExperimentConfig::from_config(&Config::load(&cfg_path)?, dir)?;
    let vocab = Vocab::parse(&fs::read_to_string(dir.join(VOCAB_FILE))?)?;
    let mut decoder = ToyDecoder::new(&config.decoder.decoder_config(vocab.len()), 0)?;
    decoder.load_params(&load_store(&dir.join(DECODER_FILE))?)?;
    decoder.freeze();
    let standardizer = read_standardizer(&dir.join(STANDARDIZER_FILE))?;
    let mut projector = ProjectorRegistry::default().build(&config.projector_config(variant), 0)?;
    let stored = load_store(&dir.join(variant).join(PROJECTOR_FILE))?;
    projector.params_mut().copy_values_from(&stored)?;
    Ok(ModelBundle { config, vocab, decoder, standardizer, projector })
}
