#![allow(dead_code)]

use celm_core::{DecoderConfig, EpochTokens, PretrainConfig, Sample, ToyDecoder, Vocab};
use celm_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const EEG_DIM: usize = 200;

pub fn tokens(n: usize, seed: u64) -> EpochTokens {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EpochTokens::single(Tensor::randn(&[n, EEG_DIM], 1.0, &mut rng))
}

pub fn texts() -> Vec<(String, String)> {
    vec![
        ("routine study .".into(), "alpha rhythm posterior .".into()),
        ("routine study .".into(), "left temporal slowing .".into()),
        ("sleep deprived .".into(), "no abnormal findings .".into()),
    ]
}

pub fn vocab() -> Vocab {
    let t = texts();
    Vocab::build(t.iter().flat_map(|(p, r)| [p.as_str(), r.as_str()]), 100).unwrap()
}

pub fn frozen_decoder(vocab: &Vocab, seed: u64) -> ToyDecoder {
    let mut cfg = DecoderConfig::desk(vocab.len());
    cfg.dim = 32;
    cfg.ff_hidden = 64;
    let mut d = ToyDecoder::new(&cfg, seed).unwrap();
    d.freeze();
    d
}

pub fn pretrained_decoder(vocab: &Vocab, epochs: usize) -> ToyDecoder {
    let mut d = frozen_decoder(vocab, 3);
    let cfg = PretrainConfig { epochs, batch_size: 1, ..PretrainConfig::default() };
    celm_core::pretrain_decoder(&mut d, vocab, &texts(), &cfg).unwrap();
    d
}

pub fn samples(n: usize, len: usize, seed: u64) -> Vec<Sample> {
    let t = texts();
    (0..n)
        .map(|i| {
            let (p, r) = &t[i % t.len()];
            Sample { id: format!("s{i}"), tokens: tokens(len, seed + i as u64), prompt: p.clone(), report: r.clone() }
        })
        .collect()
}
