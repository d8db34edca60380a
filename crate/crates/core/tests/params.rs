//! Trainable-parameter accounting at full size and gradient reachability.

use celm_core::{
    sample_loss, LinearProjector, Projector, ProjectorConfig, ProjectorRegistry, EEG_END, EEG_START, SESSION_SEP,
};
use celm_tensor::Graph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;

fn count(variant: &str) -> usize {
    let cfg = ProjectorConfig::full_size(variant);
    ProjectorRegistry::default().build(&cfg, 0).unwrap().params().num_trainable()
}

#[test]
fn full_size_counts() {
    assert_eq!(count("perceiver"), 1_219_040);
    assert_eq!(count("scc"), 1_378_440);
    assert_eq!(count("sca"), 1_486_240);
}

#[test]
fn linear_count_splits_into_affine_and_framing_rows() {
    let cfg = ProjectorConfig::full_size("linear");
    let p = LinearProjector::new(&cfg, 0).unwrap();
    assert_eq!(p.affine_params(), 514_560);
    assert_eq!(p.params().num_trainable(), 522_240);
    for name in [EEG_START, EEG_END, SESSION_SEP] {
        assert_eq!(p.params().get(name).unwrap().len(), 2560);
    }
}

#[test]
fn every_used_parameter_receives_gradient() {
    let vocab = common::vocab();
    let dec = common::frozen_decoder(&vocab, 1);
    let reg = ProjectorRegistry::default();
    for variant in reg.names() {
        let cfg = ProjectorConfig::desk(variant, dec.config().dim);
        let mut proj = reg.build(&cfg, 5).unwrap();
        let input = common::tokens(12, 8);
        let prompt = vocab.encode("routine study .");
        let target = vocab.encode("alpha rhythm posterior .");
        let mut g = Graph::training();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (loss, _) = sample_loss(&mut g, &*proj, &dec, &input, &prompt, &target, 0, &mut rng).unwrap();
        g.backward(loss).unwrap();
        proj.params_mut().accumulate_grads(&g);
        let unused = proj.unused_params();
        for (name, t) in proj.params().iter() {
            let reached = t.grad.as_ref().is_some_and(|gr| gr.iter().any(|x| *x != 0.0));
            if unused.contains(&name) {
                assert!(!reached, "{variant}: {name} should be unused");
            } else {
                assert!(reached, "{variant}: {name} received no gradient");
            }
        }
        assert!(dec.params().iter().all(|(_, t)| t.grad.is_none()), "{variant}: decoder accumulated gradient");
    }
}
