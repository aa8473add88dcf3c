mod common;

use cgt_core::grammar::load_grammar;
use cgt_model::checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
use cgt_model::model::ModelError;
use cgt_model::train::{train, TrainConfig};
use cgt_model::{Ablation, Adafactor, GenerationLimits};
use common::{small_config, toy};

#[test]
fn round_trip_preserves_parameters_and_outputs() {
    let toy = toy(4, 31);
    let mut model = toy.model(small_config(), 7);
    let samples = toy.prepared(&model);
    let cfg = TrainConfig { epochs: 2, batch_size: 2, seed: 1, max_seconds: None };
    train(&mut model, &mut Adafactor::new(), &samples, &cfg, |_, _| true);
    model.ablation = Ablation { test_info_encoder: false, code_encoder: true };

    let mut bytes = Vec::new();
    write_checkpoint(&model, &mut bytes).unwrap();
    let back = read_checkpoint(bytes.as_slice(), toy.grammar).unwrap();
    assert_eq!(back.config, model.config);
    assert_eq!(back.vocabs, model.vocabs);
    assert_eq!(back.ablation, model.ablation);
    assert_eq!(back.store.names(), model.store.names());
    for id in 0..model.store.len() {
        assert_eq!(back.store.value(id), model.store.value(id), "{}", model.store.name(id));
    }
    let limits = GenerationLimits { max_actions: 80, beam_width: 1 };
    for s in &toy.samples {
        let a = model.generate(&model.input(s), toy.grammar, limits).unwrap();
        let b = back.generate(&back.input(s), toy.grammar, limits).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn rejects_foreign_files_and_grammars() {
    let toy = toy(3, 32);
    let model = toy.model(small_config(), 8);
    assert!(matches!(read_checkpoint(&b"hello\n{}"[..], toy.grammar), Err(CheckpointError::Header(_))));
    let mut bytes = Vec::new();
    write_checkpoint(&model, &mut bytes).unwrap();
    let other = load_grammar("%root root\nroot -> Module\nModule -> body\nbody -> Pass\nPass ->\n").unwrap();
    assert!(matches!(
        read_checkpoint(bytes.as_slice(), &other),
        Err(CheckpointError::Model(ModelError::GrammarMismatch { .. }))
    ));
    let cut = &bytes[..bytes.len() / 2];
    assert!(matches!(read_checkpoint(cut, toy.grammar), Err(CheckpointError::Format(_))));
}

#[test]
fn same_seed_same_training() {
    let toy = toy(4, 33);
    let run = || {
        let mut model = toy.model(small_config(), 9);
        let samples = toy.prepared(&model);
        let cfg = TrainConfig { epochs: 2, batch_size: 2, seed: 4, max_seconds: None };
        let log = train(&mut model, &mut Adafactor::new(), &samples, &cfg, |_, _| true);
        let mut bytes = Vec::new();
        write_checkpoint(&model, &mut bytes).unwrap();
        (log, bytes)
    };
    let (log_a, a) = run();
    let (log_b, b) = run();
    assert_eq!(log_a, log_b);
    assert_eq!(a, b);
}

#[test]
fn parameter_values_depend_only_on_name_and_seed() {
    let toy = toy(3, 34);
    let full = toy.model(small_config(), 10);
    let mut cfg = small_config();
    cfg.blocks.decoder = 1;
    let smaller = toy.model(cfg, 10);
    for id in 0..smaller.store.len() {
        let name = smaller.store.name(id);
        let twin = full.store.id(name).unwrap();
        assert_eq!(smaller.store.value(id), full.store.value(twin), "{name}");
    }
}
