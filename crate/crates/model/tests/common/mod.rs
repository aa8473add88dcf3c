#![allow(dead_code)]

use cgt_core::grammar::python::python_grammar;
use cgt_core::grammar::Grammar;
use cgt_core::text::{build_vocabs, encode_sample, generate_synthetic_corpus, EncodedSample, Record, VocabSettings, Vocabs};
use cgt_model::{Model, ModelConfig, PreparedSample};

pub struct Toy {
    pub grammar: &'static Grammar,
    pub records: Vec<Record>,
    pub vocabs: Vocabs,
    pub samples: Vec<EncodedSample>,
}

pub fn toy(n: usize, seed: u64) -> Toy {
    let grammar = python_grammar();
    let records = generate_synthetic_corpus(n, seed, 2.0, 256 << 20).unwrap().records;
    let vocabs = build_vocabs(&records, grammar, VocabSettings::default()).unwrap();
    let samples = records.iter().map(|r| encode_sample(r, &vocabs, grammar).unwrap()).collect();
    Toy { grammar, records, vocabs, samples }
}

/// A deliberately small model so tests stay fast.
pub fn small_config() -> ModelConfig {
    let mut cfg = ModelConfig::tiny();
    cfg.d = 16;
    cfg.heads = 2;
    cfg.ff_first = 32;
    cfg.char_dim = 4;
    cfg
}

impl Toy {
    pub fn model(&self, cfg: ModelConfig, seed: u64) -> Model {
        Model::new(cfg, self.vocabs.clone(), self.grammar, seed).unwrap()
    }

    pub fn prepared(&self, model: &Model) -> Vec<PreparedSample> {
        self.samples.iter().map(|s| model.prepare(s, self.grammar).unwrap()).collect()
    }
}
