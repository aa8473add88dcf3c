//! The N-round protocol: train, generate, test, then retrain on the failing
//! training samples with their test information and previous code as extra
//! inputs. Samples that passed are copied through unchanged.

use std::collections::BTreeMap;
use std::path::Path;

use cgt_core::grammar::python::python_grammar;
use cgt_core::grammar::{load_grammar, Grammar, RuleSequence};
use cgt_core::harness::{corpus_test_sweep, test_info_for, Harness, TestInfo, TestResult};
use cgt_core::metrics::{evaluate, MetricReport};
use cgt_core::text::{
    build_vocabs, encode_sample, generate_synthetic_corpus, load_hearthstone, read_corpus, Corpus, EncodedSample, TextError,
    VocabSettings, Vocabs,
};
use cgt_model::train::{train, TrainConfig, TrainLog};
use cgt_model::{Adafactor, Model, ModelError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, DataSource, RunConfig};
use crate::run_dir::{RunDirError, RunWriter};

pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data: {0}")]
    Data(#[from] TextError),
    #[error("grammar {path}: {message}")]
    Grammar { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("round {0}: no failing training samples remain")]
    EmptySubset(usize),
    #[error(transparent)]
    RunDir(#[from] RunDirError),
}

impl PipelineError {
    /// Whether the failure is caused by input data rather than the run itself.
    pub fn is_data_error(&self) -> bool {
        matches!(self, PipelineError::Data(_) | PipelineError::Grammar { .. })
    }
}

/// Train, dev and test corpora.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

impl Dataset {
    pub fn split(&self, name: &str) -> &Corpus {
        match name {
            "train" => &self.train,
            "dev" => &self.dev,
            _ => &self.test,
        }
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, PipelineError> {
    let (t, m) = (cfg.harness.time_limit, cfg.harness.memory_limit);
    match cfg.data.source {
        DataSource::Synthetic => {
            let n = cfg.data.train + cfg.data.dev + cfg.data.test;
            let mut all = generate_synthetic_corpus(n, cfg.data.seed, t, m)?.records;
            let test = all.split_off(cfg.data.train + cfg.data.dev);
            let dev = all.split_off(cfg.data.train);
            let corpus = |split: &str, records| Corpus { split: split.into(), records };
            Ok(Dataset { train: corpus("train", all), dev: corpus("dev", dev), test: corpus("test", test) })
        }
        DataSource::Dir => {
            let read = |s: &str| read_corpus(&cfg.data.dir.join(format!("{s}.jsonl")), s);
            Ok(Dataset { train: read("train")?, dev: read("dev")?, test: read("test")? })
        }
        DataSource::Hearthstone => {
            let mut splits = load_hearthstone(&cfg.data.dir, t, m)?.into_iter();
            let mut next = || splits.next().expect("three splits");
            Ok(Dataset { train: next(), dev: next(), test: next() })
        }
    }
}

pub fn load_run_grammar(cfg: &RunConfig) -> Result<Grammar, PipelineError> {
    match &cfg.grammar {
        None => Ok(python_grammar().clone()),
        Some(p) => {
            let err = |m: String| PipelineError::Grammar { path: p.display().to_string(), message: m };
            let text = std::fs::read_to_string(p).map_err(|e| err(e.to_string()))?;
            load_grammar(&text).map_err(|e| err(e.to_string()))
        }
    }
}

pub fn harness_for(cfg: &RunConfig) -> Harness {
    Harness {
        python: cfg.harness.python.clone(),
        simulator: (!cfg.harness.simulator.is_empty()).then(|| cfg.harness.simulator.clone()),
        ..Harness::default()
    }
}

/// Everything known about one sample after a round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOutput {
    pub id: String,
    pub code: String,
    pub rules: RuleSequence,
    pub result: TestResult,
    pub test_info: TestInfo,
    /// Carried over from the previous round because it passed there.
    pub copied: bool,
    /// Generation hit the action limit.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutputs {
    pub split: String,
    pub outputs: Vec<SampleOutput>,
    pub metrics: MetricReport,
}

impl SplitOutputs {
    pub fn failing_ids(&self) -> Vec<String> {
        self.outputs.iter().filter(|o| !o.result.passed).map(|o| o.id.clone()).collect()
    }

    pub fn passed_ids(&self) -> Vec<String> {
        self.outputs.iter().filter(|o| o.result.passed).map(|o| o.id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub round: usize,
    /// Training samples used this round.
    pub train_subset: Vec<String>,
    pub splits: BTreeMap<String, SplitOutputs>,
    pub train_log: TrainLog,
}

impl RoundState {
    pub fn metrics(&self, split: &str) -> &MetricReport {
        &self.splits[split].metrics
    }
}

/// Encoded samples of every split, aligned with the corpora.
pub struct Encoded {
    pub vocabs: Vocabs,
    pub splits: BTreeMap<String, Vec<EncodedSample>>,
}

pub fn encode_dataset(cfg: &RunConfig, data: &Dataset, grammar: &Grammar) -> Result<Encoded, PipelineError> {
    let settings = VocabSettings {
        word_min_freq: cfg.word_min_freq,
        terminal_min_freq: cfg.terminal_min_freq,
        s_max: cfg.model.s_max,
    };
    let vocabs = build_vocabs(&data.train.records, grammar, settings)?;
    let mut splits = BTreeMap::new();
    for s in SPLITS {
        let enc = data.split(s).records.iter().map(|r| encode_sample(r, &vocabs, grammar)).collect::<Result<Vec<_>, _>>()?;
        splits.insert(s.to_string(), enc);
    }
    Ok(Encoded { vocabs, splits })
}

/// Adds previous-round feedback to a sample that failed.
fn with_feedback(sample: &EncodedSample, prev: Option<&SampleOutput>, vocabs: &Vocabs) -> EncodedSample {
    match prev {
        Some(p) => sample.clone().with_feedback(&p.test_info.text(), p.rules.clone(), vocabs),
        None => sample.clone(),
    }
}

/// Trains on `subset`, continuing from `init` unless it is `None`.
pub fn train_round(
    cfg: &RunConfig,
    round: usize,
    subset: &[EncodedSample],
    init: Option<Model>,
    vocabs: &Vocabs,
    grammar: &Grammar,
    mut after_epoch: impl FnMut(usize, &Model) -> bool,
) -> Result<(Model, TrainLog), PipelineError> {
    if subset.is_empty() {
        return Err(PipelineError::EmptySubset(round));
    }
    let mut model = match init {
        Some(m) => m,
        None => {
            let mut m = Model::new(cfg.model.clone(), vocabs.clone(), grammar, cfg.seed)?;
            m.ablation = cfg.ablation;
            m
        }
    };
    let prepared = subset.iter().map(|s| model.prepare(s, grammar)).collect::<Result<Vec<_>, _>>()?;
    let tc = TrainConfig {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        seed: cfg.seed.wrapping_add(round as u64 * 1_000_003),
        max_seconds: (cfg.train.max_seconds > 0.0).then_some(cfg.train.max_seconds),
    };
    let log = train(&mut model, &mut Adafactor::new(), &prepared, &tc, |e, m| after_epoch(e, m));
    Ok((model, log))
}

/// Generates (or copies through) and tests every sample of one split.
pub fn infer_round(
    cfg: &RunConfig,
    model: &Model,
    grammar: &Grammar,
    split: &str,
    corpus: &Corpus,
    samples: &[EncodedSample],
    prev: Option<&SplitOutputs>,
    harness: &Harness,
) -> SplitOutputs {
    let prev_outputs: Vec<Option<&SampleOutput>> = match prev {
        Some(p) => p.outputs.iter().map(Some).collect(),
        None => vec![None; samples.len()],
    };
    let fresh: Vec<usize> = (0..samples.len()).filter(|&i| !prev_outputs[i].is_some_and(|p| p.result.passed)).collect();
    let generated: Vec<(String, RuleSequence, bool)> = fresh
        .par_iter()
        .map(|&i| {
            let input = model.input(&with_feedback(&samples[i], prev_outputs[i], &model.vocabs));
            match model.generate(&input, grammar, cfg.decode) {
                Ok(g) => (g.code, g.rules, g.partial),
                Err(_) => (String::new(), RuleSequence::default(), true),
            }
        })
        .collect();
    let codes: Vec<String> = generated.iter().map(|g| g.0.clone()).collect();
    let specs: Vec<_> = fresh.iter().map(|&i| corpus.records[i].test_unit.clone()).collect();
    let sweep = corpus_test_sweep(harness, &codes, &specs, cfg.harness.parallelism);

    let mut outputs: Vec<Option<SampleOutput>> =
        prev_outputs.iter().map(|p| p.filter(|p| p.result.passed).map(|p| SampleOutput { copied: true, ..p.clone() })).collect();
    for ((&i, (code, rules, partial)), result) in fresh.iter().zip(generated).zip(sweep.results) {
        let test_info = test_info_for(&result, &code);
        outputs[i] = Some(SampleOutput { id: corpus.records[i].id.clone(), code, rules, result, test_info, copied: false, partial });
    }
    let outputs: Vec<SampleOutput> = outputs.into_iter().map(|o| o.expect("every sample has an output")).collect();
    let cands: Vec<String> = outputs.iter().map(|o| o.code.clone()).collect();
    let refs: Vec<String> = corpus.records.iter().map(|r| r.code.clone()).collect();
    let results: Vec<TestResult> = outputs.iter().map(|o| o.result.clone()).collect();
    SplitOutputs { split: split.to_string(), metrics: evaluate(&cands, &refs, &results), outputs }
}

/// Orders candidate models: dev Test-Acc first, then dev BLEU.
pub fn better(a: &MetricReport, b: &MetricReport) -> bool {
    let (pa, pb) = (a.n_pass * b.m.max(1), b.n_pass * a.m.max(1));
    pa > pb || (pa == pb && a.bleu > b.bleu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub rounds: Vec<RoundState>,
    /// Round that raised `EmptySubset`, when the run stopped early.
    pub stopped_at: Option<usize>,
    /// Round with the best dev Test-Acc (BLEU breaks ties).
    pub selected_round: usize,
}

impl PipelineReport {
    pub fn final_test(&self) -> &MetricReport {
        self.rounds[self.selected_round - 1].metrics("test")
    }
}

/// Runs up to `cfg.rounds()` rounds, writing each to `writer` when given.
pub fn run_pipeline(cfg: &RunConfig, mut writer: Option<&mut RunWriter>) -> Result<PipelineReport, PipelineError> {
    cfg.validate()?;
    let grammar = load_run_grammar(cfg)?;
    let data = load_dataset(cfg)?;
    let enc = encode_dataset(cfg, &data, &grammar)?;
    let harness = harness_for(cfg);
    let mut rounds: Vec<RoundState> = Vec::new();
    let mut model: Option<Model> = None;
    let mut stopped_at = None;
    if let Some(w) = writer.as_deref_mut() {
        w.begin(cfg, &data)?;
    }
    for round in 1..=cfg.rounds() {
        let prev = rounds.last();
        let train_samples = &enc.splits["train"];
        let subset: Vec<EncodedSample> = match prev {
            None => train_samples.clone(),
            Some(p) => p.splits["train"]
                .outputs
                .iter()
                .zip(train_samples)
                .filter(|(o, _)| !o.result.passed)
                .map(|(o, s)| with_feedback(s, Some(o), &enc.vocabs))
                .collect(),
        };
        let train_subset: Vec<String> = subset.iter().map(|s| s.sample_id.clone()).collect();
        let init = if cfg.train.fresh_per_round { None } else { model.take() };

        let prev_dev = prev.map(|p| &p.splits["dev"]);
        let mut best: Option<(MetricReport, cgt_model::ParamStore)> = None;
        let select = |e: usize, m: &Model, best: &mut Option<(MetricReport, cgt_model::ParamStore)>| {
            if cfg.train.select_every > 0 && (e + 1) % cfg.train.select_every == 0 {
                let dev = infer_round(cfg, m, &grammar, "dev", &data.dev, &enc.splits["dev"], prev_dev, &harness);
                if best.as_ref().is_none_or(|(b, _)| better(&dev.metrics, b)) {
                    *best = Some((dev.metrics, m.store.clone()));
                }
            }
            true
        };
        let (mut trained, log) = match train_round(cfg, round, &subset, init, &enc.vocabs, &grammar, |e, m| select(e, m, &mut best)) {
            Ok(r) => r,
            Err(PipelineError::EmptySubset(r)) if r > 1 => {
                stopped_at = Some(r);
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some((_, store)) = best {
            trained.store = store;
        }
        let mut splits = BTreeMap::new();
        for s in SPLITS {
            let prev_split = prev.map(|p| &p.splits[s]);
            let out = infer_round(cfg, &trained, &grammar, s, data.split(s), &enc.splits[s], prev_split, &harness);
            splits.insert(s.to_string(), out);
        }
        let state = RoundState { round, train_subset, splits, train_log: log };
        if let Some(w) = writer.as_deref_mut() {
            w.write_round(&state, &trained)?;
        }
        rounds.push(state);
        model = Some(trained);
    }
    let mut selected = 1;
    for (i, r) in rounds.iter().enumerate().skip(1) {
        if better(r.metrics("dev"), rounds[selected - 1].metrics("dev")) {
            selected = i + 1;
        }
    }
    let report = PipelineReport { rounds, stopped_at, selected_round: selected };
    if let Some(w) = writer {
        w.finish(cfg, &report)?;
    }
    Ok(report)
}

/// One row of the ablation grid: a model variant and its test metrics per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub test_info_encoder: bool,
    pub code_encoder: bool,
    pub rounds: Vec<MetricReport>,
}

pub const VARIANTS: [(&str, bool, bool); 4] = [
    ("full", true, true),
    ("no-test-info-encoder", false, true),
    ("no-code-encoder", true, false),
    ("no-auxiliary-encoders", false, false),
];

/// Runs the pipeline once per variant; each run is named `<name>-<variant>`.
pub fn ablation(cfg: &RunConfig, root: Option<&Path>) -> Result<Vec<AblationRow>, PipelineError> {
    let mut rows = Vec::new();
    for (label, ti, code) in VARIANTS {
        let mut c = cfg.clone();
        c.name = format!("{}-{label}", cfg.name);
        c.ablation = cgt_model::Ablation { test_info_encoder: ti, code_encoder: code };
        let mut writer = root.map(|r| RunWriter::create(r, &c.name)).transpose()?;
        let report = run_pipeline(&c, writer.as_mut())?;
        rows.push(AblationRow {
            variant: label.to_string(),
            test_info_encoder: ti,
            code_encoder: code,
            rounds: report.rounds.iter().map(|r| r.metrics("test").clone()).collect(),
        });
    }
    Ok(rows)
}
