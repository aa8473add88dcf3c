//! Run directory layout:
//!
//! ```text
//! <run_dir>/<name>/config.txt          exact configuration used
//! <run_dir>/<name>/manifest.json       rounds, seeds, sizes, metrics
//! <run_dir>/<name>/round-<r>/checkpoint.ckpt
//! <run_dir>/<name>/round-<r>/outputs.jsonl
//! <run_dir>/<name>/round-<r>/metrics.json
//! <run_dir>/<name>/round-<r>/test-results.jsonl
//! <run_dir>/<name>/round-<r>/train-log.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use cgt_core::harness::{Category, TestResult};
use cgt_core::metrics::MetricReport;
use cgt_model::checkpoint::{save_checkpoint, CheckpointError};
use cgt_model::Model;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::pipeline::{Dataset, PipelineReport, RoundState, SampleOutput, SPLITS};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.txt";
pub const CHECKPOINT: &str = "checkpoint.ckpt";
pub const OUTPUTS: &str = "outputs.jsonl";
pub const METRICS: &str = "metrics.json";
pub const TEST_RESULTS: &str = "test-results.jsonl";
pub const TRAIN_LOG: &str = "train-log.json";

#[derive(Debug, Error)]
pub enum RunDirError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("run has no round {0}")]
    NoRound(usize),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunDirError + '_ {
    move |source| RunDirError::Io { path: path.display().to_string(), source }
}

fn json(path: &Path) -> impl FnOnce(serde_json::Error) -> RunDirError + '_ {
    move |source| RunDirError::Json { path: path.display().to_string(), source }
}

pub fn round_dir(run: &Path, round: usize) -> PathBuf {
    run.join(format!("round-{round}"))
}

/// One line of `outputs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputLine {
    pub split: String,
    pub reference: String,
    #[serde(flatten)]
    pub output: SampleOutput,
}

/// One line of `test-results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResultLine {
    pub split: String,
    pub id: String,
    pub category: Category,
    pub passed: bool,
    pub copied: bool,
    pub raw_output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub round: usize,
    pub dir: String,
    pub checkpoint: String,
    pub train_subset_size: usize,
    pub train_subset: Vec<String>,
    pub failing: BTreeMap<String, usize>,
    pub metrics: BTreeMap<String, MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub data_seed: u64,
    pub rounds_requested: usize,
    pub split_sizes: BTreeMap<String, usize>,
    pub rounds: Vec<RoundEntry>,
    pub stopped_at: Option<usize>,
    pub selected_round: Option<usize>,
}

/// Writes one run's files as the pipeline progresses.
pub struct RunWriter {
    pub dir: PathBuf,
    manifest: Option<Manifest>,
    references: BTreeMap<String, Vec<String>>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunDirError> {
    let mut text = serde_json::to_string_pretty(value).map_err(json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(io(path))
}

fn write_lines<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), RunDirError> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(io(path))?);
    for r in rows {
        let line = serde_json::to_string(&r).map_err(json(path))?;
        writeln!(w, "{line}").map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

impl RunWriter {
    /// Creates `<root>/<name>`, replacing the round directories of an earlier run with the same name.
    pub fn create(root: &Path, name: &str) -> Result<RunWriter, RunDirError> {
        let dir = root.join(name);
        if dir.exists() {
            for entry in fs::read_dir(&dir).map_err(io(&dir))? {
                let p = entry.map_err(io(&dir))?.path();
                let stale = p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("round-"));
                if stale {
                    fs::remove_dir_all(&p).map_err(io(&p))?;
                }
            }
        }
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        Ok(RunWriter { dir, manifest: None, references: BTreeMap::new() })
    }

    pub fn begin(&mut self, cfg: &RunConfig, data: &Dataset) -> Result<(), RunDirError> {
        let path = self.dir.join(CONFIG);
        fs::write(&path, cfg.to_text()).map_err(io(&path))?;
        self.references = SPLITS
            .iter()
            .map(|s| (s.to_string(), data.split(s).records.iter().map(|r| r.code.clone()).collect()))
            .collect();
        self.manifest = Some(Manifest {
            name: cfg.name.clone(),
            seed: cfg.seed,
            data_seed: cfg.data.seed,
            rounds_requested: cfg.rounds(),
            split_sizes: SPLITS.iter().map(|s| (s.to_string(), data.split(s).len())).collect(),
            rounds: Vec::new(),
            stopped_at: None,
            selected_round: None,
        });
        self.flush_manifest()
    }

    fn flush_manifest(&self) -> Result<(), RunDirError> {
        match &self.manifest {
            Some(m) => write_json(&self.dir.join(MANIFEST), m),
            None => Ok(()),
        }
    }

    pub fn write_round(&mut self, state: &RoundState, model: &Model) -> Result<(), RunDirError> {
        let rd = round_dir(&self.dir, state.round);
        fs::create_dir_all(&rd).map_err(io(&rd))?;
        save_checkpoint(model, &rd.join(CHECKPOINT))?;
        let mut lines = Vec::new();
        let mut results = Vec::new();
        for s in SPLITS {
            let refs = &self.references[s];
            for (o, r) in state.splits[s].outputs.iter().zip(refs) {
                lines.push(OutputLine { split: s.to_string(), reference: r.clone(), output: o.clone() });
                results.push(TestResultLine {
                    split: s.to_string(),
                    id: o.id.clone(),
                    category: o.result.category,
                    passed: o.result.passed,
                    copied: o.copied,
                    raw_output: o.result.raw_output.clone(),
                });
            }
        }
        write_lines(&rd.join(OUTPUTS), lines)?;
        write_lines(&rd.join(TEST_RESULTS), results)?;
        let metrics: BTreeMap<String, MetricReport> =
            state.splits.iter().map(|(k, v)| (k.clone(), v.metrics.clone())).collect();
        write_json(&rd.join(METRICS), &metrics)?;
        write_json(&rd.join(TRAIN_LOG), &state.train_log)?;
        if let Some(m) = self.manifest.as_mut() {
            m.rounds.push(RoundEntry {
                round: state.round,
                dir: format!("round-{}", state.round),
                checkpoint: format!("round-{}/{CHECKPOINT}", state.round),
                train_subset_size: state.train_subset.len(),
                train_subset: state.train_subset.clone(),
                failing: state.splits.iter().map(|(k, v)| (k.clone(), v.failing_ids().len())).collect(),
                metrics,
            });
        }
        self.flush_manifest()
    }

    pub fn finish(&mut self, _cfg: &RunConfig, report: &PipelineReport) -> Result<(), RunDirError> {
        if let Some(m) = self.manifest.as_mut() {
            m.stopped_at = report.stopped_at;
            m.selected_round = Some(report.selected_round);
        }
        self.flush_manifest()
    }
}

pub fn read_manifest(run: &Path) -> Result<Manifest, RunDirError> {
    let path = run.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    serde_json::from_str(&text).map_err(json(&path))
}

pub fn read_outputs(run: &Path, round: usize) -> Result<Vec<OutputLine>, RunDirError> {
    let path = round_dir(run, round).join(OUTPUTS);
    if !path.exists() {
        return Err(RunDirError::NoRound(round));
    }
    let reader = BufReader::new(fs::File::open(&path).map_err(io(&path))?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(io(&path))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(json(&path))?);
        }
    }
    Ok(out)
}

/// Recomputes one split's metrics from a finished round.
pub fn evaluate_round(run: &Path, round: usize, split: &str) -> Result<MetricReport, RunDirError> {
    let lines: Vec<OutputLine> = read_outputs(run, round)?.into_iter().filter(|l| l.split == split).collect();
    let cands: Vec<String> = lines.iter().map(|l| l.output.code.clone()).collect();
    let refs: Vec<String> = lines.iter().map(|l| l.reference.clone()).collect();
    let results: Vec<TestResult> = lines.iter().map(|l| l.output.result.clone()).collect();
    Ok(cgt_core::metrics::evaluate(&cands, &refs, &results))
}
