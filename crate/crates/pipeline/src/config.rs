//! Run configuration: flat `key = value` text with `include` lines and
//! `CGT_`-prefixed environment overrides.
//!
//! ```text
//! # comment
//! include = default.cfg
//! name = toy
//! model.d = 64
//! ```
//!
//! Later assignments win; an included file is read at the point of its
//! `include` line, relative to the including file. `CGT_MODEL_D=32`
//! overrides `model.d` after all files are read.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cgt_model::{Ablation, BlockCounts, GenerationLimits, ModelConfig};
use thiserror::Error;

pub const ENV_PREFIX: &str = "CGT_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{file}:{line}: expected `key = value`")]
    Syntax { file: String, line: usize },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("bad value {value:?} for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("include cycle through {0}")]
    IncludeCycle(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] cgt_model::ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    /// Generated from `data.seed`.
    Synthetic,
    /// `train.jsonl`, `dev.jsonl`, `test.jsonl` in `data.dir`.
    Dir,
    /// Raw card benchmark files in `data.dir`.
    Hearthstone,
}

impl DataSource {
    fn name(self) -> &'static str {
        match self {
            DataSource::Synthetic => "synthetic",
            DataSource::Dir => "dir",
            DataSource::Hearthstone => "hearthstone",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub dir: PathBuf,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    /// Re-initialise parameters every round instead of fine-tuning.
    pub fresh_per_round: bool,
    /// 0 disables the limit. A limit makes runs timing dependent.
    pub max_seconds: f64,
    /// Evaluate on dev every this many epochs and keep the best parameters;
    /// 0 keeps the final parameters.
    pub select_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessSettings {
    pub time_limit: f64,
    pub memory_limit: u64,
    pub parallelism: usize,
    pub python: String,
    /// Command for external test units; empty when none is installed.
    pub simulator: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    pub run_dir: PathBuf,
    /// Grammar file; the built-in Python subset grammar when empty.
    pub grammar: Option<PathBuf>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub word_min_freq: usize,
    pub terminal_min_freq: usize,
    pub train: TrainSettings,
    pub decode: GenerationLimits,
    pub harness: HarnessSettings,
    pub ablation: Ablation,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "run".into(),
            seed: 0,
            run_dir: PathBuf::from("runs"),
            grammar: None,
            data: DataConfig { source: DataSource::Synthetic, dir: PathBuf::from("data"), train: 50, dev: 10, test: 10, seed: 7 },
            model: ModelConfig::default(),
            word_min_freq: 2,
            terminal_min_freq: 1,
            train: TrainSettings { epochs: 30, batch_size: 8, fresh_per_round: false, max_seconds: 0.0, select_every: 0 },
            decode: GenerationLimits::default(),
            harness: HarnessSettings {
                time_limit: 5.0,
                memory_limit: 512 << 20,
                parallelism: 4,
                python: "python3".into(),
                simulator: Vec::new(),
            },
            ablation: Ablation::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue { key: key.into(), value: value.into(), reason: e.to_string() })
}

fn path_opt(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Number of rounds N.
    pub fn rounds(&self) -> usize {
        self.model.n_iterations
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        vec![
            ("name", self.name.clone()),
            ("seed", self.seed.to_string()),
            ("rounds", m.n_iterations.to_string()),
            ("run_dir", self.run_dir.display().to_string()),
            ("grammar", self.grammar.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("data.source", self.data.source.name().into()),
            ("data.dir", self.data.dir.display().to_string()),
            ("data.train", self.data.train.to_string()),
            ("data.dev", self.data.dev.to_string()),
            ("data.test", self.data.test.to_string()),
            ("data.seed", self.data.seed.to_string()),
            ("model.d", m.d.to_string()),
            ("model.heads", m.heads.to_string()),
            ("model.k_window", m.k_window.to_string()),
            ("model.conv_layers", m.conv_layers.to_string()),
            ("model.blocks.nl", m.blocks.nl.to_string()),
            ("model.blocks.ast", m.blocks.ast.to_string()),
            ("model.blocks.test_info", m.blocks.test_info.to_string()),
            ("model.blocks.code", m.blocks.code.to_string()),
            ("model.blocks.decoder", m.blocks.decoder.to_string()),
            ("model.ff_first", m.ff_first.to_string()),
            ("model.dropout", m.dropout.to_string()),
            ("model.l_max", m.l_max.to_string()),
            ("model.s_max", m.s_max.to_string()),
            ("model.char_dim", m.char_dim.to_string()),
            ("vocab.word_min_freq", self.word_min_freq.to_string()),
            ("vocab.terminal_min_freq", self.terminal_min_freq.to_string()),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.fresh_per_round", self.train.fresh_per_round.to_string()),
            ("train.max_seconds", self.train.max_seconds.to_string()),
            ("train.select_every", self.train.select_every.to_string()),
            ("decode.max_actions", self.decode.max_actions.to_string()),
            ("decode.beam_width", self.decode.beam_width.to_string()),
            ("harness.time_limit", self.harness.time_limit.to_string()),
            ("harness.memory_limit", self.harness.memory_limit.to_string()),
            ("harness.parallelism", self.harness.parallelism.to_string()),
            ("harness.python", self.harness.python.clone()),
            ("harness.simulator", self.harness.simulator.join(" ")),
            ("ablation.test_info_encoder", self.ablation.test_info_encoder.to_string()),
            ("ablation.code_encoder", self.ablation.code_encoder.to_string()),
        ]
    }

    pub fn keys() -> Vec<&'static str> {
        RunConfig::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let m = &mut self.model;
        match key {
            "name" => self.name = v.into(),
            "seed" => self.seed = parse(key, v)?,
            "rounds" => m.n_iterations = parse(key, v)?,
            "run_dir" => self.run_dir = PathBuf::from(v),
            "grammar" => self.grammar = path_opt(v),
            "data.source" => {
                self.data.source = match v {
                    "synthetic" => DataSource::Synthetic,
                    "dir" => DataSource::Dir,
                    "hearthstone" => DataSource::Hearthstone,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: v.into(),
                            reason: "expected synthetic, dir or hearthstone".into(),
                        })
                    }
                }
            }
            "data.dir" => self.data.dir = PathBuf::from(v),
            "data.train" => self.data.train = parse(key, v)?,
            "data.dev" => self.data.dev = parse(key, v)?,
            "data.test" => self.data.test = parse(key, v)?,
            "data.seed" => self.data.seed = parse(key, v)?,
            "model.preset" => {
                let n = m.n_iterations;
                *m = match v {
                    "default" => ModelConfig::default(),
                    "tiny" => ModelConfig::tiny(),
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: v.into(),
                            reason: "expected default or tiny".into(),
                        })
                    }
                };
                m.n_iterations = n;
            }
            "model.d" => m.d = parse(key, v)?,
            "model.heads" => m.heads = parse(key, v)?,
            "model.k_window" => m.k_window = parse(key, v)?,
            "model.conv_layers" => m.conv_layers = parse(key, v)?,
            "model.blocks" => m.blocks = BlockCounts::uniform(parse(key, v)?),
            "model.blocks.nl" => m.blocks.nl = parse(key, v)?,
            "model.blocks.ast" => m.blocks.ast = parse(key, v)?,
            "model.blocks.test_info" => m.blocks.test_info = parse(key, v)?,
            "model.blocks.code" => m.blocks.code = parse(key, v)?,
            "model.blocks.decoder" => m.blocks.decoder = parse(key, v)?,
            "model.ff_first" => m.ff_first = parse(key, v)?,
            "model.dropout" => m.dropout = parse(key, v)?,
            "model.l_max" => m.l_max = parse(key, v)?,
            "model.s_max" => m.s_max = parse(key, v)?,
            "model.char_dim" => m.char_dim = parse(key, v)?,
            "vocab.word_min_freq" => self.word_min_freq = parse(key, v)?,
            "vocab.terminal_min_freq" => self.terminal_min_freq = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.fresh_per_round" => self.train.fresh_per_round = parse(key, v)?,
            "train.max_seconds" => self.train.max_seconds = parse(key, v)?,
            "train.select_every" => self.train.select_every = parse(key, v)?,
            "decode.max_actions" => self.decode.max_actions = parse(key, v)?,
            "decode.beam_width" => self.decode.beam_width = parse(key, v)?,
            "harness.time_limit" => self.harness.time_limit = parse(key, v)?,
            "harness.memory_limit" => self.harness.memory_limit = parse(key, v)?,
            "harness.parallelism" => self.harness.parallelism = parse(key, v)?,
            "harness.python" => self.harness.python = v.into(),
            "harness.simulator" => self.harness.simulator = v.split_whitespace().map(str::to_string).collect(),
            "ablation.test_info_encoder" => self.ablation.test_info_encoder = parse(key, v)?,
            "ablation.code_encoder" => self.ablation.code_encoder = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Checks value ranges that the setters cannot.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        let bad = |key: &str, value: String, reason: &str| ConfigError::BadValue { key: key.into(), value, reason: reason.into() };
        if self.rounds() == 0 {
            return Err(bad("rounds", "0".into(), "at least one round is needed"));
        }
        if self.decode.max_actions == 0 || self.decode.beam_width == 0 {
            return Err(bad("decode.max_actions", self.decode.max_actions.to_string(), "limits must be at least 1"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(bad("name", self.name.clone(), "must be a non-empty single path component"));
        }
        if self.harness.time_limit <= 0.0 {
            return Err(bad("harness.time_limit", self.harness.time_limit.to_string(), "must be positive"));
        }
        Ok(())
    }

    /// The configuration as text that [`RunConfig::load`] reads back.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Defaults, then `file` (if any), then environment overrides.
    pub fn load(file: Option<&Path>) -> Result<RunConfig, ConfigError> {
        let mut assignments = Vec::new();
        if let Some(f) = file {
            read_assignments(f, &mut Vec::new(), &mut assignments)?;
        }
        let env: BTreeMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        RunConfig::from_assignments(&assignments, &env)
    }

    pub fn from_text(text: &str) -> Result<RunConfig, ConfigError> {
        let mut assignments = Vec::new();
        parse_text(text, "<text>", None, &mut Vec::new(), &mut assignments)?;
        RunConfig::from_assignments(&assignments, &BTreeMap::new())
    }

    /// Applies assignments in order, then matching `CGT_` variables from `env`.
    pub fn from_assignments(assignments: &[(String, String)], env: &BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        for (k, v) in assignments {
            cfg.set(k, v)?;
        }
        let mut keys = RunConfig::keys();
        keys.extend(["model.preset", "model.blocks"]);
        // Presets first so explicit keys set in the environment win over them.
        keys.sort_by_key(|k| !matches!(*k, "model.preset" | "model.blocks"));
        for key in keys {
            if let Some(v) = env.get(&env_name(key)) {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

/// `model.blocks.test_info` -> `CGT_MODEL_BLOCKS_TEST_INFO`.
pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "_").to_uppercase())
}

fn read_assignments(path: &Path, stack: &mut Vec<PathBuf>, out: &mut Vec<(String, String)>) -> Result<(), ConfigError> {
    let canon = path.canonicalize().map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
    if stack.contains(&canon) {
        return Err(ConfigError::IncludeCycle(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
    stack.push(canon);
    let r = parse_text(&text, &path.display().to_string(), path.parent(), stack, out);
    stack.pop();
    r
}

fn parse_text(
    text: &str,
    file: &str,
    base: Option<&Path>,
    stack: &mut Vec<PathBuf>,
    out: &mut Vec<(String, String)>,
) -> Result<(), ConfigError> {
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { file: file.into(), line: i + 1 })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { file: file.into(), line: i + 1 });
        }
        if k == "include" {
            let p = base.map_or_else(|| PathBuf::from(v), |b| b.join(v));
            read_assignments(&p, stack, out)?;
        } else {
            out.push((k.to_string(), v.to_string()));
        }
    }
    Ok(())
}
