//! The `cgt` command line. Exit codes: 0 success, 1 usage error, 2 data
//! error, 3 runtime failure.

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use cgt_core::grammar::python::parse_to_ast;
use cgt_core::grammar::ast_to_rules;
use cgt_core::harness::{test_info_for, TestKind, TestUnitSpec};
use cgt_core::metrics::MetricReport;
use cgt_core::text::{write_corpus, EncodedSample, EncodedText};
use cgt_model::checkpoint::{load_checkpoint, save_checkpoint};

use crate::config::{ConfigError, DataSource, RunConfig};
use crate::pipeline::{
    ablation, encode_dataset, harness_for, load_dataset, load_run_grammar, run_pipeline, train_round, PipelineError, SPLITS,
};
use crate::run_dir::{evaluate_round, RunDirError, RunWriter};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cgt", version, about = "Grammar-based code generation with test feedback")]
pub struct Cli {
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Configuration file (key = value lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding run directories.
    #[arg(long = "run-dir", global = true)]
    pub run_dir: Option<PathBuf>,
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes train.jsonl, dev.jsonl and test.jsonl for the configured data source.
    PrepareData {
        /// synthetic or hearthstone; defaults to the configured source.
        #[arg(long)]
        source: Option<String>,
        /// Synthetic training-split size.
        #[arg(long)]
        n: Option<usize>,
        /// Raw benchmark directory for the hearthstone source.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the full multi-round protocol.
    Pipeline {
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        name: Option<String>,
    },
    /// Trains the round-one model on the full training split.
    Train {
        /// Checkpoint path; defaults to <run-dir>/<name>/train/checkpoint.ckpt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generates code for one description.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Description text; read from standard input when absent.
        #[arg(long)]
        nl: Option<String>,
        /// Test information from a previous attempt.
        #[arg(long)]
        test_info: Option<String>,
        /// Previous attempt's code file.
        #[arg(long)]
        last_code: Option<PathBuf>,
    },
    /// Runs one code file against a test unit.
    Test {
        #[arg(long)]
        code: PathBuf,
        /// JSON test-unit spec.
        #[arg(long, conflicts_with = "assertions")]
        spec: Option<PathBuf>,
        /// Assertion program run after the code.
        #[arg(long)]
        assertions: Option<PathBuf>,
        #[arg(long)]
        time_limit: Option<f64>,
    },
    /// Recomputes metrics of a finished round.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        round: usize,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Runs the four encoder variants and prints the grid.
    Ablate {
        #[arg(long)]
        rounds: Option<usize>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Data(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => c.into(),
            e if e.is_data_error() => Failure::Data(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<RunDirError> for Failure {
    fn from(e: RunDirError) -> Self {
        match e {
            RunDirError::NoRound(_) | RunDirError::Io { .. } | RunDirError::Json { .. } => Failure::Data(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let (code, kind, msg) = match f {
                Failure::Usage(m) => (EXIT_USAGE, "usage error", m),
                Failure::Data(m) => (EXIT_DATA, "data error", m),
                Failure::Runtime(m) => (EXIT_RUNTIME, "error", m),
            };
            let _ = writeln!(err, "cgt: {kind}: {msg}");
            code
        }
    }
}

fn run_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.run_dir {
        cfg.run_dir = d.clone();
    }
    Ok(cfg)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(|e| Failure::Runtime(format!("writing output: {e}")))
}

fn emit_json<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    emit(out, &format!("{text}\n"))
}

pub fn format_report(r: &MetricReport) -> String {
    format!(
        "test_acc {}/{} ({:.2}%)  bleu {:.2}  rouge_l {:.2}  str_acc {:.3}  acc_plus_auto {:.3}",
        r.n_pass,
        r.m,
        100.0 * r.test_acc,
        r.bleu,
        r.rouge_l,
        r.str_acc,
        r.acc_plus_auto
    )
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match &cli.command {
        Command::PrepareData { source, n, input, out: dir } => {
            let mut cfg = run_config(cli)?;
            if let Some(s) = source {
                cfg.set("data.source", s)?;
            }
            if cfg.data.source == DataSource::Dir {
                return Err(Failure::Usage("prepare-data needs the synthetic or hearthstone source".into()));
            }
            if let Some(n) = n {
                cfg.data.train = *n;
            }
            if let Some(i) = input {
                cfg.data.dir = i.clone();
            }
            let data = load_dataset(&cfg)?;
            std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
            let mut sizes = serde_json::Map::new();
            for s in SPLITS {
                let corpus = data.split(s);
                write_corpus(&dir.join(format!("{s}.jsonl")), corpus).map_err(|e| Failure::Data(e.to_string()))?;
                sizes.insert(s.into(), corpus.len().into());
            }
            if cli.json {
                emit_json(out, &sizes)
            } else {
                emit(out, &SPLITS.iter().map(|s| format!("{s} {}\n", data.split(s).len())).collect::<String>())
            }
        }
        Command::Pipeline { rounds, name } => {
            let mut cfg = run_config(cli)?;
            if let Some(r) = rounds {
                cfg.model.n_iterations = *r;
            }
            if let Some(n) = name {
                cfg.name = n.clone();
            }
            cfg.validate()?;
            let mut writer = RunWriter::create(&cfg.run_dir, &cfg.name)?;
            let report = run_pipeline(&cfg, Some(&mut writer))?;
            if cli.json {
                let rounds: Vec<_> = report.rounds.iter().map(|r| (r.round, r.train_subset.len(), r.metrics("test"))).collect();
                return emit_json(
                    out,
                    &serde_json::json!({
                        "run": writer.dir,
                        "rounds": rounds,
                        "stopped_at": report.stopped_at,
                        "selected_round": report.selected_round,
                    }),
                );
            }
            let mut text = String::new();
            for r in &report.rounds {
                text += &format!("round {} (trained on {}): {}\n", r.round, r.train_subset.len(), format_report(r.metrics("test")));
            }
            if let Some(r) = report.stopped_at {
                text += &format!("stopped before round {r}: no failing training samples\n");
            }
            text += &format!("selected round {} by dev Test-Acc\nrun directory {}\n", report.selected_round, writer.dir.display());
            emit(out, &text)
        }
        Command::Train { out: path } => {
            let cfg = run_config(cli)?;
            cfg.validate()?;
            let grammar = load_run_grammar(&cfg)?;
            let data = load_dataset(&cfg)?;
            let enc = encode_dataset(&cfg, &data, &grammar)?;
            let (model, log) = train_round(&cfg, 1, &enc.splits["train"], None, &enc.vocabs, &grammar, |_, _| true)?;
            let path = path.clone().unwrap_or_else(|| cfg.run_dir.join(&cfg.name).join("train").join("checkpoint.ckpt"));
            if let Some(p) = path.parent() {
                std::fs::create_dir_all(p).map_err(|e| io_failure(p, e))?;
            }
            save_checkpoint(&model, &path).map_err(|e| Failure::Runtime(e.to_string()))?;
            let last = log.epochs_run.checked_sub(1).and_then(|e| log.epoch_loss(e));
            if cli.json {
                emit_json(out, &serde_json::json!({ "checkpoint": path, "epochs": log.epochs_run, "final_loss": last }))
            } else {
                emit(out, &format!("trained {} epochs, final loss {:.4}\ncheckpoint {}\n", log.epochs_run, last.unwrap_or(0.0), path.display()))
            }
        }
        Command::Generate { checkpoint, nl, test_info, last_code } => {
            let cfg = run_config(cli)?;
            let grammar = load_run_grammar(&cfg)?;
            let model = load_checkpoint(checkpoint, &grammar).map_err(|e| Failure::Data(format!("{}: {e}", checkpoint.display())))?;
            let nl = match nl {
                Some(s) => s.clone(),
                None => {
                    let mut s = String::new();
                    std::io::stdin().read_to_string(&mut s).map_err(|e| Failure::Data(format!("stdin: {e}")))?;
                    s.trim().to_string()
                }
            };
            let last_rules = match last_code {
                Some(p) => {
                    let code = std::fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
                    let ast = parse_to_ast(&code, &grammar).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
                    ast_to_rules(&ast, &grammar).map_err(|e| Failure::Data(e.to_string()))?
                }
                None => Default::default(),
            };
            let sample = EncodedSample {
                sample_id: "input".into(),
                nl: EncodedText::new(&nl, &model.vocabs),
                test_info: EncodedText::new(test_info.as_deref().unwrap_or(""), &model.vocabs),
                last_rules,
                target_rules: Default::default(),
                copy_map: Default::default(),
            };
            let g = model.generate(&model.input(&sample), &grammar, cfg.decode).map_err(|e| Failure::Usage(e.to_string()))?;
            if cli.json {
                emit_json(out, &g)
            } else {
                emit(out, &g.code)
            }
        }
        Command::Test { code, spec, assertions, time_limit } => {
            let cfg = run_config(cli)?;
            let source = std::fs::read_to_string(code).map_err(|e| io_failure(code, e))?;
            let mut unit = match (spec, assertions) {
                (Some(p), _) => {
                    let text = std::fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
                    serde_json::from_str::<TestUnitSpec>(&text).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?
                }
                (None, Some(p)) => TestUnitSpec {
                    kind: TestKind::GenericAssertions,
                    payload: std::fs::read_to_string(p).map_err(|e| io_failure(p, e))?,
                    time_limit: cfg.harness.time_limit,
                    memory_limit: cfg.harness.memory_limit,
                },
                (None, None) => return Err(Failure::Usage("test needs --spec or --assertions".into())),
            };
            if let Some(t) = time_limit {
                unit.time_limit = *t;
            }
            let result = harness_for(&cfg).try_run(&source, &unit).map_err(|e| Failure::Runtime(e.to_string()))?;
            let info = test_info_for(&result, &source);
            if cli.json {
                emit_json(out, &serde_json::json!({ "result": result, "test_info": info }))
            } else {
                let mut text = format!("{}\n", result.category.name());
                if !info.is_empty() {
                    text += &format!("{}\n", info.text());
                }
                emit(out, &text)
            }
        }
        Command::Evaluate { run, round, split } => {
            if !SPLITS.contains(&split.as_str()) {
                return Err(Failure::Usage(format!("unknown split {split:?}")));
            }
            let dir = match &cli.run_dir {
                Some(root) if !run.is_dir() => root.join(run),
                _ => run.clone(),
            };
            let report = evaluate_round(&dir, *round, split)?;
            if cli.json {
                emit_json(out, &report)
            } else {
                emit(out, &format!("{}\n", format_report(&report)))
            }
        }
        Command::Ablate { rounds } => {
            let mut cfg = run_config(cli)?;
            if let Some(r) = rounds {
                cfg.model.n_iterations = *r;
            }
            cfg.validate()?;
            let rows = ablation(&cfg, Some(&cfg.run_dir))?;
            let grid_path = cfg.run_dir.join(format!("{}-ablation.json", cfg.name));
            let text = serde_json::to_string_pretty(&rows).map_err(|e| Failure::Runtime(e.to_string()))?;
            std::fs::write(&grid_path, text + "\n").map_err(|e| Failure::Runtime(format!("{}: {e}", grid_path.display())))?;
            if cli.json {
                return emit_json(out, &rows);
            }
            let mut text = String::new();
            for row in &rows {
                for (i, r) in row.rounds.iter().enumerate() {
                    text += &format!("{:<22} N={} {}\n", row.variant, i + 1, format_report(r));
                }
            }
            emit(out, &text)
        }
    }
}
