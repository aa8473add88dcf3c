//! Acceptance gate: prints one PASS/FAIL line per criterion.
//!
//! Criterion 1 needs the card benchmark, located through
//! `CGT_HEARTHSTONE_DIR`. Without it the criterion is reported as FAIL and
//! does not fail the target; every other criterion must pass.

mod common;

#[path = "../../core/tests/common/bleu_pairs.rs"]
mod bleu_pairs;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use cgt_core::grammar::python::{ast_to_code, parse_to_ast, python_grammar};
use cgt_core::grammar::{ast_to_rules, rules_to_ast};
use cgt_core::harness::fixtures::{self, BATTERY};
use cgt_core::harness::{corpus_test_sweep, extract_test_info, Category, Harness, TestResult, TestUnitSpec};
use cgt_core::metrics::{bleu, corpus_bleu, evaluate, str_acc};
use cgt_core::text::{build_vocabs, encode_sample, generate_synthetic_corpus, load_hearthstone, VocabSettings};
use cgt_model::gradcheck::grad_check;
use cgt_model::layers::{causal_mask, positional_encoding, residual, Attention, Conv, Gating, LayerNorm};
use cgt_model::train::{train, TrainConfig};
use cgt_model::{Adafactor, GenerationLimits, Mat, Model, ModelConfig, ParamStore, Tape, Var};
use cgt_pipeline::pipeline::{run_pipeline, PipelineReport, SPLITS};
use cgt_pipeline::run_dir::{RunWriter, CONFIG};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1. Grammar round trip over the card benchmark's training split.
fn grammar_round_trip() -> Outcome {
    let dir = std::env::var_os("CGT_HEARTHSTONE_DIR").ok_or("CGT_HEARTHSTONE_DIR is not set; benchmark data unavailable")?;
    let start = Instant::now();
    let splits = load_hearthstone(Path::new(&dir), 5.0, 512 << 20).map_err(|e| e.to_string())?;
    let train = &splits[0];
    check(train.len() == 533, || format!("training split has {} programs, expected 533", train.len()))?;
    let g = python_grammar();
    let mut failures = Vec::new();
    for r in &train.records {
        let ok = (|| -> Result<bool, String> {
            let ast = parse_to_ast(&r.code, g).map_err(|e| e.to_string())?;
            let rules = ast_to_rules(&ast, g).map_err(|e| e.to_string())?;
            let tree = rules_to_ast(&rules, g).map_err(|e| e.to_string())?.tree;
            let code = ast_to_code(&tree).map_err(|e| e.to_string())?;
            Ok(parse_to_ast(&code, g).map_err(|e| e.to_string())? == ast)
        })();
        match ok {
            Ok(true) => {}
            Ok(false) => failures.push(format!("{}: re-parse differs", r.id)),
            Err(e) => failures.push(format!("{}: {e}", r.id)),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(failures.is_empty(), || format!("{}/533 failed, first: {}", failures.len(), failures[0]))?;
    check(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("533/533 programs in {secs:.1}s"))
}

fn random_input(store: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> usize {
    store.insert(name, Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0)))
}

fn project(t: &mut Tape, out: Var, seed: u64) -> Var {
    let (r, c) = t.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.constant(Mat::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0)));
    let p = t.mul(out, w);
    t.sum_all(p)
}

// 2. Finite-difference agreement of the layer gradients.
fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let heads = rng.gen_range(1..=2);
        let d = (heads * rng.gen_range(1..=16 / heads)).max(2);
        let heads = if d % heads == 0 { heads } else { 1 };
        let l = rng.gen_range(1..=6);
        let mut store = ParamStore::new();
        let att = Attention::new(&mut store, "att", d, heads, i);
        let gate = Gating::new(&mut store, "gate", d, 6, heads, i);
        let conv = Conv::new(&mut store, "conv", d, 3, i % 2 == 0, i);
        let ln = LayerNorm::new(&mut store, "ln", d, i);
        for id in [ln.gain, ln.bias] {
            store.value_mut(id).mapv_inplace(|v| v + rng.gen_range(-0.5..0.5));
        }
        let x = random_input(&mut store, "x", l, d, &mut rng);
        let m = random_input(&mut store, "m", l + 1, d, &mut rng);
        let c = random_input(&mut store, "c", l, 6, &mut rng);
        let errs = [
            grad_check(&store, 1e-5, |t| {
                let xv = t.param(x);
                let out = att.forward(t, xv, xv, Some(&causal_mask(l))).out;
                project(t, out, i)
            }),
            grad_check(&store, 1e-5, |t| {
                let (xv, mv) = (t.param(x), t.param(m));
                let out = att.forward(t, xv, mv, None).out;
                project(t, out, i + 1)
            }),
            grad_check(&store, 1e-5, |t| {
                let (xv, cv) = (t.param(x), t.param(c));
                let out = gate.forward(t, xv, cv).out;
                project(t, out, i + 2)
            }),
            grad_check(&store, 1e-5, |t| {
                let xv = t.param(x);
                let out = conv.forward(t, xv);
                project(t, out, i + 3)
            }),
            grad_check(&store, 1e-5, |t| {
                let xv = t.param(x);
                let out = residual(t, xv, &ln, |t, n| att.forward(t, n, n, None).out);
                project(t, out, i + 4)
            }),
        ];
        worst = errs.iter().fold(worst, |a, &b| a.max(b));
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst < 1e-4, || format!("max relative error {worst:.2e}"))?;
    check(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!("20 random shapes, max relative error {worst:.2e}, {secs:.1}s"))
}

// 3. Positional encoding, gate convexity and attention normalisation.
fn equations() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let d = 2 * rng.gen_range(1..=256);
        let (b, i, j) = (rng.gen_range(0..12), rng.gen_range(0..512), rng.gen_range(0..d / 2));
        let pe = positional_encoding(b, i, d);
        let angle = (i + b) as f64 / 10000f64.powf((2 * j) as f64 / d as f64);
        check((pe[2 * j] - angle.sin()).abs() < 1e-12 && (pe[2 * j + 1] - angle.cos()).abs() < 1e-12, || {
            format!("positional encoding off at b={b} i={i} j={j} d={d}")
        })?;
    }
    let (d, heads, l) = (16, 4, 1000);
    let mut store = ParamStore::new();
    let gate = Gating::new(&mut store, "gate", d, 12, heads, 3);
    let att = Attention::new(&mut store, "att", d, heads, 4);
    let y = Mat::from_shape_fn((l, d), |_| rng.gen_range(-1.0..1.0));
    let c = Mat::from_shape_fn((l, 12), |_| rng.gen_range(-1.0..1.0));
    let mut t = Tape::new(&store);
    let (yv, cv) = (t.constant(y), t.constant(c));
    let g = gate.forward(&mut t, yv, cv);
    let (ay, ac) = (t.value(g.alpha_y), t.value(g.alpha_c));
    let worst_gate = ay.iter().zip(ac.iter()).map(|(a, b)| (a + b - 1.0).abs()).fold(0.0, f64::max);
    check(worst_gate < 1e-6, || format!("gate pairs deviate by {worst_gate:.2e}"))?;
    let x = t.constant(Mat::from_shape_fn((40, d), |_| rng.gen_range(-1.0..1.0)));
    let mask = causal_mask(40);
    let a = att.forward(&mut t, x, x, Some(&mask));
    let mut worst_row: f64 = 0.0;
    for w in &a.weights {
        for row in t.value(*w).rows() {
            worst_row = worst_row.max((row.sum() - 1.0).abs());
        }
    }
    check(worst_row < 1e-6, || format!("attention rows deviate by {worst_row:.2e}"))?;
    Ok(format!("100 PE points; 1000 tokens max |α sum − 1| {worst_gate:.1e}; attention rows {worst_row:.1e}"))
}

// 4. Teacher-forced overfit on 50 synthetic programs.
fn overfit() -> Outcome {
    let start = Instant::now();
    let budget = Duration::from_secs(15 * 60);
    let g = python_grammar();
    let records = generate_synthetic_corpus(50, 4, 2.0, 256 << 20).map_err(|e| e.to_string())?.records;
    let vocabs = build_vocabs(&records, g, VocabSettings::default()).map_err(|e| e.to_string())?;
    let samples: Vec<_> = records.iter().map(|r| encode_sample(r, &vocabs, g).unwrap()).collect();
    let cfg = ModelConfig::tiny();
    check(cfg.d == 64 && cfg.heads == 4, || "tiny preset changed".into())?;
    let mut model = Model::new(cfg, vocabs, g, 4).map_err(|e| e.to_string())?;
    let prepared: Vec<_> = samples.iter().map(|s| model.prepare(s, g).unwrap()).collect();
    let refs: Vec<String> = records.iter().map(|r| r.code.clone()).collect();
    let limits = GenerationLimits::default();
    let score = |m: &Model| -> (f64, usize) {
        let gens: Vec<_> = samples.iter().map(|s| m.generate(&m.input(s), g, limits).unwrap()).collect();
        let illegal = gens.iter().filter(|x| rules_to_ast(&x.rules, g).is_err()).count();
        let codes: Vec<String> = gens.into_iter().map(|x| x.code).collect();
        (str_acc(&codes, &refs), illegal)
    };
    let mut reached: Option<(usize, f64, usize)> = None;
    let tc = TrainConfig { epochs: 200, batch_size: 1, seed: 4, max_seconds: Some(budget.as_secs_f64()) };
    train(&mut model, &mut Adafactor::new(), &prepared, &tc, |e, m| {
        if e + 1 < 20 || (e + 1) % 5 != 0 {
            return true;
        }
        let (acc, illegal) = score(m);
        if acc >= 0.95 {
            reached = Some((e + 1, acc, illegal));
            return false;
        }
        start.elapsed() < budget
    });
    let secs = start.elapsed().as_secs_f64();
    let (epochs, acc, illegal) = reached.ok_or_else(|| format!("StrAcc stayed below 95% after {secs:.0}s"))?;
    check(secs <= budget.as_secs_f64(), || format!("took {secs:.0}s"))?;
    check(illegal == 0, || format!("{illegal} generations failed to replay"))?;
    Ok(format!("StrAcc {:.0}% after {epochs} epochs in {secs:.0}s, all generations replay", 100.0 * acc))
}

fn toy_runs(root: &Path) -> Vec<PipelineReport> {
    (1..=5).map(|seed| run_pipeline(&common::toy_config(seed, root), None).unwrap()).collect()
}

// 5. Per-round Test-Acc never decreases.
fn monotonicity(reports: &[PipelineReport]) -> Outcome {
    let mut detail = Vec::new();
    for (seed, rep) in reports.iter().enumerate() {
        for s in SPLITS {
            let acc: Vec<usize> = rep.rounds.iter().map(|r| r.metrics(s).n_pass).collect();
            check(acc.windows(2).all(|w| w[0] <= w[1]), || format!("seed {}: {s} pass counts {acc:?}", seed + 1))?;
        }
        let test: Vec<String> = rep.rounds.iter().map(|r| format!("{}/{}", r.metrics("test").n_pass, r.metrics("test").m)).collect();
        detail.push(test.join("→"));
    }
    Ok(format!("5 seeds, test pass counts {}", detail.join(", ")))
}

// 6. Round r+1 trains on exactly the samples that failed in round r.
fn subset_law(reports: &[PipelineReport]) -> Outcome {
    let mut sizes = Vec::new();
    for (seed, rep) in reports.iter().enumerate() {
        for w in rep.rounds.windows(2) {
            let failing = w[0].splits["train"].failing_ids();
            check(w[1].train_subset == failing, || {
                format!("seed {}: round {} trained on {} samples, {} failed", seed + 1, w[1].round, w[1].train_subset.len(), failing.len())
            })?;
        }
        if rep.stopped_at.is_some() {
            check(rep.rounds.last().unwrap().splits["train"].failing_ids().is_empty(), || "stopped with failures".into())?;
        }
        sizes.push(rep.rounds.iter().map(|r| r.train_subset.len().to_string()).collect::<Vec<_>>().join("→"));
    }
    Ok(format!("subset sizes {}", sizes.join(", ")))
}

// 7. Fixture battery categories and first-error extraction.
fn harness_taxonomy() -> Outcome {
    let h = Harness::default();
    let spec = fixtures::spec(fixtures::TEST_UNIT, 1.0);
    let codes: Vec<String> = BATTERY.iter().flat_map(|f| std::iter::repeat_n(f.code.to_string(), 10)).collect();
    let specs: Vec<TestUnitSpec> = vec![spec; codes.len()];
    let sweep = corpus_test_sweep(&h, &codes, &specs, 8);
    for (i, r) in sweep.results.iter().enumerate() {
        let f = &BATTERY[i / 10];
        check(r.category == f.expected, || format!("{} repetition {}: got {:?}", f.name, i % 10 + 1, r.category))?;
    }
    let covered: std::collections::BTreeSet<Category> = BATTERY.iter().map(|f| f.expected).collect();
    check(covered.len() == Category::ALL.len(), || "battery misses a category".into())?;
    let r = h.run(fixtures::TWO_FAILURES_CODE, &fixtures::spec(fixtures::TWO_FAILURES_UNIT, 1.0));
    check(r.raw_output.matches("Traceback").count() == 2, || "two-failure fixture did not report two errors".into())?;
    let info = extract_test_info(&r.raw_output, fixtures::TWO_FAILURES_CODE).text();
    check(!info.contains("f(0)") && !info.contains("0 != 1"), || format!("second error leaked: {info}"))?;
    Ok(format!("{} fixtures × 10 runs exact; first error only", BATTERY.len()))
}

// 8. Metric correctness.
fn metrics(reports: &[PipelineReport]) -> Outcome {
    let mut worst: f64 = 0.0;
    for (c, r, want, _) in bleu_pairs::PAIRS {
        worst = worst.max((bleu(c, r) - want).abs());
    }
    check(worst <= 0.1, || format!("BLEU off by {worst:.3}"))?;
    let refs: Vec<String> = bleu_pairs::PAIRS.iter().map(|p| p.1.to_string()).collect();
    let results: Vec<TestResult> =
        (0..refs.len()).map(|i| if i % 3 == 0 { TestResult::ok() } else { TestResult::failed(Category::NameError, String::new()) }).collect();
    let same = evaluate(&refs, &refs, &vec![TestResult::ok(); refs.len()]);
    check(same.bleu == 100.0 && same.rouge_l == 100.0 && same.str_acc == 1.0 && same.acc_plus_auto == 1.0, || format!("identical pairs: {same:?}"))?;
    let cands: Vec<String> = bleu_pairs::PAIRS.iter().map(|p| p.0.to_string()).collect();
    let corpus = corpus_bleu(&cands, &refs);
    check((corpus - bleu_pairs::CORPUS_BLEU).abs() <= 0.1, || format!("corpus BLEU {corpus:.3}"))?;
    let rep = evaluate(&cands, &refs, &results);
    check(rep.test_acc_ratio() == (7, 20) && rep.test_acc == 7.0 / 20.0, || format!("Test-Acc {:?}", rep.test_acc_ratio()))?;
    let mut corpora = 2;
    for r in [&same, &rep].into_iter().chain(reports.iter().flat_map(|p| p.rounds.iter().flat_map(|r| r.splits.values().map(|s| &s.metrics)))) {
        check(r.acc_plus_auto >= r.str_acc, || format!("acc+ {} < StrAcc {}", r.acc_plus_auto, r.str_acc))?;
        check(r.test_acc == r.n_pass as f64 / r.m.max(1) as f64, || "Test-Acc is not N/M".into())?;
        corpora += 1;
    }
    Ok(format!("20 BLEU pairs within {worst:.3}; Test-Acc 7/20 exact; acc+ ≥ StrAcc on {corpora} corpora"))
}

// 9. Disabling both auxiliary encoders leaves round one unchanged.
fn round_one_equivalence(root: &Path) -> Outcome {
    let mut cfg = common::toy_config(9, root);
    cfg.model.n_iterations = 1;
    let full = run_pipeline(&cfg, None).map_err(|e| e.to_string())?;
    cfg.ablation.test_info_encoder = false;
    cfg.ablation.code_encoder = false;
    let bare = run_pipeline(&cfg, None).map_err(|e| e.to_string())?;
    let enc = |r: &PipelineReport| serde_json::to_vec(&r.rounds[0].splits).unwrap();
    check(enc(&full) == enc(&bare), || "round-one outputs differ".into())?;
    let n: usize = full.rounds[0].splits.values().map(|s| s.outputs.len()).sum();
    Ok(format!("{n} outputs byte-identical"))
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

// 10. Two identical runs write identical manifests, checkpoints and reports.
fn determinism(root: &Path) -> Outcome {
    let mut trees = Vec::new();
    let mut reports = Vec::new();
    for sub in ["first", "second"] {
        let mut cfg = common::toy_config(10, &root.join(sub));
        cfg.name = "det".into();
        let mut w = RunWriter::create(&cfg.run_dir, &cfg.name).map_err(|e| e.to_string())?;
        reports.push(run_pipeline(&cfg, Some(&mut w)).map_err(|e| e.to_string())?);
        trees.push(files(&root.join(sub).join("det")));
    }
    check(reports[0] == reports[1], || "reports differ".into())?;
    check(trees[0].keys().eq(trees[1].keys()), || "file sets differ".into())?;
    let mut compared = 0;
    for (k, v) in &trees[0] {
        // config.txt records the run directory, which differs by construction.
        if k.as_os_str() == CONFIG {
            continue;
        }
        check(v == &trees[1][k], || format!("{} differs", k.display()))?;
        compared += 1;
    }
    Ok(format!("{compared} files byte-identical across two runs"))
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let secs = start.elapsed().as_secs_f64();
    match &out {
        Ok(d) => println!("criterion {n:>2} PASS  {name}: {d} [{secs:.1}s]"),
        Err(e) => println!("criterion {n:>2} FAIL  {name}: {e} [{secs:.1}s]"),
    }
    out.is_ok()
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let has_benchmark = std::env::var_os("CGT_HEARTHSTONE_DIR").is_some();
    let mut ok = BTreeMap::new();
    ok.insert(1, run(1, "grammar round trip", grammar_round_trip));
    ok.insert(2, run(2, "gradient agreement", gradients));
    ok.insert(3, run(3, "equation fidelity", equations));
    ok.insert(4, run(4, "overfit", overfit));
    let toy = catch_unwind(|| toy_runs(&tmp.path().join("toy")));
    let reports = toy.as_deref().unwrap_or(&[]);
    let toy_ok = |f: fn(&[PipelineReport]) -> Outcome| move || if reports.len() == 5 { f(reports) } else { Err("toy runs failed".into()) };
    ok.insert(5, run(5, "pipeline monotonicity", toy_ok(monotonicity)));
    ok.insert(6, run(6, "sample-selection law", toy_ok(subset_law)));
    ok.insert(7, run(7, "harness taxonomy", harness_taxonomy));
    ok.insert(8, run(8, "metric correctness", || metrics(reports)));
    ok.insert(9, run(9, "round-one equivalence", || round_one_equivalence(&tmp.path().join("eq"))));
    ok.insert(10, run(10, "determinism", || determinism(&tmp.path().join("det"))));
    let passed = ok.values().filter(|v| **v).count();
    println!("{passed}/10 criteria passed");
    let blocking: Vec<_> = ok.iter().filter(|(n, v)| !**v && (**n != 1 || has_benchmark)).map(|(n, _)| *n).collect();
    if !ok[&1] && !has_benchmark {
        println!("criterion 1 needs the card benchmark (set CGT_HEARTHSTONE_DIR); reported as FAIL, not blocking");
    }
    if !blocking.is_empty() {
        eprintln!("failing criteria: {blocking:?}");
        std::process::exit(1);
    }
}
