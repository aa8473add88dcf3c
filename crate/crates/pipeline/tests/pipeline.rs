mod common;

use std::collections::BTreeMap;

use cgt_pipeline::pipeline::{encode_dataset, load_dataset, load_run_grammar, run_pipeline, train_round, PipelineError, SPLITS};
use cgt_pipeline::run_dir::{evaluate_round, read_manifest, read_outputs, round_dir, RunWriter, CHECKPOINT, CONFIG, MANIFEST, METRICS, OUTPUTS, TEST_RESULTS, TRAIN_LOG};
use common::toy_config;

#[test]
fn rounds_are_monotone_and_follow_the_subset_law() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy_config(3, tmp.path());
    let t = std::time::Instant::now();
    let report = run_pipeline(&cfg, None).unwrap();
    eprintln!("3 rounds in {:?}", t.elapsed());
    assert!(!report.rounds.is_empty());
    assert_eq!(report.rounds[0].train_subset.len(), 12);
    for pair in report.rounds.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        assert_eq!(b.train_subset, a.splits["train"].failing_ids());
        for s in SPLITS {
            let (pa, pb) = (&a.splits[s], &b.splits[s]);
            assert!(pb.metrics.n_pass >= pa.metrics.n_pass, "{s}: round {} regressed", b.round);
            assert_eq!(pa.outputs.len(), pb.outputs.len());
            for (x, y) in pa.outputs.iter().zip(&pb.outputs) {
                assert_eq!(x.id, y.id);
                if x.result.passed {
                    assert!(y.copied && y.result.passed);
                    assert_eq!(x.code.as_bytes(), y.code.as_bytes());
                    assert_eq!(x.rules, y.rules);
                } else {
                    assert!(!y.copied);
                }
            }
        }
    }
    if let Some(r) = report.stopped_at {
        assert_eq!(r, report.rounds.len() + 1);
        assert!(report.rounds.last().unwrap().splits["train"].failing_ids().is_empty());
    } else {
        assert_eq!(report.rounds.len(), 3);
    }
    for r in &report.rounds {
        for s in SPLITS {
            let m = &r.splits[s].metrics;
            assert_eq!(m.m, r.splits[s].outputs.len());
            assert_eq!(m.n_pass, r.splits[s].passed_ids().len());
        }
    }
}

#[test]
fn empty_subset_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy_config(4, tmp.path());
    let grammar = load_run_grammar(&cfg).unwrap();
    let enc = encode_dataset(&cfg, &load_dataset(&cfg).unwrap(), &grammar).unwrap();
    let err = train_round(&cfg, 2, &[], None, &enc.vocabs, &grammar, |_, _| true).unwrap_err();
    assert!(matches!(err, PipelineError::EmptySubset(2)));
}

#[test]
fn run_directory_layout_and_reevaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(5, tmp.path());
    cfg.model.n_iterations = 2;
    let mut w = RunWriter::create(&cfg.run_dir, &cfg.name).unwrap();
    let report = run_pipeline(&cfg, Some(&mut w)).unwrap();
    let run = tmp.path().join("toy");
    assert!(run.join(MANIFEST).is_file() && run.join(CONFIG).is_file());
    let manifest = read_manifest(&run).unwrap();
    assert_eq!(manifest.rounds.len(), report.rounds.len());
    assert_eq!(manifest.selected_round, Some(report.selected_round));
    for state in &report.rounds {
        let dir = round_dir(&run, state.round);
        for f in [CHECKPOINT, OUTPUTS, METRICS, TEST_RESULTS, TRAIN_LOG] {
            assert!(dir.join(f).is_file(), "{f} missing in {}", dir.display());
        }
        let lines = read_outputs(&run, state.round).unwrap();
        assert_eq!(lines.len(), 22);
        for s in SPLITS {
            assert_eq!(&evaluate_round(&run, state.round, s).unwrap(), state.metrics(s));
        }
    }
    let cfg_text = std::fs::read_to_string(run.join(CONFIG)).unwrap();
    let reread = cgt_pipeline::config::RunConfig::from_text(&cfg_text).unwrap();
    assert_eq!(reread, cfg);
}

#[test]
fn same_seed_runs_write_identical_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(6, tmp.path());
    cfg.model.n_iterations = 2;
    let mut files: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
    for name in ["a", "b"] {
        cfg.name = name.into();
        let mut w = RunWriter::create(&cfg.run_dir, name).unwrap();
        run_pipeline(&cfg, Some(&mut w)).unwrap();
        files.push(read_tree(&tmp.path().join(name)));
    }
    assert_eq!(files[0].keys().collect::<Vec<_>>(), files[1].keys().collect::<Vec<_>>());
    for (k, v) in &files[0] {
        if k == MANIFEST || k == CONFIG {
            continue;
        }
        assert!(v == &files[1][k], "{k} differs");
    }
}

fn read_tree(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
