use cgt_pipeline::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn cgt(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("cgt").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(cgt(&["--help"]).0, EXIT_OK);
    assert_eq!(cgt(&["--version"]).0, EXIT_OK);
    assert_eq!(cgt(&[]).0, EXIT_USAGE);
    assert_eq!(cgt(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(cgt(&["evaluate", "--round", "x", "--run", "r"]).0, EXIT_USAGE);
}

#[test]
fn bad_config_is_a_usage_error_and_missing_config_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "model.heads = many\n").unwrap();
    let (code, _, err) = cgt(&["--config", cfg.to_str().unwrap(), "pipeline"]);
    assert_eq!(code, EXIT_USAGE, "{err}");
    assert!(err.contains("model.heads"));
    let missing = dir.path().join("none.cfg");
    assert_eq!(cgt(&["--config", missing.to_str().unwrap(), "pipeline"]).0, EXIT_DATA);
}

#[test]
fn prepare_data_writes_three_splits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let (code, stdout, err) = cgt(&["--seed", "2", "prepare-data", "--n", "50", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(stdout, "train 50\ndev 10\ntest 10\n");
    let train = std::fs::read_to_string(out.join("train.jsonl")).unwrap();
    assert_eq!(train.lines().count(), 50);
    let (code, _, _) = cgt(&["prepare-data", "--source", "hearthstone", "--input", "/nonexistent", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn test_command_prints_the_category() {
    let dir = tempfile::tempdir().unwrap();
    let code = dir.path().join("f.py");
    let asserts = dir.path().join("t.py");
    std::fs::write(&code, "def f(a):\n    return a + 1\n").unwrap();
    std::fs::write(&asserts, "assert f(2) == 3\n").unwrap();
    let (status, out, err) = cgt(&["test", "--code", code.to_str().unwrap(), "--assertions", asserts.to_str().unwrap()]);
    assert_eq!(status, EXIT_OK, "{err}");
    assert_eq!(out, "OK\n");
    std::fs::write(&code, "def f(a):\n    return b\n").unwrap();
    let (_, out, _) = cgt(&["test", "--code", code.to_str().unwrap(), "--assertions", asserts.to_str().unwrap()]);
    assert!(out.starts_with("NameError\n"), "{out}");
    assert!(out.contains("name 'b' is not defined"));
    assert_eq!(cgt(&["test", "--code", code.to_str().unwrap()]).0, EXIT_USAGE);
}

#[test]
fn pipeline_train_generate_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("toy.cfg");
    std::fs::write(
        &cfg,
        "name = cli\nrounds = 1\ndata.train = 8\ndata.dev = 2\ndata.test = 2\nmodel.preset = tiny\nmodel.d = 16\n\
         model.heads = 2\nmodel.blocks = 1\nmodel.ff_first = 32\nmodel.char_dim = 4\ntrain.epochs = 2\ndecode.max_actions = 80\n",
    )
    .unwrap();
    let runs = dir.path().join("runs");
    let base = ["--config", cfg.to_str().unwrap(), "--run-dir", runs.to_str().unwrap()];
    let with = |extra: &[&str]| -> Vec<String> { base.iter().chain(extra).map(|s| s.to_string()).collect() };

    let args = with(&["pipeline"]);
    let (code, out, err) = cgt(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("round 1 (trained on 8)"), "{out}");

    let args = with(&["--json", "evaluate", "--run", "cli", "--round", "1", "--split", "dev"]);
    let (code, out, err) = cgt(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code, EXIT_OK, "{err}");
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["m"], 2);
    let args = with(&["evaluate", "--run", "cli", "--round", "2"]);
    assert_eq!(cgt(&args.iter().map(String::as_str).collect::<Vec<_>>()).0, EXIT_DATA);

    let ckpt = dir.path().join("m.ckpt");
    let args = with(&["train", "--out", ckpt.to_str().unwrap()]);
    let (code, _, err) = cgt(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code, EXIT_OK, "{err}");
    let args = with(&["--json", "generate", "--checkpoint", ckpt.to_str().unwrap(), "--nl", "define f with a returning a plus 1"]);
    let (code, out, err) = cgt(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code, EXIT_OK, "{err}");
    let g: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(g["code"].is_string());
    let bogus = dir.path().join("bogus.ckpt");
    std::fs::write(&bogus, "nope").unwrap();
    let args = with(&["generate", "--checkpoint", bogus.to_str().unwrap(), "--nl", "x"]);
    assert_eq!(cgt(&args.iter().map(String::as_str).collect::<Vec<_>>()).0, EXIT_DATA);
}
