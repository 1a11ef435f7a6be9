use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use stgen::data::read_corpus_file;
use stgen::model::ModelConfig;
use stgen::nets::ParamSet;
use stgen::objective::initial_model;
use stgen_cli::weights::WeightsFile;

fn stgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stgen")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = stgen(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(args: &[&str]) -> i32 {
    stgen(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&read(path)).unwrap()
}

/// Synthetic corpus of `n` length-16 trajectories, split into `dir/prep`.
fn prepared(dir: &Path, n: usize) -> PathBuf {
    let corpus = dir.join("synth.jsonl");
    ok(&["synth", "--n", &n.to_string(), "--T", "16", "--seed", "2", "--out", p(&corpus)]);
    let prep = dir.join("prep");
    ok(&["prepare", "--format", "synth", "--input", p(&corpus), "--T", "16", "--out", p(&prep)]);
    prep
}

fn small_config(dir: &Path) -> PathBuf {
    let cfg = dir.join("small.json");
    std::fs::write(&cfg, r#"{"hidden": 6, "embed": [6], "head": [8], "batch_size": 32}"#).unwrap();
    cfg
}

fn train(dir: &Path, prep: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let cfg = small_config(dir);
    let train_file = prep.join("train.jsonl");
    let mut args = vec!["train", "--data", p(&train_file), "--preset", "toy", "--config", p(&cfg), "--out", p(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn synth_prepare_split_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 2000);
    let train = read_corpus_file(&prep.join("train.jsonl")).unwrap();
    let test = read_corpus_file(&prep.join("test.jsonl")).unwrap();
    assert_eq!((train.len(), test.len()), (1800, 200));
    let stats = json(&prep.join("stats.json"));
    assert_eq!(stats["split"]["train_windows"], 1800);
    let resolved = json(&prep.join("config.json"));
    assert_eq!(resolved["corpus"]["seq_len"], 16);

    let again = dir.path().join("again");
    ok(&["prepare", "--format", "synth", "--input", p(&dir.path().join("synth.jsonl")), "--T", "16", "--out", p(&again)]);
    for f in ["train.jsonl", "test.jsonl", "stats.json"] {
        assert_eq!(read(&prep.join(f)), read(&again.join(f)), "{f}");
    }
}

#[test]
fn short_porto_input_yields_no_windows() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("porto.csv");
    std::fs::write(
        &input,
        "\"TRIP_ID\",\"POLYLINE\"\n\
         \"1\",\"[[-8.61,41.14],[-8.611,41.141],[-8.612,41.142],[-8.613,41.143]]\"\n\
         \"2\",\"[[-8.62,41.15],[-8.621,41.151],[-8.622,41.152]]\"\n",
    )
    .unwrap();
    let out = dir.path().join("prep");
    ok(&["prepare", "--format", "porto-csv", "--input", p(&input), "--origin", "-8.61,41.14", "--T", "32", "--out", p(&out)]);
    assert!(read_corpus_file(&out.join("train.jsonl")).unwrap().is_empty());
    assert!(read_corpus_file(&out.join("test.jsonl")).unwrap().is_empty());
    let stats = json(&out.join("stats.json"));
    assert_eq!(stats["dropped"]["short_sources"], 2);
    assert_eq!(stats["load"]["rows"], 2);
}

#[test]
fn zero_epochs_writes_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 60);
    let run = train(dir.path(), &prep, "run", &["--variant", "dsvae", "--epochs", "0", "--seed", "5"]);
    assert!(read(&run.join("epochs.jsonl")).is_empty());
    let resolved = json(&run.join("config.json"));
    let cfg: ModelConfig = serde_json::from_value(resolved["model"].clone()).unwrap();
    assert_eq!((cfg.variant.name(), cfg.epochs, cfg.seed, cfg.hidden), ("dsvae", 0, 5, 6));
    let data: Vec<_> = read_corpus_file(&prep.join("train.jsonl")).unwrap().iter().map(|r| r.trajectory(15.0)).collect();
    let expected = initial_model(cfg, &data).unwrap();
    let stored = WeightsFile::load(&run.join("weights.json")).unwrap();
    let params: &ParamSet = &stored.params;
    assert_eq!(params, expected.params());
    assert_eq!(stored.norm, expected.norm());
}

#[test]
fn training_is_deterministic_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 60);
    let args = ["--variant", "fdsvae", "--epochs", "2", "--seed", "1"];
    let a = train(dir.path(), &prep, "a", &args);
    let b = train(dir.path(), &prep, "b", &args);
    assert_eq!(read(&a.join("weights.json")), read(&b.join("weights.json")));
    assert_eq!(read(&a.join("epochs.jsonl")), read(&b.join("epochs.jsonl")));
    let log = String::from_utf8(read(&a.join("epochs.jsonl"))).unwrap();
    let epochs: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(epochs.len(), 2);
    assert_eq!(epochs[1]["epoch"], 2);
    assert!(epochs.iter().all(|e| e["total"].as_f64().unwrap().is_finite()));
    let c = train(dir.path(), &prep, "c", &["--variant", "fdsvae", "--epochs", "2", "--seed", "2"]);
    assert_ne!(read(&a.join("weights.json")), read(&c.join("weights.json")));
}

#[test]
fn constrained_training_records_penalty() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 40);
    let phys = dir.path().join("physics.json");
    std::fs::write(&phys, stgen::constraints::ConstraintExpr::physics(60.0, -0.5).to_json().unwrap()).unwrap();
    let run = train(dir.path(), &prep, "s", &["--variant", "fdsvae", "--epochs", "1", "--constraints", p(&phys)]);
    let resolved = json(&run.join("config.json"));
    assert_eq!(resolved["model"]["constrained"], true);
    assert!(resolved["constraint"].is_object());
    let log = String::from_utf8(read(&run.join("epochs.jsonl"))).unwrap();
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["penalty_weight"], 1.0);
}

#[test]
fn generate_modes() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 40);
    let run = train(dir.path(), &prep, "run", &["--variant", "fdsvae", "--epochs", "1"]);
    let w = run.join("weights.json");
    let gen = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["generate", "--weights", p(&w), "--out", p(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    };
    let a = gen("a.jsonl", &["--n", "7", "--seed", "3"]);
    let b = gen("b.jsonl", &["--n", "7", "--seed", "3"]);
    let c = gen("c.jsonl", &["--n", "7", "--seed", "4"]);
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let recs = read_corpus_file(&a).unwrap();
    assert_eq!(recs.len(), 7);
    assert!(recs.iter().all(|r| r.points.len() == 16));
    assert!(dir.path().join("a.config.json").exists());

    assert!(read(&gen("empty.jsonl", &["--n", "0"])).is_empty());
    let long = read_corpus_file(&gen("long.jsonl", &["--n", "2", "--T", "24"])).unwrap();
    assert!(long.iter().all(|r| r.points.len() == 24));
    assert_eq!(read_corpus_file(&gen("shared.jsonl", &["--n", "9", "--shared-f"])).unwrap().len(), 9);

    let test = prep.join("test.jsonl");
    let rec = read_corpus_file(&gen("rec.jsonl", &["--reconstruct", p(&test)])).unwrap();
    let src = read_corpus_file(&test).unwrap();
    assert_eq!(rec.iter().map(|r| &r.id).collect::<Vec<_>>(), src.iter().map(|r| &r.id).collect::<Vec<_>>());

    // Start points are only meaningful for the autoregressive baseline.
    let out = dir.path().join("x.jsonl");
    assert_eq!(code(&["generate", "--weights", p(&w), "--start", "0,0", "--out", p(&out)]), 2);
}

#[test]
fn baseline_needs_a_start() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 40);
    let run = train(dir.path(), &prep, "base", &["--variant", "lstm-baseline", "--epochs", "1"]);
    let w = run.join("weights.json");
    let out = dir.path().join("g.jsonl");
    assert_eq!(code(&["generate", "--weights", p(&w), "--n", "3", "--out", p(&out)]), 2);
    ok(&["generate", "--weights", p(&w), "--n", "3", "--start", "1.5,-2", "--out", p(&out)]);
    let recs = read_corpus_file(&out).unwrap();
    assert_eq!(recs.len(), 3);
    assert_eq!(recs[0].points[0], [1.5, -2.0]);
    let test = prep.join("test.jsonl");
    ok(&["generate", "--weights", p(&w), "--n", "5", "--start-from", p(&test), "--out", p(&out)]);
    let firsts: Vec<_> = read_corpus_file(&test).unwrap().iter().map(|r| r.points[0]).collect();
    let recs = read_corpus_file(&out).unwrap();
    assert!(recs.iter().enumerate().all(|(i, r)| r.points[0] == firsts[i % firsts.len()]));
    let probe = dir.path().join("probe.json");
    assert_eq!(code(&["probe-disentangle", "--weights", p(&w), "--out", p(&probe)]), 2);
}

#[test]
fn evaluate_reports() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 100);
    let test = prep.join("test.jsonl");
    let train_file = prep.join("train.jsonl");
    let phys = dir.path().join("physics.json");
    std::fs::write(&phys, stgen::constraints::ConstraintExpr::physics(60.0, -0.5).to_json().unwrap()).unwrap();
    let out = dir.path().join("self.json");
    ok(&["evaluate", "--real", p(&test), "--generated", p(&test), "--constraints", p(&phys), "--out", p(&out)]);
    let r = json(&out);
    for kind in ["angles", "segment-lengths", "total-length", "grid-counts"] {
        assert_eq!(r["mmd"][kind], 0.0, "{kind}");
    }
    assert_eq!(r["mde"], 0.0);
    assert_eq!(r["violation_scores"][0]["real"], 0.0);
    assert_eq!(r["violation_scores"][0]["constraint"], "physics");
    assert!(r["histograms"]["angles"]["real"]["counts"].is_array());

    let out2 = dir.path().join("cross.json");
    ok(&["evaluate", "--real", p(&test), "--generated", p(&train_file), "--out", p(&out2)]);
    let r = json(&out2);
    assert!(r["mde"].is_null());
    assert!(r["mmd"]["grid-counts"].as_f64().unwrap() > 0.0);

    // Feature widths differ when lengths differ.
    let short = dir.path().join("short.jsonl");
    ok(&["synth", "--n", "10", "--T", "8", "--out", p(&short)]);
    let out3 = dir.path().join("bad.json");
    let res = stgen(&["evaluate", "--real", p(&test), "--generated", p(&short), "--out", p(&out3)]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("widths differ"));
}

#[test]
fn probe_grid_shape() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 40);
    let run = train(dir.path(), &prep, "run", &["--variant", "fdsvae", "--epochs", "1"]);
    let w = run.join("weights.json");
    let out = dir.path().join("probe.json");
    ok(&["probe-disentangle", "--weights", p(&w), "--rows", "3", "--cols", "4", "--seed", "2", "--out", p(&out)]);
    let r = json(&out);
    assert_eq!(r["grid"].as_array().unwrap().len(), 3);
    assert_eq!(r["grid"][0].as_array().unwrap().len(), 4);
    assert!(r["stats"]["within_row"].as_f64().unwrap() > 0.0);
    let single = dir.path().join("one.json");
    ok(&["probe-disentangle", "--weights", p(&w), "--rows", "1", "--cols", "1", "--out", p(&single)]);
    let r = json(&single);
    assert!(r["stats"]["within_row"].is_null() && r["stats"]["within_col"].is_null());
    assert_eq!(r["grid"][0].as_array().unwrap().len(), 1);

    let svae = train(dir.path(), &prep, "svae", &["--variant", "svae-z", "--epochs", "0"]);
    assert_eq!(code(&["probe-disentangle", "--weights", p(&svae.join("weights.json")), "--out", p(&single)]), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 40);
    let data = prep.join("train.jsonl");
    let out = dir.path().join("o");

    let typo = dir.path().join("typo.json");
    std::fs::write(&typo, r#"{"hiden": 3}"#).unwrap();
    assert_eq!(code(&["train", "--data", p(&data), "--preset", "toy", "--config", p(&typo), "--out", p(&out)]), 2);
    assert_eq!(code(&["train", "--data", p(&data), "--preset", "huge", "--out", p(&out)]), 2);
    assert_eq!(code(&["train", "--data", p(&data), "--variant", "nope", "--out", p(&out)]), 2);
    assert_eq!(code(&["--workers", "0", "synth", "--out", p(&dir.path().join("s.jsonl"))]), 2);

    let missing = dir.path().join("missing.jsonl");
    assert_eq!(code(&["train", "--data", p(&missing), "--preset", "toy", "--out", p(&out)]), 3);
    let garbage = dir.path().join("garbage.jsonl");
    std::fs::write(&garbage, "not json\n").unwrap();
    assert_eq!(code(&["train", "--data", p(&garbage), "--preset", "toy", "--out", p(&out)]), 3);
    let wrong_len = dir.path().join("wrong.jsonl");
    ok(&["synth", "--n", "10", "--T", "8", "--out", p(&wrong_len)]);
    assert_eq!(code(&["train", "--data", p(&wrong_len), "--preset", "toy", "--out", p(&out)]), 3);

    // A learning rate this large overflows on the first update.
    let wild = dir.path().join("wild.json");
    std::fs::write(&wild, r#"{"learning_rate": 1e300, "clip_norm": 1e300, "hidden": 6}"#).unwrap();
    let div = dir.path().join("div");
    let args = ["train", "--data", p(&data), "--preset", "toy", "--config", p(&wild), "--epochs", "3", "--out", p(&div)];
    assert_eq!(code(&args), 4);
    let kept = WeightsFile::load(&div.join("weights.json")).unwrap();
    assert!(kept.params.iter().all(|(_, t)| t.is_finite()));
    assert!(kept.clone().into_model().is_ok());
}

#[test]
fn tampered_weights_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 40);
    let run = train(dir.path(), &prep, "run", &["--variant", "fdsvae", "--epochs", "0"]);
    let text = String::from_utf8(read(&run.join("weights.json"))).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, text.replacen("\"variant\":\"fdsvae\"", "\"variant\":\"dsvae\"", 1)).unwrap();
    let out = dir.path().join("g.jsonl");
    assert_eq!(code(&["generate", "--weights", p(&bad), "--out", p(&out)]), 2);
}
