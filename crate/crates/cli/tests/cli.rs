mod common;

use std::fs;
use std::process::Command;

use common::{toy_settings, write_toy};
use mixkg_cli::commands::{self, EvalArgs, Split, SweepKey, BEST_CKPT, LAST_CKPT, METRICS_FILE, SUMMARY_FILE};
use mixkg_cli::config::Settings;
use mixkg_cli::{EXIT_DATA, EXIT_USAGE};
use serde_json::Value;
use tempfile::tempdir;

fn metrics(out: &std::path::Path) -> Vec<Value> {
    fs::read_to_string(out.join(METRICS_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn zero_epochs_evaluates_the_initial_model() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let mut s = toy_settings(dir.path(), &out);
    s.set("train.epochs", "0").unwrap();
    let summary = commands::cmd_train(&s).unwrap();
    assert_eq!(summary.best_epoch, 0);
    let rows = metrics(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["epoch"], 0);
    assert!(rows[0]["mean_loss"].is_null());
    assert!(out.join(BEST_CKPT).exists());
}

#[test]
fn deterministic_runs_write_identical_checkpoints() {
    let dir = tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    commands::cmd_train(&toy_settings(dir.path(), &a)).unwrap();
    commands::cmd_train(&toy_settings(dir.path(), &b)).unwrap();
    for name in [BEST_CKPT, LAST_CKPT] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn parallel_mode_matches_sequential() {
    let dir = tempdir().unwrap();
    let seq = dir.path().join("seq");
    let par = dir.path().join("par");
    commands::cmd_train(&toy_settings(dir.path(), &seq)).unwrap();
    let mut s = toy_settings(dir.path(), &par);
    s.set("train.deterministic", "false").unwrap();
    s.set("train.threads", "4").unwrap();
    commands::cmd_train(&s).unwrap();
    assert_eq!(fs::read(seq.join(LAST_CKPT)).unwrap(), fs::read(par.join(LAST_CKPT)).unwrap());
}

#[test]
fn training_loss_decreases() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let mut s = toy_settings(dir.path(), &out);
    s.set("train.epochs", "20").unwrap();
    commands::cmd_train(&s).unwrap();
    let losses: Vec<f64> = metrics(&out).iter().map(|r| r["mean_loss"].as_f64().unwrap()).collect();
    assert_eq!(losses.len(), 20);
    assert!(losses[19] < losses[0], "{losses:?}");
}

#[test]
fn eval_reproduces_summary_metrics() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let s = toy_settings(dir.path(), &out);
    let summary = commands::cmd_train(&s).unwrap();
    let ranks = dir.path().join("ranks.csv");
    let args = EvalArgs {
        checkpoint: out.join(BEST_CKPT),
        split: Split::Test,
        report: Some(dir.path().join("report.json")),
        ranks_csv: Some(ranks.clone()),
    };
    let report = commands::cmd_eval(&s, &args).unwrap();
    let test = summary.test.unwrap();
    assert_eq!(report.mrr, test.mrr);
    assert_eq!(report.hits, test.hits);
    let on_disk: Value = serde_json::from_str(&fs::read_to_string(out.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk["test"]["mrr"].as_f64().unwrap(), report.mrr);
    // Header plus one line per triplet.
    assert_eq!(fs::read_to_string(ranks).unwrap().lines().count(), 1 + 5);
}

#[test]
fn eval_rejects_checkpoint_with_other_vocabulary() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    commands::cmd_train(&toy_settings(dir.path(), &out)).unwrap();

    let other = dir.path().join("other");
    fs::create_dir_all(&other).unwrap();
    let [train, valid, test] = write_toy(&other);
    fs::write(&train, fs::read_to_string(&train).unwrap() + "e50\tr0\te99\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_mixkg"))
        .args(["eval", "--lr", "0.01", "--checkpoint"])
        .arg(out.join(BEST_CKPT))
        .arg("--train")
        .arg(&train)
        .arg("--valid")
        .arg(&valid)
        .arg("--test")
        .arg(&test)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_DATA));
}

#[test]
fn exit_codes_for_usage_and_missing_data() {
    let bin = env!("CARGO_BIN_EXE_mixkg");
    let dir = tempdir().unwrap();
    // Missing learning rate is a configuration error.
    let s = Command::new(bin).args(["train", "--train", "x", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(s.code(), Some(EXIT_USAGE));
    let s = Command::new(bin).args(["train", "--bogus"]).status().unwrap();
    assert_eq!(s.code(), Some(EXIT_USAGE));
    let missing = dir.path().join("nope.txt");
    let s = Command::new(bin)
        .args(["train", "--lr", "0.1", "--train"])
        .arg(&missing)
        .arg("--out")
        .arg(dir.path().join("o"))
        .status()
        .unwrap();
    assert_eq!(s.code(), Some(EXIT_DATA));
    assert_eq!(Command::new(bin).arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn binary_trains_from_config_file() {
    let dir = tempdir().unwrap();
    let [train, valid, test] = write_toy(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "dataset.train={}\ndataset.valid={}\ndataset.test={}\ntrain.lr=0.01 # Adam\ntrain.m=16\ntrain.k=4\ntrain.n=4\n",
            train.display(),
            valid.display(),
            test.display()
        ),
    )
    .unwrap();
    let out = dir.path().join("o");
    let status = Command::new(env!("CARGO_BIN_EXE_mixkg"))
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--dim", "8", "--epochs", "2", "--batch-size", "16", "--family", "complex", "--deterministic", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let resolved = fs::read_to_string(out.join(commands::RESOLVED_CONFIG)).unwrap();
    assert!(resolved.contains("model.family=complex"));
    assert!(resolved.contains("train.k=4"));
    assert_eq!(metrics(&out).len(), 2);
}

#[test]
fn singleton_sweep_matches_plain_training() {
    let dir = tempdir().unwrap();
    let base = dir.path().join("sweep");
    let s = toy_settings(dir.path(), &base);
    let rows = commands::cmd_sweep(&s, SweepKey::K, &[8]).unwrap();
    let plain = commands::cmd_train(&toy_settings(dir.path(), &dir.path().join("plain"))).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].mrr, plain.test.unwrap().mrr);
    assert_eq!(
        fs::read(base.join("k=8").join(BEST_CKPT)).unwrap(),
        fs::read(dir.path().join("plain").join(BEST_CKPT)).unwrap()
    );
}

#[test]
fn sweep_rejects_empty_and_invalid_values() {
    let dir = tempdir().unwrap();
    let s = toy_settings(dir.path(), &dir.path().join("o"));
    assert!(commands::cmd_sweep(&s, SweepKey::N, &[]).is_err());
    // K above M is rejected before any run starts.
    assert!(commands::cmd_sweep(&s, SweepKey::K, &[2, 64]).is_err());
    assert!(!dir.path().join("o").join("k=2").exists());
}

#[test]
fn sweep_over_k_writes_one_row_per_value() {
    let dir = tempdir().unwrap();
    let base = dir.path().join("o");
    let mut s = toy_settings(dir.path(), &base);
    s.set("train.m", "64").unwrap();
    s.set("train.epochs", "2").unwrap();
    let rows = commands::cmd_sweep(&s, SweepKey::K, &[2, 8, 32]).unwrap();
    assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), [2, 8, 32]);
    let csv = fs::read_to_string(base.join("sweep_k.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,mrr,hits10,wall_secs");
    assert_eq!(lines.len(), 4);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.mrr)));
}

fn trained(dir: &std::path::Path) -> Settings {
    let out = dir.join("run");
    let s = toy_settings(dir, &out);
    commands::cmd_train(&s).unwrap();
    s
}

#[test]
fn inspect_count_zero_is_empty() {
    let dir = tempdir().unwrap();
    let s = trained(dir.path());
    let mut buf = Vec::new();
    let recs = commands::cmd_inspect(&s, &dir.path().join("run").join(BEST_CKPT), 0, &mut buf).unwrap();
    assert!(recs.is_empty() && buf.is_empty());
}

#[test]
fn inspect_records_pass_schema_checks() {
    let dir = tempdir().unwrap();
    let s = trained(dir.path());
    let mut buf = Vec::new();
    let recs = commands::cmd_inspect(&s, &dir.path().join("run").join(BEST_CKPT), 5, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 5);
    for (line, rec) in text.lines().zip(&recs) {
        let back: mixkg::negative_sampler::InspectRecord = serde_json::from_str(line).unwrap();
        assert_eq!(&back, rec);
        back.validate().unwrap();
        assert_eq!(back.candidates.len(), 32);
        assert_eq!(back.selected.len(), 8);
        assert_eq!(back.mixes.len(), 16);
    }
    let mut extra: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    extra["surprise"] = Value::Bool(true);
    assert!(serde_json::from_value::<mixkg::negative_sampler::InspectRecord>(extra).is_err());
}

#[test]
fn selecting_every_candidate_keeps_the_multiset() {
    let dir = tempdir().unwrap();
    let mut s = trained(dir.path());
    s.set("train.k", "32").unwrap();
    let mut buf = Vec::new();
    let recs = commands::cmd_inspect(&s, &dir.path().join("run").join(BEST_CKPT), 4, &mut buf).unwrap();
    for r in recs {
        let (mut a, mut b) = (r.candidates.clone(), r.selected.clone());
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }
}
