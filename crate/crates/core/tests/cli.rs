mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{crate_dir, fixture};
use serde_json::Value;

fn mlmcid(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mlmcid"));
    c.args(args).env_remove("MLMCID_SEED");
    c
}

fn run(c: &mut Command) -> Output {
    c.output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synthesize(out: &Path, counts: &str, n_intents: &str, seed: &str) -> Output {
    let pool = fixture("toy_pool.jsonl");
    let tax = fixture("toy_taxonomy.json");
    run(&mut mlmcid(&[
        "synthesize",
        "--pool",
        p(&pool),
        "--taxonomy",
        p(&tax),
        "--out",
        p(out),
        "--counts",
        counts,
        "--n-intents",
        n_intents,
        "--seed",
        seed,
    ]))
}

fn line_count(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.trim().is_empty()).count()
}

/// Trains on toy2 with the toy config plus `extra` overrides.
fn train_toy2(out: &Path, extra: &[&str]) -> Output {
    let (tr, dv, tax, conf) = (
        fixture("toy2/train.jsonl"),
        fixture("toy2/dev.jsonl"),
        fixture("toy_taxonomy.json"),
        crate_dir().join("configs/toy.conf"),
    );
    let mut args = vec!["train", "--quiet", "--train", p(&tr), "--dev", p(&dv), "--taxonomy", p(&tax)];
    args.extend(["--config", p(&conf), "--out", p(out)]);
    args.extend_from_slice(extra);
    run(&mut mlmcid(&args))
}

#[test]
fn synthesize_writes_requested_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = synthesize(dir.path(), "10,3,2", "2", "5");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(line_count(&dir.path().join("train.jsonl")), 10);
    assert_eq!(line_count(&dir.path().join("dev.jsonl")), 3);
    assert_eq!(line_count(&dir.path().join("test.jsonl")), 2);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["n_intents"], 2);
    assert_eq!(manifest["files"]["dev.jsonl"]["examples"], 3);
}

#[test]
fn synthesize_single_intent() {
    let dir = tempfile::tempdir().unwrap();
    assert!(synthesize(dir.path(), "6,2,2", "1", "3").status.success());
    let text = std::fs::read_to_string(dir.path().join("train.jsonl")).unwrap();
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["intents"].as_array().unwrap().len(), 1);
    }
}

#[test]
fn synthesize_rerun_is_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(synthesize(a.path(), "8,2,2", "2", "11").status.success());
    assert!(synthesize(b.path(), "8,2,2", "2", "11").status.success());
    for f in ["manifest.json", "train.jsonl", "dev.jsonl", "test.jsonl"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    assert!(synthesize(c.path(), "8,2,2", "2", "12").status.success());
    assert_ne!(std::fs::read(a.path().join("train.jsonl")).unwrap(), std::fs::read(c.path().join("train.jsonl")).unwrap());
}

#[test]
fn synthesize_rejects_too_many_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = synthesize(dir.path(), "100000,1,1", "2", "1");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_with_missing_dev_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (tr, tax) = (fixture("toy2/train.jsonl"), fixture("toy_taxonomy.json"));
    let missing = dir.path().join("nope.jsonl");
    let out = run(&mut mlmcid(&[
        "train",
        "--train",
        p(&tr),
        "--dev",
        p(&missing),
        "--taxonomy",
        p(&tax),
        "--out",
        p(dir.path()),
    ]));
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("checkpoint.json").exists());
}

#[test]
fn train_overrides_control_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_toy2(dir.path(), &["--set", "epochs=1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("loss_curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    let ckpt: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("checkpoint.json")).unwrap()).unwrap();
    assert_eq!(ckpt["epoch"], 1);
}

#[test]
fn train_rejects_unknown_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_toy2(dir.path(), &["--set", "hiden_dim=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hiden_dim"));
}

#[test]
fn train_seed_falls_back_to_environment() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let curve = |d: &tempfile::TempDir| std::fs::read(d.path().join("loss_curve.csv")).unwrap();
    let (tr, dv, tax) = (fixture("toy2/train.jsonl"), fixture("toy2/dev.jsonl"), fixture("toy_taxonomy.json"));
    let base = |out: &Path| {
        let mut c = mlmcid(&["train", "--quiet", "--train", p(&tr), "--dev", p(&dv), "--taxonomy", p(&tax)]);
        c.args(["--out", p(out), "--epochs", "2", "--set", "embed_dim=8", "--set", "hidden_dim=8"]);
        c.args(["--set", "pointer_hidden=4", "--set", "dropout_rate=0.2"]);
        c
    };
    assert!(run(base(dirs[0].path()).env("MLMCID_SEED", "21")).status.success());
    assert!(run(base(dirs[1].path()).args(["--seed", "21"])).status.success());
    assert!(run(&mut base(dirs[2].path())).status.success());
    assert_eq!(curve(&dirs[0]), curve(&dirs[1]));
    assert_ne!(curve(&dirs[0]), curve(&dirs[2]));

    let bad = tempfile::tempdir().unwrap();
    assert_eq!(run(base(bad.path()).env("MLMCID_SEED", "abc")).status.code(), Some(2));
}

/// Trains the toy2 model to a fit, selecting on the train split itself.
fn fitted_checkpoint(dir: &Path) -> std::path::PathBuf {
    let (tr, tax, conf) = (fixture("toy2/train.jsonl"), fixture("toy_taxonomy.json"), crate_dir().join("configs/toy.conf"));
    let mut args = vec!["train", "--quiet", "--train", p(&tr), "--dev", p(&tr), "--taxonomy", p(&tax)];
    args.extend(["--config", p(&conf), "--out", p(dir)]);
    let out = run(&mut mlmcid(&args));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("checkpoint.json")
}

#[test]
fn eval_thresholds_and_train_fit() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = fitted_checkpoint(dir.path());
    let train = fixture("toy2/train.jsonl");

    let out = run(&mut mlmcid(&["eval", "--checkpoint", p(&ckpt), "--test", p(&train)]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let th = report["thresholded"].as_object().unwrap();
    assert_eq!(th.keys().collect::<Vec<_>>(), ["0.50", "0.60", "0.70", "0.80", "0.90"]);
    assert_eq!(report["n_examples"], 32);
    for gran in ["coarse", "fine"] {
        for view in ["primary", "average"] {
            for m in ["accuracy", "macro_f1"] {
                assert_eq!(report[gran][view][m].as_f64().unwrap(), 1.0, "{gran}.{view}.{m}");
            }
        }
    }
    for v in th.values() {
        assert_eq!(v["primary"].as_f64().unwrap(), 1.0);
        assert_eq!(v["average"].as_f64().unwrap(), 1.0);
    }

    let metrics = dir.path().join("metrics.json");
    let out = run(&mut mlmcid(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--test",
        p(&train),
        "--thresholds",
        "",
        "--out",
        p(&metrics),
    ]));
    assert!(out.status.success());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    assert!(report["thresholded"].as_object().unwrap().is_empty());

    let other_tax = fixture("toy3_taxonomy.json");
    let out = run(&mut mlmcid(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--test",
        p(&train),
        "--taxonomy",
        p(&other_tax),
    ]));
    assert_eq!(out.status.code(), Some(2));

    let toy3 = fixture("toy3/test.jsonl");
    let out = run(&mut mlmcid(&["eval", "--checkpoint", p(&ckpt), "--test", p(&toy3)]));
    assert_eq!(out.status.code(), Some(2));

    let out = run(&mut mlmcid(&["eval", "--checkpoint", p(&ckpt), "--test", p(&train), "--thresholds", "1.2"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predict_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = fitted_checkpoint(dir.path());

    let out = run(&mut mlmcid(&["predict", "--checkpoint", p(&ckpt), "--text", "wake me up at seven , is it raining today"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let intents = v["intents"].as_array().unwrap();
    assert_eq!(intents.len(), 2);
    assert_eq!(intents.iter().filter(|t| t["primary"] == true).count(), 1);
    for t in intents {
        assert!(t["start"].as_u64().unwrap() <= t["end"].as_u64().unwrap());
        assert!(t["end"].as_u64().unwrap() < 10);
    }

    let out = run(&mut mlmcid(&["predict", "--checkpoint", p(&ckpt), "--text", "hello"]));
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for t in v["intents"].as_array().unwrap() {
        assert_eq!((t["start"].as_u64(), t["end"].as_u64()), (Some(0), Some(0)));
    }

    let out = run(&mut mlmcid(&["predict", "--checkpoint", p(&ckpt), "--text", "   "]));
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    let out = run(&mut mlmcid(&["predict", "--checkpoint", p(&missing), "--text", "hi"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tampered_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_toy2(dir.path(), &["--epochs", "1"]);
    assert!(out.status.success());
    let path = dir.path().join("checkpoint.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["format_version"] = Value::from(99);
    std::fs::write(&path, v.to_string()).unwrap();
    let out = run(&mut mlmcid(&["predict", "--checkpoint", p(&path), "--text", "hi"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&mut mlmcid(&["frobnicate"])).status.code(), Some(2));
    assert_eq!(run(&mut mlmcid(&["eval"])).status.code(), Some(2));
    assert_eq!(run(&mut mlmcid(&["--help"])).status.code(), Some(0));
}
