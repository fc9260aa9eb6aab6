//! The `stattn` binary end to end: exit codes, smoke training and the full
//! ingest, train, evaluate, plot-data and subset workflow.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use stattn::harness::train::{manifest_epochs, FINAL_CHECKPOINT, MANIFEST_FILE};

fn stattn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stattn"))
        .args(args)
        .env_remove("STATTN_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A synthetic dataset with three stations plus a smoke config beside it.
fn smoke_setup(dir: &Path, extra: &str) -> PathBuf {
    stattn::synthetic::dataset(3, 2, 0).save(&dir.join("data")).unwrap();
    let config = dir.join("smoke.conf");
    std::fs::write(
        &config,
        format!(
            "# smoke run\ndata = data\nout = run\nepochs = 2\nbatch = 16\nhidden = 8\n\
             spatial_width = 4\ntemporal_width = 4\nvariant = lstm-attn\n{extra}"
        ),
    )
    .unwrap();
    config
}

#[test]
fn smoke_training_writes_two_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_setup(dir.path(), "");
    let start = Instant::now();
    let out = stattn(&["train", "--config", s(&config), "--seed", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(start.elapsed() < Duration::from_secs(60));
    let run = dir.path().join("run");
    assert_eq!(manifest_epochs(&run.join(MANIFEST_FILE)).unwrap().len(), 2);
    let manifest = std::fs::read_to_string(run.join(MANIFEST_FILE)).unwrap();
    assert!(manifest.contains("seed=1\n"));
    assert!(manifest.contains("variant=lstm-attn\n"));
    assert!(run.join(FINAL_CHECKPOINT).is_file());
}

#[test]
fn seed_flag_then_file_then_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_setup(dir.path(), "epochs = 1\n");
    let run = |seed_env: Option<&str>, args: &[&str], out: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_stattn"));
        cmd.args(["train", "--config", s(&config), "--out", out]).args(args).env("RUST_LOG", "warn");
        match seed_env {
            Some(v) => cmd.env("STATTN_SEED", v),
            None => cmd.env_remove("STATTN_SEED"),
        };
        let o = cmd.output().unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let m = std::fs::read_to_string(Path::new(out).join(MANIFEST_FILE)).unwrap();
        m.lines().find(|l| l.starts_with("seed=")).unwrap().to_string()
    };
    let out = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    assert_eq!(run(Some("9"), &["--seed", "4"], &out("a")), "seed=4");
    assert_eq!(run(Some("9"), &[], &out("b")), "seed=9");
    assert_eq!(run(None, &[], &out("c")), "seed=0");
    // the same seed reproduces the checkpoint bit for bit
    assert_eq!(run(Some("9"), &[], &out("d")), "seed=9");
    let read = |n: &str| std::fs::read(dir.path().join(n).join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(read("b"), read("d"));
    assert_ne!(read("b"), read("c"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&stattn(&["train", "--bogus"])), 1);
    assert_eq!(code(&stattn(&["frobnicate"])), 1);
    assert_eq!(code(&stattn(&[])), 1);
    assert_eq!(code(&stattn(&["evaluate", "--checkpoint", "x", "--data", "y", "--split", "holdout"])), 1);
    assert_eq!(code(&stattn(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let config = smoke_setup(dir.path(), "learning_rate = 0.1\n");
    let out = stattn(&["train", "--config", s(&config)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = stattn(&["subset", "--data", s(&missing), "--count", "1"]);
    assert_eq!(code(&out), 2);
    let out = stattn(&[
        "ingest",
        "--trips",
        s(&dir.path().join("*.csv")),
        "--weather",
        &fixture("weather.csv"),
        "--pois",
        &fixture("pois.csv"),
        "--out",
        s(&dir.path().join("data")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no trip files match"));
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // ingest the fixture exports twice: identical artifacts
    let ingest = |out: &Path| {
        stattn(&[
            "ingest",
            "--trips",
            &fixture("2019*-citibike-tripdata.csv"),
            "--weather",
            &fixture("weather.csv"),
            "--pois",
            &fixture("pois.csv"),
            "--out",
            s(out),
            "--train-months",
            "2019-06",
        ])
    };
    for name in ["fx1", "fx2"] {
        let o = ingest(&d.join(name));
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let hash = |n: &str| std::fs::read_to_string(d.join(n).join("hash.txt")).unwrap();
    assert_eq!(hash("fx1"), hash("fx2"));
    let report = std::fs::read_to_string(d.join("fx1/skip_report.txt")).unwrap();
    assert!(report.contains("poi other: Spaceport 1"), "{report}");

    // train and evaluate on the synthetic set
    let config = smoke_setup(d, "");
    let o = stattn(&["train", "--config", s(&config), "--variant", "gru-attn", "--target", "dropoff"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = d.join("run").join(FINAL_CHECKPOINT);
    let eval = |out: &str| stattn(&["evaluate", "--checkpoint", s(&ckpt), "--data", s(&d.join("data")), "--split", "test", "--out", out]);
    let (e1, e2) = (d.join("e1"), d.join("e2"));
    assert_eq!(code(&eval(s(&e1))), 0);
    assert_eq!(code(&eval(s(&e2))), 0);
    for f in ["metrics.json", "predictions.csv", "attention.csv"] {
        assert_eq!(std::fs::read(e1.join(f)).unwrap(), std::fs::read(e2.join(f)).unwrap(), "{f}");
    }
    let metrics = std::fs::read_to_string(e1.join("metrics.json")).unwrap();
    assert!(metrics.contains("\"variant\": \"gru-attn\"") && metrics.contains("\"target\": \"dropoff\""));

    // default evaluate output goes next to the checkpoint
    let o = stattn(&["evaluate", "--checkpoint", s(&ckpt), "--data", s(&d.join("data")), "--split", "validation"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("run/eval-validation/metrics.json").is_file());

    // a checkpoint for three stations does not fit the fixture's registry
    let o = stattn(&["evaluate", "--checkpoint", s(&ckpt), "--data", s(&d.join("fx1")), "--split", "test"]);
    assert_eq!(code(&o), 2);

    let pred = e1.join("predictions.csv");
    let o = stattn(&["plot-data", "--pred", s(&pred), "--station", "101", "--from", "2019-10-01", "--to", "2019-10-02"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let series = std::fs::read_to_string(e1.join("station-101_2019-10-01_2019-10-02.csv")).unwrap();
    assert!(series.lines().count() > 1);
    let o = stattn(&["plot-data", "--pred", s(&pred), "--station", "7", "--from", "2019-10-01", "--to", "2019-10-02"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nearest ids"));

    let o = stattn(&["subset", "--data", s(&d.join("data")), "--count", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (sub, _) = stattn::data::Dataset::load(&d.join("data-subset-2")).unwrap();
    assert_eq!(sub.stations(), 2);
    assert_eq!(code(&stattn(&["subset", "--data", s(&d.join("data")), "--count", "4"])), 1);
}
