use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcs"))
        .args(args)
        .env("TCS_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tcs(args);
    assert!(
        out.status.success(),
        "tcs {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const TINY: &str = r#"{
  "name": "tiny",
  "scenario": { "n": 40, "replicates": 2, "seed": 11 },
  "train": { "members": 2, "epochs": 2, "hidden": 6, "head_hidden": 4,
             "propensity": { "hidden": 4, "epochs": 1 } },
  "estimators": ["tcs", "snn", "binary", "km"]
}"#;

fn write_config(dir: &Path) -> String {
    let p = dir.join("tiny.json");
    fs::write(&p, TINY).unwrap();
    p.to_string_lossy().into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_ingest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("sim");
    ok(&["simulate", "--config", &cfg, "--out", path(&out)]);
    let train = out.join("tiny").join("rep1").join("train.csv");
    assert!(train.exists() && out.join("tiny/rep0/test_truth.csv").exists());
    let ingested = dir.path().join("ingested.csv");
    let msg = ok(&["ingest", "--input", path(&train), "--u", "5", "--q", "10", "--out", path(&ingested)]);
    assert!(msg.contains("40 subjects"), "{msg}");
    assert_eq!(fs::read(&train).unwrap(), fs::read(&ingested).unwrap());
}

#[test]
fn fit_and_effects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let sim = dir.path().join("sim");
    ok(&["simulate", "--config", &cfg, "--replicates", "1", "--out", path(&sim)]);
    let data = sim.join("tiny/rep0/train.csv");
    let model = dir.path().join("m/model.tcs");
    ok(&["fit", "--config", &cfg, "--data", path(&data), "--estimator", "snn", "--out", path(&model)]);
    let eff = dir.path().join("eff");
    ok(&["effects", "--model", path(&model), "--data", path(&sim.join("tiny/rep0/test.csv")), "--out", path(&eff)]);
    let csv = fs::read_to_string(eff.join("effects.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "id,time,ite,lo,hi,s1,s0");
    assert_eq!(csv.lines().count(), 1 + 40 * 10);
    let cate: serde_json::Value = serde_json::from_slice(&fs::read(eff.join("cate.json")).unwrap()).unwrap();
    assert_eq!(cate["estimator"], "snn");
}

#[test]
fn bench_is_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let summary = ok(&["bench", "--config", &cfg, "--out", path(&a)]);
    assert!(summary.contains("snn_tmle"), "{summary}");
    ok(&["bench", "--config", &cfg, "--sequential", "--out", path(&b)]);
    let replay = a.join("config.json");
    ok(&["bench", "--config", path(&replay), "--out", path(&c)]);
    for f in ["metrics.csv", "effects.csv", "cate.json", "config.json"] {
        let first = fs::read(a.join(f)).unwrap();
        assert!(!first.is_empty());
        assert_eq!(first, fs::read(b.join(f)).unwrap(), "{f} differs between modes");
        assert_eq!(first, fs::read(c.join(f)).unwrap(), "{f} differs on replay");
    }
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    // 2 replicates x 8 estimator rows, each closed by a mean row
    assert_eq!(metrics.lines().filter(|l| l.contains(",mean,")).count(), 16);
}

#[test]
fn errors_map_to_exit_codes() {
    let out = tcs(&["bench", "--estimators", "tcs,cox"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[usage]"));

    let out = tcs(&["bench", "--config", "/nonexistent/run.json"]);
    assert_eq!(out.status.code(), Some(6));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,time,x_1,a\n1,1,0.5,0\n").unwrap();
    let out = tcs(&["ingest", "--input", path(&bad), "--out", path(&dir.path().join("o.csv"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("event_time"));
}
