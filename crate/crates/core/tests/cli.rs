use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn evgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evgraph"))
        .args(args)
        .env("EVGRAPH_THREADS", "2")
        .output()
        .expect("failed to launch evgraph")
}

fn json_out(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn params_table_ends_with_head() {
    let out = evgraph(&["params", "--model", "cls", "--conv", "pointnet"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().last(), Some("fully_connected,204900"));
    assert!(text.lines().any(|l| l == "feature_extraction,24680"));

    let det = evgraph(&["params", "--model", "det", "--classes", "5"]);
    let text = String::from_utf8(det.stdout).unwrap();
    assert!(text.lines().any(|l| l == "feature_extraction,40912"));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        json_out(&evgraph(&["synth", "--classes", "5", "--per-class", "40", "--seed", "1", "--dataset", p(d)]));
    }
    let ma = std::fs::read(a.join("manifest.json")).unwrap();
    let mb = std::fs::read(b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
    let entries: Value = serde_json::from_slice(&ma).unwrap();
    assert_eq!(entries.as_array().unwrap().len(), 200);
    for name in ["sample_00000.bin", "sample_00199.bin"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn profile_reports_published_ratio() {
    let report = json_out(&evgraph(&[
        "graph", "profile", "--vertices", "24457", "--edges", "381563", "--profile", "attr64", "--profile", "lean32",
    ]));
    assert_eq!(report["profiles"][0]["mean_total_bytes"], 15_653_832.0);
    assert_eq!(report["profiles"][1]["mean_total_bytes"], 3_443_816.0);
    assert!(report["ratio"].as_f64().unwrap() >= 4.5);
}

#[test]
fn pipeline_with_config_file_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cache = dir.path().join("cache");
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"graph": {"max_events": 500}, "train": {"epochs": 5, "seed": 4}, "synth": {"classes": 3, "samples_per_class": 5}}"#,
    )
    .unwrap();
    let cfg = p(&config);

    json_out(&evgraph(&["synth", "--config", cfg, "--dataset", p(&data), "--seed", "3"]));
    let built = json_out(&evgraph(&["graph", "build", "--config", cfg, "--dataset", p(&data), "--cache", p(&cache)]));
    assert_eq!(built["graphs"], 15);
    assert_eq!(built["reused"], 0);
    assert_eq!(built["config"]["graph"]["max_events"], 500);
    assert!(built["mean_vertices"].as_f64().unwrap() <= 500.0);
    let again = json_out(&evgraph(&["graph", "build", "--config", cfg, "--dataset", p(&data), "--cache", p(&cache)]));
    assert_eq!(again["reused"], 15);

    let profile = json_out(&evgraph(&["graph", "profile", "--cache", p(&cache)]));
    assert_eq!(profile["graphs"], 15);
    assert_eq!(profile["mean_vertices"], built["mean_vertices"]);

    // flags beat the file: 2 epochs, not 5
    let ckpt = dir.path().join("best.ckpt");
    let report = dir.path().join("train.json");
    let trained = json_out(&evgraph(&[
        "train", "cls", "--config", cfg, "--dataset", p(&data), "--cache", p(&cache), "--conv", "gcn",
        "--epochs", "2", "--checkpoint", p(&ckpt), "--report", p(&report),
    ]));
    assert_eq!(trained["epochs_run"], 2);
    assert_eq!(trained["config"]["train"]["epochs"], 2);
    assert_eq!(trained["config"]["train"]["seed"], 4);
    assert_eq!(trained["config"]["conv"], "gcn");
    assert_eq!(trained["train_samples"], 12);
    assert!(ckpt.is_file());
    let echoed: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(echoed["config"], trained["config"]);
    let history = std::fs::read_to_string(dir.path().join("train.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,loss,metric,seconds"));
    assert_eq!(history.lines().count(), 3);

    let eval = json_out(&evgraph(&[
        "eval", "--config", cfg, "--dataset", p(&data), "--cache", p(&cache), "--checkpoint", p(&ckpt),
    ]));
    assert_eq!(eval["metric"], "accuracy");
    assert_eq!(eval["value"], trained["best_metric"]);

    let bench = json_out(&evgraph(&[
        "bench", "--config", cfg, "--dataset", p(&data), "--cache", p(&cache), "--checkpoint", p(&ckpt),
        "--warmup", "2", "--limit", "4",
    ]));
    assert_eq!(bench["samples"], 4);
    let gps = bench["graphs_per_second"].as_f64().unwrap();
    let ms = bench["mean_ms"].as_f64().unwrap();
    assert!((gps * ms - 1000.0).abs() < 1e-6);
}

#[test]
fn detection_training_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    json_out(&evgraph(&["synth", "--classes", "2", "--per-class", "4", "--dataset", p(&data)]));
    let ckpt = dir.path().join("det.ckpt");
    let trained = json_out(&evgraph(&[
        "train", "det", "--dataset", p(&data), "--epochs", "1", "--max-events", "300", "--checkpoint", p(&ckpt),
    ]));
    assert_eq!(trained["metric"], "map50");
    assert_eq!(trained["config"]["train"]["batch_size"], 16);
    assert_eq!(trained["config"]["train"]["weight_decay"], 1e-4);
    let eval = json_out(&evgraph(&["eval", "--dataset", p(&data), "--max-events", "300", "--checkpoint", p(&ckpt), "--all"]));
    assert_eq!(eval["metric"], "map50");
    assert_eq!(eval["samples"], 8);
}

#[test]
fn ingest_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    for (class, name, records) in [("cars", "a.bin", 3usize), ("cats", "b.bin", 2)] {
        let sub = dir.path().join(class);
        std::fs::create_dir_all(&sub).unwrap();
        let bytes: Vec<u8> = (0..records).flat_map(|i| [10, 20, 0x80, 0, i as u8]).collect();
        std::fs::write(sub.join(name), bytes).unwrap();
    }
    let report = json_out(&evgraph(&["ingest", "--dataset", p(dir.path())]));
    assert_eq!(report["samples"], 2);
    assert_eq!(report["classes"], 2);
    assert_eq!(report["mean_events"], 2.5);
    let manifest: Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest[1]["class_id"], 1);
    assert_eq!(manifest[1]["width"], 240);
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| evgraph(args).status.code();
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["nonsense"]), Some(2));
    assert_eq!(code(&["params", "--conv", "lstm"]), Some(2));
    assert_eq!(code(&["train", "cls"]), Some(2));
    assert_eq!(code(&["eval", "--dataset", "/nonexistent/evgraph"]), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"graph": {"radius": -1}}"#).unwrap();
    assert_eq!(code(&["params", "--config", p(&bad)]), Some(0));
    std::fs::write(&bad, r#"{"graph": {"radius": 1}, "typo": 1}"#).unwrap();
    assert_eq!(code(&["params", "--config", p(&bad)]), Some(2));

    // a truncated recording is a runtime failure, not a usage error
    std::fs::write(dir.path().join("x.bin"), [1u8, 2, 3]).unwrap();
    assert_eq!(code(&["ingest", "--dataset", p(dir.path())]), Some(1));

    let out = Command::new(env!("CARGO_BIN_EXE_evgraph"))
        .args(["params"])
        .env("EVGRAPH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
