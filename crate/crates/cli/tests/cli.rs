use bikecast::pipeline::RunConfig;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dublin")
}

fn bikecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bikecast"))
        .args(["--log", "warn"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json summary")
}

/// Fixture config shrunk so a run takes well under a second.
fn small_config(dir: &Path, edit: impl FnOnce(&mut RunConfig)) -> PathBuf {
    let text = std::fs::read_to_string(fixture().join("dublin.toml")).unwrap();
    let mut cfg = RunConfig::from_toml(&text).unwrap();
    cfg.data.snapshots = Some(fixture().join("snapshots.csv"));
    cfg.data.weather = Some(fixture().join("weather.csv"));
    cfg.out = dir.join("out");
    cfg.model.widths = [4, 3, 4];
    cfg.model.blocks = 1;
    cfg.train.max_epochs = 2;
    cfg.train.patience = 2;
    edit(&mut cfg);
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn ingest_golden_cache_key_and_hit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |_| {});
    let cfg = cfg.to_str().unwrap();
    let golden = std::fs::read_to_string(fixture().join("cache_key.golden")).unwrap();
    let first = json(&bikecast(&["ingest", "--config", cfg]));
    assert_eq!(first["cache_key"], golden.trim());
    assert_eq!(first["cache_status"], "miss");
    assert_eq!(first["stations"], 3);
    assert_eq!(first["steps"], 192);
    let second = json(&bikecast(&["ingest", "--config", cfg]));
    assert_eq!(second["cache_status"], "hit");
    assert_eq!(second["config_hash"], first["config_hash"]);
}

#[test]
fn malformed_timestamp_names_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines: Vec<String> = std::fs::read_to_string(fixture().join("snapshots.csv"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    lines[5] = lines[5].replacen("2020-07-01 00:05:00", "2020-07-01 0X:05", 1);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let cfg = small_config(dir.path(), |c| c.data.snapshots = Some(bad.clone()));
    let out = bikecast(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 6"), "{err}");
    assert!(err.contains("bad.csv"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.toml"), "seed = 1\n[data]\nunknown = 3\n").unwrap();
    let out = bikecast(&["train", "--config", dir.path().join("broken.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = small_config(dir.path(), |c| c.data.snapshots = Some("/nonexistent/snapshots.csv".into()));
    assert_eq!(bikecast(&["train", "--config", cfg.to_str().unwrap()]).status.code(), Some(3));

    let cfg = small_config(dir.path(), |c| c.train.lr = 1e300);
    let out = bikecast(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_eval_report_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |_| {});
    let cfg_s = cfg.to_str().unwrap();
    let train = json(&bikecast(&["train", "--config", cfg_s]));
    let out = dir.path().join("out");
    let ck = out.join("checkpoint.json");
    let hash = train["config_hash"].as_str().unwrap().to_string();

    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], hash.as_str());
    for f in ["checkpoint.json", "epochs.csv", "report_test.json", "stations.csv", "stations.geojson"] {
        assert!(manifest["files"][f].is_string(), "{f} missing from manifest");
    }
    let ck_json: Value = serde_json::from_slice(&std::fs::read(&ck).unwrap()).unwrap();
    assert_eq!(ck_json["config_hash"], hash.as_str());

    let eval = json(&bikecast(&["eval", "--config", cfg_s, "--checkpoint", ck.to_str().unwrap()]));
    assert_eq!(eval["mae"], train["test_mae"]);

    // a different seed is a different config
    let out_err = bikecast(&["eval", "--config", cfg_s, "--checkpoint", ck.to_str().unwrap(), "--seed", "99"]);
    assert_eq!(out_err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out_err.stderr).contains("hash"));

    let rep_dir = dir.path().join("rep");
    let rep = json(&bikecast(&[
        "report",
        "--reports",
        out.join("report_test.json").to_str().unwrap(),
        "--out",
        rep_dir.to_str().unwrap(),
    ]));
    assert_eq!(rep["reports"].as_array().unwrap().len(), 1);
    let gj: Value = serde_json::from_slice(
        &std::fs::read(rep_dir.join(format!("{}stations.geojson", rep["reports"][0]["prefix"].as_str().unwrap())))
            .unwrap(),
    )
    .unwrap();
    assert_eq!(gj["features"].as_array().unwrap().len(), 3);
    assert_eq!(gj["properties"]["config_hash"], hash.as_str());
}

#[test]
fn identical_runs_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = json(&bikecast(&["train", "--config", small_config(a.path(), |_| {}).to_str().unwrap()]));
    let rb = json(&bikecast(&["train", "--config", small_config(b.path(), |_| {}).to_str().unwrap()]));
    assert_eq!(ra["checkpoint_sha256"], rb["checkpoint_sha256"]);
    let log = |d: &Path| std::fs::read(d.join("out/epochs.csv")).unwrap();
    assert_eq!(log(a.path()), log(b.path()));
}

#[test]
fn compare_twelve_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |c| {
        c.train.max_epochs = 1;
        c.train.patience = 1;
    });
    let s = json(&bikecast(&["compare", "--config", cfg.to_str().unwrap()]));
    let table = s["table"].as_array().unwrap();
    assert_eq!(table.len(), 12);
    assert_eq!(table[0]["model"], "ST-GCN + Euclidean distance");
    assert_eq!(table[0]["pct_vs_baseline"], 0.0);
    let csv = std::fs::read_to_string(dir.path().join("out/compare/compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(dir.path().join("out/compare/ast-gcn_eaam/checkpoint.json").exists());
}

#[test]
fn synth_and_preset_configs_parse() {
    let dir = tempfile::tempdir().unwrap();
    let s = json(&bikecast(&["synth", "--out", dir.path().to_str().unwrap(), "--stations", "4", "--days", "3"]));
    assert_eq!(s["files"].as_array().unwrap().len(), 5);
    for name in ["dublin.toml", "nyc.toml"] {
        RunConfig::from_toml(&std::fs::read_to_string(dir.path().join(name)).unwrap()).unwrap();
    }
    for preset in ["dublin", "nyc", "synthetic"] {
        let out = bikecast(&["config", "--preset", preset]);
        assert!(out.status.success());
        RunConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    }
}
