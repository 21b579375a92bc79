use crate::error::CliError;
use crate::{Preset, RunArgs, SplitArg};
use bikecast::data::{write_raw, RawSynthConfig, SplitTag, SyntheticConfig};
use bikecast::eval::{
    compare_table, station_geojson, station_histogram, write_ablation_csv, write_compare_csv, write_histogram_csv,
    write_station_csv, EvaluationReport, HISTOGRAM_BIN_WIDTH,
};
use bikecast::model::checkpoint::hash_bytes;
use bikecast::model::Checkpoint;
use bikecast::pipeline::{
    ablation_run, cell_config, compare_run, config_hash, evaluate_checkpoint, load_data, run, PipelineError,
    RunConfig, RunResult,
};
use bikecast::train::{write_epoch_log, Control};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

type Result<T> = std::result::Result<T, CliError>;

/// Reads the config, applies flag overrides and validates it.
pub fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    for p in [
        &mut cfg.data.snapshots,
        &mut cfg.data.trips,
        &mut cfg.data.stations,
        &mut cfg.data.weather,
    ]
    .into_iter()
    .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    if cfg.out.is_relative() {
        cfg.out = base.join(&cfg.out);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(epochs) = args.epochs {
        cfg.train.max_epochs = epochs;
        cfg.train.patience = cfg.train.patience.min(epochs);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cache_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("cache").join("samples.bin")
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Records written files with their SHA-256 and the config hash.
struct Manifest {
    dir: PathBuf,
    config_hash: String,
    files: BTreeMap<String, String>,
}

impl Manifest {
    fn new(dir: &Path, config_hash: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config_hash: config_hash.to_string(),
            files: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        self.files.insert(name.to_string(), hash_bytes(bytes));
        Ok(path)
    }

    fn write_json(&mut self, name: &str, value: &impl serde::Serialize) -> Result<PathBuf> {
        let bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        self.write(name, &bytes)
    }

    fn finish(self) -> Result<()> {
        let path = self.dir.join("manifest.json");
        let body = json!({ "config_hash": self.config_hash, "files": self.files });
        std::fs::write(&path, serde_json::to_vec_pretty(&body).expect("manifest serializes")).map_err(io_err(&path))
    }
}

/// Station CSV, histogram CSV and GeoJSON for one report.
fn export_report(m: &mut Manifest, prefix: &str, report: &EvaluationReport) -> Result<()> {
    let mut buf = Vec::new();
    write_station_csv(report, &mut buf)?;
    m.write(&format!("{prefix}stations.csv"), &buf)?;
    let bins = station_histogram(report, HISTOGRAM_BIN_WIDTH);
    let mut buf = Vec::new();
    write_histogram_csv(&bins, &mut buf)?;
    m.write(&format!("{prefix}station_histogram.csv"), &buf)?;
    m.write_json(&format!("{prefix}stations.geojson"), &station_geojson(report))?;
    Ok(())
}

fn write_run(m: &mut Manifest, prefix: &str, r: &RunResult) -> Result<String> {
    let bytes = r.checkpoint.to_bytes();
    m.write(&format!("{prefix}checkpoint.json"), &bytes)?;
    let mut log = Vec::new();
    write_epoch_log(&r.outcome.log, &mut log)?;
    m.write(&format!("{prefix}epochs.csv"), &log)?;
    m.write_json(&format!("{prefix}report_test.json"), &r.report)?;
    export_report(m, prefix, &r.report)?;
    Ok(hash_bytes(&bytes))
}

fn run_summary(r: &RunResult, checkpoint_sha256: &str) -> Value {
    json!({
        "model": r.report.model,
        "adjacency": r.report.adjacency,
        "checkpoint_sha256": checkpoint_sha256,
        "epochs": r.outcome.log.len(),
        "best_epoch": r.outcome.best_epoch,
        "best_val_mae": r.outcome.best_val_mae,
        "stop": r.outcome.stop,
        "test_mae": r.report.overall_mae,
        "test_mae_per_horizon": r.report.per_horizon_mae,
        "ha_test_mae": r.ha_mae,
    })
}

pub fn config(preset: Preset) -> Result<Value> {
    let cfg = match preset {
        Preset::Dublin => RunConfig::dublin("dublinbikes.csv".into(), Some("weather.csv".into())),
        Preset::Nyc => RunConfig::nyc("citibike_trips.csv".into()),
        Preset::Synthetic => RunConfig::synthetic(SyntheticConfig::default()),
    };
    print!("{}", cfg.to_toml());
    Ok(Value::Null)
}

pub fn synth(out: &Path, seed: u64, stations: usize, days: u32) -> Result<Value> {
    let files = write_raw(
        out,
        &RawSynthConfig {
            stations,
            days,
            seed,
            ..Default::default()
        },
    )
    .map_err(io_err(out))?;
    let name = |p: &Path| PathBuf::from(p.file_name().expect("file name"));
    let mut dublin = RunConfig::dublin(name(&files.snapshots), Some(name(&files.weather)));
    dublin.seed = seed;
    dublin.out = PathBuf::from("runs/dublin");
    let mut nyc = RunConfig::nyc(name(&files.trips));
    nyc.data.top_k = Some(stations);
    nyc.data.split = bikecast::data::SplitRule::sixty_twenty_twenty();
    nyc.seed = seed;
    nyc.out = PathBuf::from("runs/nyc");
    let dublin_cfg = out.join("dublin.toml");
    let nyc_cfg = out.join("nyc.toml");
    std::fs::write(&dublin_cfg, dublin.to_toml()).map_err(io_err(&dublin_cfg))?;
    std::fs::write(&nyc_cfg, nyc.to_toml()).map_err(io_err(&nyc_cfg))?;
    Ok(json!({
        "command": "synth",
        "seed": seed,
        "stations": stations,
        "days": days,
        "files": [files.snapshots, files.weather, files.trips, dublin_cfg, nyc_cfg],
    }))
}

pub fn ingest(args: &RunArgs) -> Result<Value> {
    let cfg = load_config(args)?;
    let (ds, key, status) = load_data(&cfg.data, Some(&cache_path(&cfg)))?;
    let hash = config_hash(&cfg, &key);
    let windows = bikecast::data::window_counts(&ds.split, cfg.model.input_len, cfg.model.output_len);
    let summary = json!({
        "command": "ingest",
        "config_hash": hash,
        "cache_key": key,
        "cache": cache_path(&cfg),
        "cache_status": format!("{:?}", status.expect("cache in use")).to_lowercase(),
        "stations": ds.num_nodes(),
        "steps": ds.num_steps(),
        "bin_minutes": ds.bin_minutes,
        "start": ds.start,
        "features": ds.panel.names,
        "split_steps": ds.split,
        "windows": windows.iter().map(|(t, n)| (t.name(), *n)).collect::<BTreeMap<_, _>>(),
    });
    let mut m = Manifest::new(&cfg.out, &hash)?;
    m.write_json("ingest_summary.json", &summary)?;
    m.finish()?;
    Ok(summary)
}

pub fn train(args: &RunArgs) -> Result<Value> {
    let cfg = load_config(args)?;
    let (ds, key, _) = load_data(&cfg.data, Some(&cache_path(&cfg)))?;
    let hash = config_hash(&cfg, &key);
    log::info!("config hash {hash}");
    let r = run(&cfg, &ds, &hash, |_, _| Control::Continue)?;
    let mut m = Manifest::new(&cfg.out, &hash)?;
    m.write("config.toml", cfg.to_toml().as_bytes())?;
    let ck = write_run(&mut m, "", &r)?;
    let mut summary = run_summary(&r, &ck);
    summary["command"] = "train".into();
    summary["config_hash"] = hash.into();
    m.write_json("train_summary.json", &summary)?;
    m.finish()?;
    Ok(summary)
}

pub fn eval(args: &RunArgs, checkpoint: &Path, split: SplitArg) -> Result<Value> {
    let cfg = load_config(args)?;
    let ck = Checkpoint::load(checkpoint).map_err(|e| CliError::Config(e.to_string()))?;
    let (ds, key, _) = load_data(&cfg.data, Some(&cache_path(&cfg)))?;
    let hash = config_hash(&cfg, &key);
    if ck.config_hash != hash {
        return Err(CliError::Config(format!(
            "checkpoint {} was produced by config {} but the supplied config hashes to {hash}",
            checkpoint.display(),
            ck.config_hash
        )));
    }
    let split = SplitTag::from(split);
    let report = evaluate_checkpoint(&ck, &ds, split)?;
    let mut m = Manifest::new(&cfg.out, &hash)?;
    let name = format!("report_{}.json", split.name());
    m.write_json(&name, &report)?;
    m.finish()?;
    Ok(json!({
        "command": "eval",
        "config_hash": hash,
        "checkpoint": checkpoint,
        "split": split.name(),
        "report": cfg.out.join(name),
        "mae": report.overall_mae,
        "mae_per_horizon": report.per_horizon_mae,
    }))
}

pub fn report(reports: &[PathBuf], out: &Path) -> Result<Value> {
    let mut loaded = Vec::new();
    for path in reports {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let r: EvaluationReport =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        loaded.push(r);
    }
    let hashes: std::collections::BTreeSet<_> = loaded.iter().map(|r| r.config_hash.as_str()).collect();
    let hash = hashes.into_iter().collect::<Vec<_>>().join(",");
    let mut m = Manifest::new(out, &hash)?;
    let mut rows = Vec::new();
    let table_path = out.join("reports.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&table_path).map_err(io_err(&table_path))?));
    let csv_err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["model", "adjacency", "split", "config_hash", "mae", "mae_per_horizon"])
        .map_err(csv_err)?;
    for r in &loaded {
        let prefix = format!("{}_{}_{}_{}_", r.model.to_lowercase(), r.adjacency, r.split, &r.config_hash[..r.config_hash.len().min(12)]);
        export_report(&mut m, &prefix, r)?;
        let horizons: Vec<String> = r.per_horizon_mae.iter().map(|v| v.to_string()).collect();
        w.write_record([
            r.model.as_str(),
            &r.adjacency,
            &r.split,
            &r.config_hash,
            &r.overall_mae.to_string(),
            &horizons.join(";"),
        ])
        .map_err(csv_err)?;
        rows.push(json!({ "model": r.model, "adjacency": r.adjacency, "split": r.split, "mae": r.overall_mae, "prefix": prefix }));
    }
    w.flush().map_err(io_err(&table_path))?;
    drop(w);
    let table = std::fs::read(&table_path).map_err(io_err(&table_path))?;
    m.write("reports.csv", &table)?;
    m.finish()?;
    Ok(json!({ "command": "report", "out": out, "reports": rows }))
}

pub fn compare(args: &RunArgs) -> Result<Value> {
    let cfg = load_config(args)?;
    let (ds, key, _) = load_data(&cfg.data, Some(&cache_path(&cfg)))?;
    let dir = cfg.out.join("compare");
    let mut cells = Vec::new();
    let results = compare_run(&cfg, &ds, &key, |cell, r| {
        let hash = config_hash(&cell_config(&cfg, cell), &key);
        let cell_dir = dir.join(cell.slug());
        let written = Manifest::new(&cell_dir, &hash).and_then(|mut m| match r {
            Ok(res) => {
                m.write("config.toml", cell_config(&cfg, cell).to_toml().as_bytes())?;
                let ck = write_run(&mut m, "", res)?;
                m.finish()?;
                Ok(run_summary(res, &ck))
            }
            Err(e) => {
                m.write("error.txt", e.as_bytes())?;
                m.finish()?;
                Ok(json!({ "error": e }))
            }
        });
        let mut s = written.unwrap_or_else(|e| json!({ "error": e.to_string() }));
        s["cell"] = cell.label().into();
        s["config_hash"] = hash.into();
        match r {
            Ok(res) => log::info!("{}: test MAE {:.4}", cell.label(), res.report.overall_mae),
            Err(e) => log::warn!("{} failed: {e}", cell.label()),
        }
        cells.push(s);
    });
    let outcomes: Vec<_> = results
        .iter()
        .map(|(c, r)| (*c, r.as_ref().map(|x| x.report.overall_mae).map_err(Clone::clone)))
        .collect();
    let rows = compare_table(&outcomes);
    let base_hash = config_hash(&cfg, &key);
    let mut m = Manifest::new(&dir, &base_hash)?;
    let mut buf = Vec::new();
    write_compare_csv(&rows, &mut buf)?;
    m.write("compare.csv", &buf)?;
    let summary = json!({ "command": "compare", "config_hash": base_hash, "table": rows, "cells": cells });
    m.write_json("compare_summary.json", &summary)?;
    m.finish()?;
    if outcomes.iter().all(|(_, r)| r.is_err()) {
        return Err(CliError::Training("every compare cell failed".into()));
    }
    Ok(summary)
}

pub fn ablation(args: &RunArgs) -> Result<Value> {
    let cfg = load_config(args)?;
    let rows = ablation_run(&cfg, |row| match (&row.mae, &row.error) {
        (Some(mae), _) => log::info!("{}: test MAE {mae:.4}", row.label),
        (_, Some(e)) => log::warn!("{} failed: {e}", row.label),
        _ => {}
    });
    let key = bikecast::data::cache_key(&cfg.data).map_err(PipelineError::from)?;
    let hash = config_hash(&cfg, &key);
    let mut m = Manifest::new(&cfg.out.join("ablation"), &hash)?;
    let mut buf = Vec::new();
    write_ablation_csv(&rows, &mut buf)?;
    m.write("ablation.csv", &buf)?;
    let summary = json!({ "command": "ablation", "config_hash": hash, "rows": rows });
    m.write_json("ablation_summary.json", &summary)?;
    m.finish()?;
    if rows.iter().all(|r| r.mae.is_none()) {
        return Err(CliError::Training("every ablation subset failed".into()));
    }
    Ok(summary)
}
