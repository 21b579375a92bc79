//! Evaluation reports and station-level exports.

use super::metrics::mae;
use super::{EvalError, Result};
use crate::graph::Station;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMae {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub mae: f64,
    /// Absolute errors averaged into `mae`.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub adjacency: String,
    pub config_hash: String,
    pub split: String,
    pub samples: usize,
    /// MAE over every sample, horizon, station and channel, original units.
    pub overall_mae: f64,
    /// One value per forecast step.
    pub per_horizon_mae: Vec<f64>,
    pub per_station: Vec<StationMae>,
}

/// Labels attached to a report.
#[derive(Debug, Clone, Default)]
pub struct ReportMeta {
    pub model: String,
    pub adjacency: String,
    pub config_hash: String,
    pub split: String,
}

/// Decomposes the errors of `S×n×N×c` predictions by horizon and station.
pub fn evaluate(pred: &Tensor, truth: &Tensor, stations: &[Station], meta: ReportMeta) -> Result<EvaluationReport> {
    let overall_mae = mae(pred, truth)?;
    let (s, n, nodes, c) = match pred.shape() {
        [s, n, nn, c] => (*s, *n, *nn, *c),
        sh => return Err(EvalError::Shape(format!("predictions must be S×n×N×c, got {sh:?}"))),
    };
    if stations.len() != nodes {
        return Err(EvalError::Shape(format!("{} stations for {nodes} nodes", stations.len())));
    }
    let mut horizon = vec![0.0; n];
    let mut station = vec![0.0; nodes];
    for (k, (p, t)) in pred.data().iter().zip(truth.data()).enumerate() {
        let e = (p - t).abs();
        horizon[(k / (nodes * c)) % n] += e;
        station[(k / c) % nodes] += e;
    }
    let per_h = (s * nodes * c) as f64;
    let per_s = s * n * c;
    Ok(EvaluationReport {
        model: meta.model,
        adjacency: meta.adjacency,
        config_hash: meta.config_hash,
        split: meta.split,
        samples: s,
        overall_mae,
        per_horizon_mae: horizon.into_iter().map(|v| v / per_h).collect(),
        per_station: stations
            .iter()
            .zip(station)
            .map(|(st, sum)| StationMae {
                id: st.id.clone(),
                latitude: st.latitude,
                longitude: st.longitude,
                mae: sum / per_s as f64,
                count: per_s,
            })
            .collect(),
    })
}

impl EvaluationReport {
    /// Count-weighted mean of the per-station MAEs; equals the overall MAE
    /// up to rounding.
    pub fn station_weighted_mae(&self) -> f64 {
        let (num, den) = self
            .per_station
            .iter()
            .fold((0.0, 0usize), |(a, b), s| (a + s.mae * s.count as f64, b + s.count));
        num / den as f64
    }
}

pub const HISTOGRAM_BIN_WIDTH: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub stations: Vec<String>,
}

/// Station MAEs bucketed into `[k·w, (k+1)·w)` bins from 0 up to the
/// largest value; empty interior bins are kept so the axis is regular.
pub fn station_histogram(report: &EvaluationReport, width: f64) -> Vec<HistogramBin> {
    let index = |v: f64| (v / width).floor().max(0.0) as usize;
    let top = report.per_station.iter().map(|s| index(s.mae)).max().unwrap_or(0);
    let mut bins: Vec<HistogramBin> = (0..=top)
        .map(|k| HistogramBin {
            lower: k as f64 * width,
            upper: (k + 1) as f64 * width,
            count: 0,
            stations: Vec::new(),
        })
        .collect();
    for s in &report.per_station {
        let b = &mut bins[index(s.mae)];
        b.count += 1;
        b.stations.push(s.id.clone());
    }
    bins
}

/// CSV with one row per station: `station_id,latitude,longitude,mae`.
pub fn write_station_csv(report: &EvaluationReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| EvalError::Io(e.to_string());
    w.write_record(["station_id", "latitude", "longitude", "mae"]).map_err(err)?;
    for s in &report.per_station {
        w.write_record([
            s.id.clone(),
            s.latitude.to_string(),
            s.longitude.to_string(),
            s.mae.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}

pub fn write_histogram_csv(bins: &[HistogramBin], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| EvalError::Io(e.to_string());
    w.write_record(["lower", "upper", "count"]).map_err(err)?;
    for b in bins {
        w.write_record([b.lower.to_string(), b.upper.to_string(), b.count.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}

/// GeoJSON feature collection of station points carrying their MAE.
pub fn station_geojson(report: &EvaluationReport) -> serde_json::Value {
    let features: Vec<_> = report
        .per_station
        .iter()
        .map(|s| {
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [s.longitude, s.latitude] },
                "properties": { "station_id": s.id, "mae": s.mae },
            })
        })
        .collect();
    json!({
        "type": "FeatureCollection",
        "properties": {
            "model": report.model,
            "adjacency": report.adjacency,
            "config_hash": report.config_hash,
            "split": report.split,
        },
        "features": features,
    })
}
