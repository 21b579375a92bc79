//! From raw files to a windowed, scaled dataset.

use super::aggregate::{aggregate_availability, trips_to_demand};
use super::features::{encode_features, FeaturePanel, FeatureSet, WeatherCategories};
use super::records::{read_snapshots, read_stations, read_trips, read_weather, WeatherTable};
use super::scaler::Scaler;
use super::synthetic::{sinusoid_panel, SyntheticConfig};
use super::window::{split_sizes, window_and_split, SplitRule, SplitSizes, SplitTag, Splits};
use super::{DataError, Result};
use crate::graph::{Station, StationGraph};
use crate::tensor::Tensor;
use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// Station availability snapshots (plus optional weather).
    Dublin,
    /// Trip records turned into pick-up / drop-off demand.
    Nyc,
    /// Generated sinusoids; needs no input files.
    Synthetic,
}

/// Everything needed to turn raw inputs into a [`PreparedDataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: DatasetKind,
    #[serde(default)]
    pub snapshots: Option<PathBuf>,
    #[serde(default)]
    pub trips: Option<PathBuf>,
    /// Station coordinates when the trip file has none.
    #[serde(default)]
    pub stations: Option<PathBuf>,
    #[serde(default)]
    pub weather: Option<PathBuf>,
    pub bin_minutes: u32,
    pub features: FeatureSet,
    /// Stations kept by order count (trip data only).
    #[serde(default)]
    pub top_k: Option<usize>,
    pub split: SplitRule,
    /// Inclusive start of the study period.
    #[serde(default)]
    pub start: Option<DateTime<Utc>>,
    /// Exclusive end of the study period.
    #[serde(default)]
    pub end: Option<DateTime<Utc>>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
}

impl DataConfig {
    /// Snapshot data at 15-minute bins with a 60/20/20 split.
    pub fn dublin(snapshots: PathBuf, weather: Option<PathBuf>) -> Self {
        let features = if weather.is_some() { "AB+TD+WD+WCD" } else { "AB+TD+WD" };
        Self {
            dataset: DatasetKind::Dublin,
            snapshots: Some(snapshots),
            trips: None,
            stations: None,
            weather,
            bin_minutes: 15,
            features: features.parse().expect("valid feature set"),
            top_k: None,
            split: SplitRule::sixty_twenty_twenty(),
            start: None,
            end: None,
            synthetic: None,
        }
    }

    /// Trip data at 30-minute bins, 250 stations, two validation and two
    /// test weeks.
    pub fn nyc(trips: PathBuf) -> Self {
        Self {
            dataset: DatasetKind::Nyc,
            snapshots: None,
            trips: Some(trips),
            stations: None,
            weather: None,
            bin_minutes: 30,
            features: "PD".parse().expect("valid feature set"),
            top_k: Some(250),
            split: SplitRule::two_weeks_each(),
            start: None,
            end: None,
            synthetic: None,
        }
    }

    pub fn synthetic(cfg: SyntheticConfig) -> Self {
        Self {
            dataset: DatasetKind::Synthetic,
            snapshots: None,
            trips: None,
            stations: None,
            weather: None,
            bin_minutes: 15,
            features: "AB".parse().expect("valid feature set"),
            top_k: None,
            split: SplitRule::sixty_twenty_twenty(),
            start: None,
            end: None,
            synthetic: Some(cfg),
        }
    }

    /// Input files in a fixed order.
    pub fn input_files(&self) -> Vec<&Path> {
        [&self.snapshots, &self.trips, &self.stations, &self.weather]
            .into_iter()
            .filter_map(|p| p.as_deref())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.as_ref()
                .map(|_| ())
                .ok_or_else(|| DataError::InvalidArgument(format!("{:?} data needs a {what} file", self.dataset)))
        };
        match self.dataset {
            DatasetKind::Dublin => need(&self.snapshots, "snapshots")?,
            DatasetKind::Nyc => {
                need(&self.trips, "trips")?;
                if self.top_k == Some(0) {
                    return Err(DataError::InvalidArgument("top_k must be at least 1".into()));
                }
            }
            DatasetKind::Synthetic => {
                if self.synthetic.is_none() {
                    return Err(DataError::InvalidArgument("synthetic data needs a [data.synthetic] table".into()));
                }
            }
        }
        if self.features.needs_weather() && self.weather.is_none() {
            return Err(DataError::InvalidArgument(format!(
                "features {} need a weather file",
                self.features
            )));
        }
        if self.bin_minutes == 0 || 60 % self.bin_minutes != 0 {
            return Err(DataError::InvalidArgument(format!(
                "bin of {} min does not divide an hour",
                self.bin_minutes
            )));
        }
        if let (Some(a), Some(b)) = (self.start, self.end) {
            if b <= a {
                return Err(DataError::InvalidArgument("end must be after start".into()));
            }
        }
        Ok(())
    }
}

/// Encoded, unscaled panel plus the metadata needed to rebuild samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedDataset {
    pub stations: Vec<Station>,
    pub start: DateTime<Utc>,
    pub bin_minutes: u32,
    pub panel: FeaturePanel,
    pub split: SplitSizes,
}

impl PreparedDataset {
    pub fn num_nodes(&self) -> usize {
        self.stations.len()
    }

    pub fn num_steps(&self) -> usize {
        self.panel.num_steps()
    }

    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        (0..self.num_steps())
            .map(|i| self.start + TimeDelta::minutes(self.bin_minutes as i64 * i as i64))
            .collect()
    }

    pub fn station_ids(&self) -> Vec<String> {
        self.stations.iter().map(|s| s.id.clone()).collect()
    }

    /// Training-split history of the target signal, `N×T_train`, summing
    /// channels when there are several.
    pub fn train_series(&self) -> Tensor {
        let (n, d, c) = (self.num_nodes(), self.panel.dims(), self.panel.target_channels());
        let t = self.split.train;
        let v = self.panel.values.data();
        Tensor::from_fn(vec![n, t], |k| {
            let (node, step) = (k / t, k % t);
            let base = (step * n + node) * d;
            v[base..base + c].iter().sum()
        })
    }

    /// Station graph carrying the training history used by correlation and
    /// embedding adjacencies.
    pub fn graph(&self) -> Result<StationGraph> {
        Ok(StationGraph::new(self.stations.clone())?.with_series(self.train_series())?)
    }

    /// Fits the scaler on the training split.
    pub fn fit(&self) -> Result<Dataset> {
        self.with_scaler(Scaler::fit(&self.panel.values, self.split.train)?)
    }

    /// Scales with a previously fitted scaler (e.g. one stored with a model).
    pub fn with_scaler(&self, scaler: Scaler) -> Result<Dataset> {
        if scaler.mean.len() != self.panel.dims() {
            return Err(DataError::Schema(format!(
                "scaler has {} columns, panel has {}",
                scaler.mean.len(),
                self.panel.dims()
            )));
        }
        let scaled = scaler.transform(&self.panel.values)?;
        Ok(Dataset {
            raw: Arc::new(self.panel.values.clone()),
            scaled: Arc::new(scaled),
            scaler,
            split: self.split,
            target_channels: self.panel.target_channels(),
        })
    }
}

/// Scaled panel ready for windowing.
#[derive(Debug, Clone)]
pub struct Dataset {
    raw: Arc<Tensor>,
    scaled: Arc<Tensor>,
    pub scaler: Scaler,
    pub split: SplitSizes,
    pub target_channels: usize,
}

impl Dataset {
    pub fn splits(&self, m: usize, n: usize) -> Result<Splits> {
        window_and_split(self.raw.clone(), self.scaled.clone(), self.split, m, n, self.target_channels)
    }

    pub fn feature_dims(&self) -> usize {
        self.raw.shape()[2]
    }

    pub fn num_nodes(&self) -> usize {
        self.raw.shape()[1]
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))
}

fn with_file<T>(path: &Path, f: impl FnOnce(BufReader<File>) -> Result<T>) -> Result<T> {
    f(open(path)?).map_err(|e| e.in_file(path))
}

fn load_weather(cfg: &DataConfig) -> Result<Option<WeatherTable>> {
    cfg.weather.as_deref().map(|p| with_file(p, read_weather)).transpose()
}

/// Reads and encodes the configured inputs.
pub fn prepare(cfg: &DataConfig) -> Result<PreparedDataset> {
    cfg.validate()?;
    let bin = TimeDelta::minutes(cfg.bin_minutes as i64);
    let cats = WeatherCategories::default();
    let in_range = |t: DateTime<Utc>| cfg.start.is_none_or(|s| t >= s) && cfg.end.is_none_or(|e| t < e);
    let (stations, timestamps, base) = match cfg.dataset {
        DatasetKind::Dublin => {
            let mut records = with_file(cfg.snapshots.as_deref().expect("validated"), read_snapshots)?;
            records.retain(|r| in_range(r.timestamp));
            let a = aggregate_availability(&records, bin)?;
            (a.stations, a.timestamps, a.values)
        }
        DatasetKind::Nyc => {
            let table = with_file(cfg.trips.as_deref().expect("validated"), read_trips)?;
            let mut coords = table.coordinates;
            if let Some(p) = cfg.stations.as_deref() {
                coords.extend(with_file(p, read_stations)?);
            }
            let range = match (cfg.start, cfg.end) {
                (Some(s), Some(e)) => Some((s, e)),
                (None, None) => None,
                _ => return Err(DataError::InvalidArgument("trip data needs both start and end, or neither".into())),
            };
            let distinct = {
                let mut ids: Vec<&str> = table
                    .trips
                    .iter()
                    .flat_map(|t| [t.pickup_station.as_str(), t.dropoff_station.as_str()])
                    .collect();
                ids.sort_unstable();
                ids.dedup();
                ids.len()
            };
            let top_k = cfg.top_k.unwrap_or(distinct);
            let d = trips_to_demand(&table.trips, bin, top_k, range)?;
            let stations = d
                .station_ids
                .iter()
                .map(|id| {
                    let (lat, lon) = coords
                        .get(id)
                        .copied()
                        .ok_or_else(|| DataError::Schema(format!("no coordinates for station {id}")))?;
                    Ok(Station {
                        id: id.clone(),
                        latitude: lat,
                        longitude: lon,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (stations, d.timestamps, d.values)
        }
        DatasetKind::Synthetic => {
            let s = cfg.synthetic.as_ref().expect("validated");
            let (stations, values) = sinusoid_panel(s);
            let start = s.start;
            let ts = (0..values.shape()[0]).map(|i| start + bin * i as i32).collect();
            (stations, ts, values)
        }
    };
    let weather = load_weather(cfg)?;
    let panel = encode_features(&base, &timestamps, weather.as_ref(), &cfg.features, &cats)?;
    let split = split_sizes(panel.num_steps(), &cfg.split, cfg.bin_minutes)?;
    log::info!(
        "prepared {} stations x {} steps x {} features (train/val/test {}/{}/{})",
        stations.len(),
        panel.num_steps(),
        panel.dims(),
        split.train,
        split.val,
        split.test
    );
    Ok(PreparedDataset {
        stations,
        start: timestamps[0],
        bin_minutes: cfg.bin_minutes,
        panel,
        split,
    })
}

/// Step count of each split and window count for given `m`, `n`.
pub fn window_counts(split: &SplitSizes, m: usize, n: usize) -> [(SplitTag, usize); 3] {
    SplitTag::ALL.map(|tag| {
        let (_, len) = split.range(tag);
        (tag, (len + 1).saturating_sub(m + n))
    })
}
