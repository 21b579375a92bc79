//! End-to-end runs: data → adjacency → model → training → evaluation, plus
//! the feature-ablation and adjacency-comparison studies built on them.

use crate::data::{
    cache_key, load_or_prepare, prepare, CacheStatus, DataConfig, DataError, Feature, PreparedDataset, SplitTag,
    SyntheticConfig,
};
use crate::eval::{
    ablation_subsets, compare_cells, evaluate, ha_split, mae, predict_split, AblationRow, CompareCell, EvalError,
    EvaluationReport, ModelVariant, ReportMeta,
};
use crate::graph::{build_adjacency, AdjacencyKind, AdjacencySpec, GraphError};
use crate::model::{Checkpoint, ModelConfig, ModelError, StgcnModel};
use crate::train::{train_with_observer, Control, EpochRecord, TrainConfig, TrainError, TrainOutcome};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Architecture settings that do not depend on the data; node count and
/// feature widths are filled in from the prepared dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    #[serde(default = "default_input_len")]
    pub input_len: usize,
    pub output_len: usize,
    #[serde(default = "default_kernel")]
    pub temporal_kernel: usize,
    #[serde(default = "default_kernel")]
    pub cheb_order: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_widths")]
    pub widths: [usize; 3],
    #[serde(default = "default_true")]
    pub attention: bool,
    pub adjacency: AdjacencySpec,
}

fn default_input_len() -> usize {
    12
}
fn default_kernel() -> usize {
    3
}
fn default_blocks() -> usize {
    2
}
fn default_widths() -> [usize; 3] {
    [64, 16, 64]
}
fn default_true() -> bool {
    true
}

impl ArchConfig {
    pub fn new(output_len: usize, adjacency: AdjacencyKind) -> Self {
        Self {
            input_len: default_input_len(),
            output_len,
            temporal_kernel: default_kernel(),
            cheb_order: default_kernel(),
            blocks: default_blocks(),
            widths: default_widths(),
            attention: true,
            adjacency: AdjacencySpec::new(adjacency),
        }
    }

    pub fn resolve(&self, num_nodes: usize, input_dim: usize, output_dim: usize) -> ModelConfig {
        ModelConfig {
            num_nodes,
            input_len: self.input_len,
            output_len: self.output_len,
            input_dim,
            output_dim,
            temporal_kernel: self.temporal_kernel,
            cheb_order: self.cheb_order,
            blocks: self.blocks,
            widths: self.widths,
            attention: self.attention,
            adjacency: self.adjacency.clone(),
        }
    }
}

/// A complete, declarative description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds weight init, adaptive-adjacency init and batch shuffling; it
    /// overrides `train.seed`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub data: DataConfig,
    pub model: ArchConfig,
    pub train: TrainConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    /// AST-GCN + EAAM on availability snapshots, 3 steps ahead.
    pub fn dublin(snapshots: PathBuf, weather: Option<PathBuf>) -> Self {
        Self {
            seed: 0,
            out: default_out(),
            data: DataConfig::dublin(snapshots, weather),
            model: ArchConfig::new(3, AdjacencyKind::Eaam),
            train: TrainConfig::dublin(),
        }
    }

    /// AST-GCN + EAAM on trip demand, 12 steps ahead.
    pub fn nyc(trips: PathBuf) -> Self {
        Self {
            seed: 0,
            out: default_out(),
            data: DataConfig::nyc(trips),
            model: ArchConfig::new(12, AdjacencyKind::Eaam),
            train: TrainConfig::nyc(),
        }
    }

    pub fn synthetic(cfg: SyntheticConfig) -> Self {
        Self {
            seed: 0,
            out: default_out(),
            data: DataConfig::synthetic(cfg),
            model: ArchConfig::new(3, AdjacencyKind::Eaam),
            train: TrainConfig::dublin(),
        }
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<()> {
        self.data.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train_config().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let probe = self.model.resolve(2, self.data.features.dims(), self.data.features.target_channels());
        probe.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn model_config(&self, ds: &PreparedDataset) -> ModelConfig {
        self.model.resolve(ds.num_nodes(), ds.panel.dims(), ds.panel.target_channels())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }
}

/// Hash identifying a run: the configuration with the output directory and
/// input paths left out, combined with the data cache key (which covers the
/// input file contents).
pub fn config_hash(cfg: &RunConfig, data_key: &str) -> String {
    let mut canonical = cfg.clone();
    canonical.out = PathBuf::new();
    canonical.train.seed = cfg.seed;
    for p in [
        &mut canonical.data.snapshots,
        &mut canonical.data.trips,
        &mut canonical.data.stations,
        &mut canonical.data.weather,
    ] {
        if p.is_some() {
            *p = Some("<input>".into());
        }
    }
    let json = serde_json::to_value(&canonical)
        .and_then(|v| serde_json::to_string(&v))
        .expect("config serializes");
    let mut h = Sha256::new();
    h.update(json.as_bytes());
    h.update(b"\0data\0");
    h.update(data_key.as_bytes());
    hex::encode(h.finalize())
}

/// Prepared data plus its cache key; uses `cache` when given.
pub fn load_data(cfg: &DataConfig, cache: Option<&Path>) -> Result<(PreparedDataset, String, Option<CacheStatus>)> {
    match cache {
        Some(path) => {
            let (ds, key, status) = load_or_prepare(cfg, path)?;
            Ok((ds, key, Some(status)))
        }
        None => {
            let key = cache_key(cfg)?;
            Ok((prepare(cfg)?, key, None))
        }
    }
}

/// Fresh model for `ds`, adjacency built from the training history.
pub fn build_model(cfg: &RunConfig, ds: &PreparedDataset) -> Result<StgcnModel> {
    let model_cfg = cfg.model_config(ds);
    let graph = ds.graph()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let adjacency = build_adjacency(&model_cfg.adjacency, &graph, &mut rng)?;
    Ok(StgcnModel::new(model_cfg, &adjacency, cfg.seed)?)
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub checkpoint: Checkpoint,
    pub outcome: TrainOutcome,
    /// Test-split evaluation of the selected parameters.
    pub report: EvaluationReport,
    /// Historical-average MAE on the same test windows.
    pub ha_mae: f64,
}

fn model_labels(model: &ModelConfig) -> (String, String) {
    (
        ModelVariant::from_attention(model.attention).to_string(),
        model.adjacency.kind.name().to_string(),
    )
}

/// Trains and evaluates one configuration.
pub fn run(
    cfg: &RunConfig,
    ds: &PreparedDataset,
    config_hash: &str,
    observer: impl FnMut(&EpochRecord, &StgcnModel) -> Control,
) -> Result<RunResult> {
    cfg.validate()?;
    let data = ds.fit()?;
    let splits = data.splits(cfg.model.input_len, cfg.model.output_len)?;
    let mut model = build_model(cfg, ds)?;
    let outcome = train_with_observer(
        &mut model,
        &splits.train,
        &splits.val,
        &data.scaler,
        &cfg.train_config(),
        observer,
    )?;
    let mut checkpoint = Checkpoint::new(&model, data.scaler.clone(), config_hash);
    checkpoint.feature_names = ds.panel.names.clone();
    checkpoint.station_ids = ds.station_ids();
    checkpoint.optimizer = Some(outcome.optimizer.clone());
    checkpoint.best_epoch = Some(outcome.best_epoch);
    checkpoint.best_val_mae = Some(outcome.best_val_mae);
    let report = evaluate_model(&model, &checkpoint, ds, SplitTag::Test)?;
    let (ha_pred, ha_truth) = ha_split(&splits.test)?;
    let ha_mae = mae(&ha_pred, &ha_truth)?;
    Ok(RunResult {
        checkpoint,
        outcome,
        report,
        ha_mae,
    })
}

fn evaluate_model(model: &StgcnModel, ck: &Checkpoint, ds: &PreparedDataset, split: SplitTag) -> Result<EvaluationReport> {
    let data = ds.with_scaler(ck.scaler.clone())?;
    let splits = data.splits(model.config.input_len, model.config.output_len)?;
    let set = splits.get(split);
    let (pred, truth) = predict_split(model, set, &data.scaler, 64)?;
    let (name, adjacency) = model_labels(&model.config);
    Ok(evaluate(
        &pred,
        &truth,
        &ds.stations,
        ReportMeta {
            model: name,
            adjacency,
            config_hash: ck.config_hash.clone(),
            split: split.name().to_string(),
        },
    )?)
}

/// Evaluates a stored checkpoint on one split of `ds`.
pub fn evaluate_checkpoint(ck: &Checkpoint, ds: &PreparedDataset, split: SplitTag) -> Result<EvaluationReport> {
    if ck.station_ids != ds.station_ids() {
        return Err(PipelineError::Config("checkpoint stations differ from the dataset's".into()));
    }
    if ck.feature_names != ds.panel.names {
        return Err(PipelineError::Config(format!(
            "checkpoint features {:?} differ from the dataset's {:?}",
            ck.feature_names, ds.panel.names
        )));
    }
    evaluate_model(&ck.to_model()?, ck, ds, split)
}

/// Trains one model per ablation feature subset. The base setting is
/// ST-GCN (no attention) with the Euclidean-distance graph; everything else
/// comes from `base`. A failing subset is recorded and the rest continue.
pub fn ablation_run(base: &RunConfig, mut on_row: impl FnMut(&AblationRow)) -> Vec<AblationRow> {
    let base_feature = base.data.features.base();
    let base_feature = if base_feature == Feature::Demand {
        Feature::Demand
    } else {
        Feature::AvailableBikes
    };
    let mut rows = Vec::new();
    for subset in ablation_subsets(base_feature) {
        let mut cfg = base.clone();
        cfg.data.features = subset.features.clone();
        cfg.model.attention = false;
        cfg.model.adjacency.kind = AdjacencyKind::Euclidean;
        let outcome = (|| -> Result<f64> {
            let (ds, key, _) = load_data(&cfg.data, None)?;
            let hash = config_hash(&cfg, &key);
            Ok(run(&cfg, &ds, &hash, |_, _| Control::Continue)?.report.overall_mae)
        })();
        let row = AblationRow {
            label: subset.label,
            features: subset.features.to_string(),
            feature_dim: subset.features.dims(),
            mae: outcome.as_ref().ok().copied(),
            reference_mae: subset.reference_mae,
            error: outcome.err().map(|e| e.to_string()),
        };
        on_row(&row);
        rows.push(row);
    }
    rows
}

/// The run configuration of one comparison cell.
pub fn cell_config(base: &RunConfig, cell: CompareCell) -> RunConfig {
    let mut cfg = base.clone();
    cfg.model.attention = cell.model.attention();
    cfg.model.adjacency.kind = cell.adjacency;
    cfg
}

/// Runs every model × adjacency cell on the same data and seed. Failing
/// cells carry their error text.
pub fn compare_run(
    base: &RunConfig,
    ds: &PreparedDataset,
    data_key: &str,
    mut on_cell: impl FnMut(CompareCell, &std::result::Result<RunResult, String>),
) -> Vec<(CompareCell, std::result::Result<RunResult, String>)> {
    compare_cells()
        .into_iter()
        .map(|cell| {
            let cfg = cell_config(base, cell);
            let hash = config_hash(&cfg, data_key);
            let r = run(&cfg, ds, &hash, |_, _| Control::Continue).map_err(|e| e.to_string());
            on_cell(cell, &r);
            (cell, r)
        })
        .collect()
}
