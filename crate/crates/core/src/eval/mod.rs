//! Metrics, the historical-average baseline and reporting artifacts.

pub mod metrics;
pub mod report;
pub mod study;

pub use metrics::{ha_forecast, ha_split, mae, predict_split};
pub use report::{
    evaluate, station_geojson, station_histogram, write_histogram_csv, write_station_csv, EvaluationReport,
    HistogramBin, ReportMeta, StationMae, HISTOGRAM_BIN_WIDTH,
};
pub use study::{
    ablation_subsets, compare_cells, compare_table, write_ablation_csv, write_compare_csv, AblationRow, AblationSubset,
    CompareCell,
    CompareRow, ModelVariant,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape: {0}")]
    Shape(String),
    #[error("write: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

pub type Result<T> = std::result::Result<T, EvalError>;
