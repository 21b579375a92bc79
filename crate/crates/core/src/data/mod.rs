//! Raw bike-sharing data to supervised samples: CSV ingest, time binning,
//! feature encoding, train-only scaling, chronological splits and windows.

pub mod aggregate;
pub mod cache;
pub mod features;
pub mod prepare;
pub mod records;
pub mod scaler;
pub mod synthetic;
pub mod window;

pub use aggregate::{aggregate_availability, trips_to_demand, Availability, Demand};
pub use cache::{cache_key, load_or_prepare, read_cache, write_cache, CacheStatus};
pub use features::{encode_features, Feature, FeaturePanel, FeatureSet, WeatherCategories, WEATHER_CATEGORIES};
pub use prepare::{prepare, window_counts, DataConfig, Dataset, DatasetKind, PreparedDataset};
pub use records::{RawSnapshotRecord, TripRecord, WeatherRecord, WeatherTable};
pub use scaler::{fit_apply_scaler, Scaler};
pub use synthetic::{sinusoid_panel, write_raw, RawFiles, RawSynthConfig, SyntheticConfig};
pub use window::{split_sizes, window_and_split, SampleSet, SplitRule, SplitSizes, SplitTag, Splits};

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("{file}: {source}")]
    InFile {
        file: String,
        #[source]
        source: Box<DataError>,
    },
    #[error("schema: {0}")]
    Schema(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("no data: {0}")]
    Empty(String),
    #[error("feature unavailable: {0}")]
    FeatureUnavailable(String),
    #[error("{split} split has {steps} steps but a window needs {needed}")]
    SplitTooShort { split: SplitTag, steps: usize, needed: usize },
    #[error("io: {0}")]
    Io(String),
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

impl DataError {
    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (DataError::Row { .. } | DataError::Schema(_)) => DataError::InFile {
                file: path.display().to_string(),
                source: Box::new(e),
            },
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, DataError>;
