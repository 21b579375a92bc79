//! Feature-ablation and adjacency-comparison tables.

use super::{EvalError, Result};
use crate::data::{Feature, FeatureSet};
use crate::graph::{AdjacencyCategory, AdjacencyKind};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;

/// Feature combinations of the ablation table, in row order, each paired
/// with its published MAE on the Dublin extract.
const ABLATION_ROWS: [(&[Feature], Option<&str>, f64); 9] = {
    use Feature::*;
    [
        (&[], None, 3.24),
        (&[TimeOfDay], None, 3.19),
        (&[TimeOfDay, Weekday], None, 3.21),
        (&[TimeOfDay, Weekday, WeatherCondition], None, 3.16),
        (&[TimeOfDay, Weekday, WeatherCondition, Temperature], None, 3.36),
        (&[TimeOfDay, Weekday, WeatherCondition, WindSpeed], None, 3.40),
        (&[TimeOfDay, Weekday, WeatherCondition, CloudCover], None, 3.30),
        (&[TimeOfDay, Weekday, WeatherCondition, Humidity], None, 3.40),
        (
            &[TimeOfDay, Weekday, WeatherCondition, Temperature, WindSpeed, CloudCover, Humidity],
            Some("All Together"),
            3.56,
        ),
    ]
};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSubset {
    pub label: String,
    pub features: FeatureSet,
    pub reference_mae: f64,
}

/// The nine ablation subsets on top of `base` (normally available bikes).
pub fn ablation_subsets(base: Feature) -> Vec<AblationSubset> {
    ABLATION_ROWS
        .iter()
        .map(|(extra, label, reference_mae)| {
            let mut fs = vec![base];
            fs.extend_from_slice(extra);
            let features = FeatureSet::new(fs).expect("ablation rows are valid feature sets");
            AblationSubset {
                label: label.map_or_else(|| features.to_string(), str::to_string),
                features,
                reference_mae: *reference_mae,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub features: String,
    pub feature_dim: usize,
    /// Test MAE; `None` when the run failed.
    pub mae: Option<f64>,
    pub reference_mae: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn write_ablation_csv(rows: &[AblationRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| EvalError::Io(e.to_string());
    w.write_record(["feature_combination", "features", "feature_dim", "mae", "reference_mae", "error"])
        .map_err(err)?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.features.clone(),
            r.feature_dim.to_string(),
            r.mae.map(|v| v.to_string()).unwrap_or_default(),
            r.reference_mae.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "ST-GCN")]
    StGcn,
    #[serde(rename = "AST-GCN")]
    AstGcn,
}

impl ModelVariant {
    pub fn attention(&self) -> bool {
        matches!(self, Self::AstGcn)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::StGcn => "ST-GCN",
            Self::AstGcn => "AST-GCN",
        }
    }

    pub fn from_attention(attention: bool) -> Self {
        if attention {
            Self::AstGcn
        } else {
            Self::StGcn
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompareCell {
    pub model: ModelVariant,
    pub adjacency: AdjacencyKind,
}

impl CompareCell {
    pub const BASELINE: CompareCell = CompareCell {
        model: ModelVariant::StGcn,
        adjacency: AdjacencyKind::Euclidean,
    };

    pub fn label(&self) -> String {
        format!("{} + {}", self.model, self.adjacency.display_name())
    }

    /// Directory-safe identifier, e.g. `ast-gcn_eaam`.
    pub fn slug(&self) -> String {
        format!("{}_{}", self.model.name().to_ascii_lowercase(), self.adjacency.name())
    }

    pub fn category(&self) -> AdjacencyCategory {
        self.adjacency.category()
    }

    /// Published Dublin MAE for the cells that were reported.
    pub fn reference_mae(&self) -> Option<f64> {
        use AdjacencyKind::*;
        use ModelVariant::*;
        match (self.model, self.adjacency) {
            (StGcn, Euclidean) => Some(1.36),
            (StGcn, Diaam) => Some(1.27),
            (AstGcn, Diaam) => Some(1.04),
            (AstGcn, Eaam) => Some(1.00),
            (AstGcn, Euclidean) => Some(1.06),
            (AstGcn, Geographic) => Some(1.09),
            (AstGcn, Pearson) => Some(1.07),
            (AstGcn, StEmbedding) => Some(1.01),
            _ => None,
        }
    }
}

/// Every model × adjacency combination, ST-GCN first.
pub fn compare_cells() -> Vec<CompareCell> {
    [ModelVariant::StGcn, ModelVariant::AstGcn]
        .into_iter()
        .flat_map(|model| AdjacencyKind::ALL.into_iter().map(move |adjacency| CompareCell { model, adjacency }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub model: String,
    pub category: String,
    pub mae: Option<f64>,
    /// Relative change against the ST-GCN + Euclidean cell, in percent.
    pub pct_vs_baseline: Option<f64>,
    pub reference_mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Builds table rows from per-cell outcomes (`Err` holds the failure text).
pub fn compare_table(results: &[(CompareCell, std::result::Result<f64, String>)]) -> Vec<CompareRow> {
    let baseline = results
        .iter()
        .find(|(c, _)| *c == CompareCell::BASELINE)
        .and_then(|(_, r)| r.as_ref().ok().copied());
    results
        .iter()
        .map(|(cell, r)| {
            let mae = r.as_ref().ok().copied();
            CompareRow {
                model: cell.label(),
                category: cell.category().label().to_string(),
                mae,
                pct_vs_baseline: mae.zip(baseline).map(|(m, b)| 100.0 * (m - b) / b),
                reference_mae: cell.reference_mae(),
                error: r.as_ref().err().cloned(),
            }
        })
        .collect()
}

pub fn write_compare_csv(rows: &[CompareRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| EvalError::Io(e.to_string());
    w.write_record(["model", "category", "mae", "pct_vs_baseline", "reference_mae", "error"])
        .map_err(err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.category.clone(),
            opt(r.mae),
            opt(r.pct_vs_baseline),
            opt(r.reference_mae),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_dims_and_order() {
        let rows = ablation_subsets(Feature::AvailableBikes);
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[0].features.dims(), 1);
        assert_eq!(rows[3].label, "AB+TD+WD+WCD");
        assert_eq!(rows[3].features.dims(), 8);
        assert_eq!(rows[8].label, "All Together");
        assert_eq!(rows[8].features.dims(), 12);
        let best = rows.iter().min_by(|a, b| a.reference_mae.total_cmp(&b.reference_mae)).unwrap();
        assert_eq!(best.label, "AB+TD+WD+WCD");
    }

    #[test]
    fn twelve_cells_and_baseline_delta() {
        let cells = compare_cells();
        assert_eq!(cells.len(), 12);
        assert_eq!(cells[0], CompareCell::BASELINE);
        let results: Vec<_> = cells
            .iter()
            .map(|&c| {
                let r = match c.adjacency {
                    AdjacencyKind::Pearson => Err("boom".to_string()),
                    _ => c.reference_mae().ok_or_else(|| "n/a".to_string()),
                };
                (c, r)
            })
            .collect();
        let rows = compare_table(&results);
        assert_eq!(rows[0].pct_vs_baseline, Some(0.0));
        let eaam = rows.iter().find(|r| r.model == "AST-GCN + EAAM").unwrap();
        assert!((eaam.pct_vs_baseline.unwrap() - (-26.47)).abs() < 0.01);
        assert_eq!(eaam.category, "ST + A");
        assert!(rows.iter().filter(|r| r.error.is_some()).count() >= 2);
        let mut buf = Vec::new();
        write_compare_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 13);
    }
}
