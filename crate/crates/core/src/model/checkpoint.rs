//! Self-describing checkpoint files (JSON).

use super::config::ModelConfig;
use super::network::StgcnModel;
use super::{ModelError, Result};
use crate::data::Scaler;
use crate::tensor::{ParamStore, Tensor};
use crate::train::AdamState;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Hash of the run configuration that produced the weights.
    pub config_hash: String,
    pub model: ModelConfig,
    /// Fixed adjacency, or the starting point of an adaptive one.
    pub adjacency: Tensor,
    pub scaler: Scaler,
    pub feature_names: Vec<String>,
    pub station_ids: Vec<String>,
    pub params: ParamStore,
    #[serde(default)]
    pub optimizer: Option<AdamState>,
    #[serde(default)]
    pub best_epoch: Option<usize>,
    #[serde(default)]
    pub best_val_mae: Option<f64>,
}

impl Checkpoint {
    pub fn new(model: &StgcnModel, scaler: Scaler, config_hash: impl Into<String>) -> Self {
        let mut params = model.params.clone();
        params.iter_mut().for_each(|(_, p)| p.grad = None);
        Self {
            format_version: CHECKPOINT_VERSION,
            config_hash: config_hash.into(),
            model: model.config.clone(),
            adjacency: model.base_adjacency().clone(),
            scaler,
            feature_names: Vec::new(),
            station_ids: Vec::new(),
            params,
            optimizer: None,
            best_epoch: None,
            best_val_mae: None,
        }
    }

    pub fn to_model(&self) -> Result<StgcnModel> {
        StgcnModel::from_parts(self.model.clone(), self.params.clone(), self.adjacency.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("checkpoint serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = serde_json::from_slice(bytes).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if v.format_version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "format version {} is not supported (expected {CHECKPOINT_VERSION})",
                v.format_version
            )));
        }
        serde_json::from_slice(bytes).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    /// Writes the file and returns the SHA-256 of its bytes.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes();
        let err = |e: std::io::Error| ModelError::Checkpoint(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(err)?;
        }
        std::fs::write(path, &bytes).map_err(err)?;
        Ok(hash_bytes(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn hash(&self) -> String {
        hash_bytes(&self.to_bytes())
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{AdjacencyKind, AdjacencyMatrix};
    use crate::train::{adam_step, AdamConfig};

    fn tiny(kind: AdjacencyKind) -> StgcnModel {
        let mut cfg = ModelConfig::new(3, 10, 2, 2, 1).with_adjacency(kind);
        cfg.widths = [4, 3, 4];
        let mut w = Tensor::full(vec![3, 3], 0.5);
        (0..3).for_each(|i| w.set(&[i, i], 0.0));
        let adj = match kind {
            AdjacencyKind::Eaam => {
                let mut a = AdjacencyMatrix::fixed(w, kind.category());
                a.embeddings = Some((Tensor::full(vec![3, 2], 0.1), Tensor::full(vec![3, 2], 0.2)));
                a
            }
            _ => AdjacencyMatrix::fixed(w, kind.category()),
        };
        StgcnModel::new(cfg, &adj, 7).unwrap()
    }

    #[test]
    fn roundtrip_bitwise() {
        for kind in [AdjacencyKind::Euclidean, AdjacencyKind::Diaam, AdjacencyKind::Eaam] {
            let mut model = tiny(kind);
            let mut state = AdamState::default();
            for (_, p) in model.params.iter_mut() {
                p.grad = Some(p.value.map(|v| v.sin() + 1.0 / 3.0));
            }
            adam_step(&mut model.params, &mut state, &AdamConfig::default(), 1e-3, 1e-3).unwrap();
            let mut ck = Checkpoint::new(&model, Scaler { mean: vec![0.1, 1.0 / 7.0], std: vec![3.0, 1e-3] }, "abc");
            ck.optimizer = Some(state);
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.hash(), ck.hash());
            let m2 = back.to_model().unwrap();
            let x = Tensor::from_fn(vec![2, 10, 3, 2], |k| (k as f64 * 0.37).cos());
            assert_eq!(m2.predict(&x).unwrap(), model.predict(&x).unwrap());
        }
    }

    #[test]
    fn rejects_other_versions() {
        let ck = Checkpoint::new(&tiny(AdjacencyKind::Euclidean), Scaler { mean: vec![0.0], std: vec![1.0] }, "");
        let mut v: serde_json::Value = serde_json::from_slice(&ck.to_bytes()).unwrap();
        v["format_version"] = 99.into();
        let err = Checkpoint::from_bytes(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(err.to_string().contains("99"));
    }
}
