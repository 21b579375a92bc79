use super::{ModelError, Result};
use crate::graph::{AdjacencyKind, AdjacencySpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Stations (graph nodes).
    pub num_nodes: usize,
    /// Input steps `m`.
    pub input_len: usize,
    /// Forecast steps `n`.
    pub output_len: usize,
    /// Input features per node and step.
    pub input_dim: usize,
    /// Forecast channels per node and step.
    pub output_dim: usize,
    #[serde(default = "default_kernel")]
    pub temporal_kernel: usize,
    #[serde(default = "default_kernel")]
    pub cheb_order: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    /// `[c1, c2, c3]`: first temporal conv, graph conv, second temporal conv.
    #[serde(default = "default_widths")]
    pub widths: [usize; 3],
    pub attention: bool,
    pub adjacency: AdjacencySpec,
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

impl ModelConfig {
    /// Default architecture for the given problem size.
    pub fn new(num_nodes: usize, input_len: usize, output_len: usize, input_dim: usize, output_dim: usize) -> Self {
        Self {
            num_nodes,
            input_len,
            output_len,
            input_dim,
            output_dim,
            temporal_kernel: default_kernel(),
            cheb_order: default_kernel(),
            blocks: default_blocks(),
            widths: default_widths(),
            attention: true,
            adjacency: AdjacencySpec::new(AdjacencyKind::Euclidean),
        }
    }

    /// 110 stations, 12 steps in, 3 out, 8 features, availability only.
    pub fn dublin() -> Self {
        Self::new(110, 12, 3, 8, 1)
    }

    /// 250 stations, 12 in, 12 out, pick-up and drop-off demand.
    pub fn nyc() -> Self {
        Self::new(250, 12, 12, 2, 2)
    }

    pub fn with_adjacency(mut self, kind: AdjacencyKind) -> Self {
        self.adjacency.kind = kind;
        self
    }

    pub fn with_attention(mut self, on: bool) -> Self {
        self.attention = on;
        self
    }

    /// Time steps left after all blocks.
    pub fn remaining_len(&self) -> Option<usize> {
        let shrink = self.blocks * 2 * self.temporal_kernel.checked_sub(1)?;
        self.input_len.checked_sub(shrink).filter(|&t| t >= 1)
    }

    /// Channels leaving each block.
    pub fn block_out_channels(&self) -> usize {
        let [c1, _, c3] = self.widths;
        if self.attention {
            c3 + c1
        } else {
            c3
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.num_nodes < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.num_nodes));
        }
        if [self.input_len, self.output_len, self.input_dim, self.output_dim].contains(&0) {
            return bad("lengths and dimensions must be positive".into());
        }
        if self.output_dim > self.input_dim {
            return bad(format!(
                "forecast channels ({}) exceed input features ({})",
                self.output_dim, self.input_dim
            ));
        }
        if self.temporal_kernel == 0 || self.cheb_order == 0 || self.blocks == 0 {
            return bad("kernel sizes and block count must be positive".into());
        }
        if self.widths.contains(&0) {
            return bad("channel widths must be positive".into());
        }
        if self.remaining_len().is_none() {
            return bad(format!(
                "input length {} does not survive {} blocks with temporal kernel {}",
                self.input_len, self.blocks, self.temporal_kernel
            ));
        }
        Ok(())
    }
}
