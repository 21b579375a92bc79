//! The assembled ST-GCN / AST-GCN forecaster.

use super::config::ModelConfig;
use super::layers::{plain_block_forward, stconv_block_forward, BlockActivations, BlockParams, TgcParams};
use super::{ModelError, Result};
use crate::graph::{
    chebyshev_basis, chebyshev_terms, eaam, normalized_laplacian, AdjacencyKind, AdjacencyMatrix, ChebyshevBasis,
    LAMBDA_MAX_BOUND,
};
use crate::tensor::{BoundParams, Constraint, ParamStore, Parameter, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ADJ_WEIGHT: &str = "adj.w";
pub const ADJ_E1: &str = "adj.e1";
pub const ADJ_E2: &str = "adj.e2";

#[derive(Debug, Clone, Copy)]
enum Init {
    Xavier { fan_in: usize, fan_out: usize },
    Zero,
}

/// Network weights (adjacency parameters excluded) in initialization order.
fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let tgc = |out: &mut Vec<_>, prefix: &str, kt: usize, cin: usize, cout: usize| {
        out.push((
            format!("{prefix}.w"),
            vec![kt * cin, 2 * cout],
            Init::Xavier {
                fan_in: kt * cin,
                fan_out: 2 * cout,
            },
        ));
        out.push((format!("{prefix}.b"), vec![2 * cout], Init::Zero));
        if cin > cout {
            out.push((
                format!("{prefix}.proj"),
                vec![cin, cout],
                Init::Xavier {
                    fan_in: cin,
                    fan_out: cout,
                },
            ));
        }
    };
    let [c1, c2, c3] = config.widths;
    let (kt, ks) = (config.temporal_kernel, config.cheb_order);
    let mut cin = config.input_dim;
    for blk in 0..config.blocks {
        tgc(&mut out, &format!("block{blk}.tgc1"), kt, cin, c1);
        out.push((
            format!("block{blk}.sgc.theta"),
            vec![ks * c1, c2],
            Init::Xavier {
                fan_in: ks * c1,
                fan_out: c2,
            },
        ));
        out.push((format!("block{blk}.sgc.b"), vec![c2], Init::Zero));
        tgc(&mut out, &format!("block{blk}.tgc2"), kt, c2, c3);
        cin = config.block_out_channels();
    }
    let t_rem = config.remaining_len().unwrap_or(1);
    tgc(&mut out, "head.tgc", t_rem, cin, c3);
    let outputs = config.output_len * config.output_dim;
    out.push((
        "head.fc.w".into(),
        vec![c3, outputs],
        Init::Xavier {
            fan_in: c3,
            fan_out: outputs,
        },
    ));
    out.push(("head.fc.b".into(), vec![outputs], Init::Zero));
    out
}

/// Network weights plus the graph they run on.
#[derive(Debug, Clone)]
pub struct StgcnModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    /// Fixed adjacency, or the starting matrix of an adaptive one.
    adjacency: Tensor,
    basis: Option<ChebyshevBasis>,
}

impl StgcnModel {
    /// Fresh model with Xavier-uniform weights and zero biases drawn from
    /// `seed`. Adaptive adjacencies become parameters: DIAAM's matrix
    /// (clamped to `[0, 1]`) or EAAM's two embedding tables.
    pub fn new(config: ModelConfig, adjacency: &AdjacencyMatrix, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape, init) in layout(&config) {
            let value = match init {
                Init::Zero => Tensor::zeros(shape),
                Init::Xavier { fan_in, fan_out } => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    Tensor::from_fn(shape, |_| rng.random_range(-a..=a))
                }
            };
            params.insert(name, Parameter::new(value));
        }
        match config.adjacency.kind {
            AdjacencyKind::Diaam => params.insert(
                ADJ_WEIGHT,
                Parameter::new(adjacency.w.clone()).with_constraint(Constraint::Clamp { min: 0.0, max: 1.0 }),
            ),
            AdjacencyKind::Eaam => {
                let (e1, e2) = adjacency
                    .embeddings
                    .clone()
                    .ok_or_else(|| ModelError::Config("embedding adjacency carries no embeddings".into()))?;
                params.insert(ADJ_E1, Parameter::new(e1));
                params.insert(ADJ_E2, Parameter::new(e2));
            }
            _ => {}
        }
        Self::from_parts(config, params, adjacency.w.clone())
    }

    /// Reassembles a model from stored weights, recomputing the fixed
    /// Chebyshev basis when the adjacency is not trained.
    pub fn from_parts(config: ModelConfig, params: ParamStore, adjacency: Tensor) -> Result<Self> {
        config.validate()?;
        let n = config.num_nodes;
        if adjacency.shape() != [n, n] {
            return Err(ModelError::Config(format!(
                "adjacency {:?} does not match {n} nodes",
                adjacency.shape()
            )));
        }
        let mut expected: Vec<(String, Vec<usize>)> =
            layout(&config).into_iter().map(|(name, shape, _)| (name, shape)).collect();
        match config.adjacency.kind {
            AdjacencyKind::Diaam => expected.push((ADJ_WEIGHT.into(), vec![n, n])),
            AdjacencyKind::Eaam => {
                let e = params.get(ADJ_E1).map(|p| p.value.shape().to_vec()).unwrap_or_default();
                if e.len() != 2 || e[0] != n || e[1] == 0 {
                    return Err(ModelError::Config(format!("adaptive embeddings {e:?} do not fit {n} nodes")));
                }
                expected.push((ADJ_E1.into(), e.clone()));
                expected.push((ADJ_E2.into(), e));
            }
            _ => {}
        }
        for (name, shape) in &expected {
            match params.get(name) {
                Some(p) if p.value.shape() == shape.as_slice() => {}
                Some(p) => {
                    return Err(ModelError::Config(format!(
                        "parameter {name} has shape {:?}, expected {shape:?}",
                        p.value.shape()
                    )))
                }
                None => return Err(ModelError::Config(format!("missing parameter {name}"))),
            }
        }
        if params.len() != expected.len() {
            let extra = params.names().find(|n| !expected.iter().any(|(e, _)| e == *n));
            return Err(ModelError::Config(format!("unexpected parameter {}", extra.map_or("?", |s| s))));
        }
        let basis = if config.adjacency.kind.is_trainable() {
            None
        } else {
            Some(chebyshev_basis(&adjacency, config.cheb_order)?)
        };
        Ok(Self {
            config,
            params,
            adjacency,
            basis,
        })
    }

    /// The stored adjacency: fixed matrix or adaptive starting point.
    pub fn base_adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub fn fixed_basis(&self) -> Option<&ChebyshevBasis> {
        self.basis.as_ref()
    }

    /// The adjacency currently in effect (adaptive ones from their weights).
    pub fn current_adjacency(&self) -> Result<Tensor> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let w = self.adjacency_var(&tape, &bound)?;
        let value = w.value().clone();
        Ok(value)
    }

    fn adjacency_var<'t>(&self, tape: &'t Tape, bound: &BoundParams<'t>) -> Result<Var<'t>> {
        Ok(match self.config.adjacency.kind {
            AdjacencyKind::Diaam => bound.get(ADJ_WEIGHT)?,
            AdjacencyKind::Eaam => eaam(bound.get(ADJ_E1)?, bound.get(ADJ_E2)?)?,
            _ => tape.constant(self.adjacency.clone()),
        })
    }

    /// Chebyshev terms for this forward pass. Adaptive adjacencies are
    /// rebuilt on the tape with `λ_max = 2` so gradients reach them.
    pub fn chebyshev_terms<'t>(&self, tape: &'t Tape, bound: &BoundParams<'t>) -> Result<Vec<Var<'t>>> {
        if let Some(b) = &self.basis {
            return Ok(b.bind(tape));
        }
        let w = self.adjacency_var(tape, bound)?;
        let lap = normalized_laplacian(w)?;
        Ok(chebyshev_terms(lap, LAMBDA_MAX_BOUND, self.config.cheb_order)?)
    }

    fn check_input(&self, x: Var<'_>) -> Result<()> {
        let s = x.shape();
        let c = &self.config;
        if s.len() != 4 || s[1] != c.input_len || s[2] != c.num_nodes || s[3] != c.input_dim {
            return Err(ModelError::Shape(format!(
                "input {s:?} does not match B×{}×{}×{}",
                c.input_len, c.num_nodes, c.input_dim
            )));
        }
        Ok(())
    }

    fn head<'t>(&self, bound: &BoundParams<'t>, h: Var<'t>) -> Result<Var<'t>> {
        let c = &self.config;
        let t_rem = h.shape()[1];
        let h = super::layers::tgc_forward(h, &TgcParams::bind(bound, "head.tgc")?, t_rem)?;
        let y = h.matmul(bound.get("head.fc.w")?)?.add(bound.get("head.fc.b")?)?;
        let b = y.shape()[0];
        let y = y.reshape(vec![b, c.num_nodes, c.output_len, c.output_dim])?;
        Ok(y.permute(&[0, 2, 1, 3])?)
    }

    /// `B×m×N×d → B×n×N×c`, also returning each block's tape variables.
    pub fn forward_detailed<'t>(
        &self,
        tape: &'t Tape,
        bound: &BoundParams<'t>,
        x: Var<'t>,
    ) -> Result<(Var<'t>, Vec<super::layers::BlockVars<'t>>)> {
        self.check_input(x)?;
        let terms = self.chebyshev_terms(tape, bound)?;
        let mut h = x;
        let mut blocks = Vec::with_capacity(self.config.blocks);
        for blk in 0..self.config.blocks {
            let p = BlockParams::bind(bound, &format!("block{blk}"))?;
            let out = stconv_block_forward(h, &terms, &p, self.config.temporal_kernel, self.config.attention)?;
            h = out.output;
            blocks.push(out);
        }
        Ok((self.head(bound, h)?, blocks))
    }

    pub fn forward<'t>(&self, tape: &'t Tape, bound: &BoundParams<'t>, x: Var<'t>) -> Result<Var<'t>> {
        Ok(self.forward_detailed(tape, bound, x)?.0)
    }

    /// Forward pass through attention-free blocks only. Valid for models
    /// built with attention off.
    pub fn forward_plain<'t>(&self, tape: &'t Tape, bound: &BoundParams<'t>, x: Var<'t>) -> Result<Var<'t>> {
        if self.config.attention {
            return Err(ModelError::Config("plain forward needs attention off".into()));
        }
        self.check_input(x)?;
        let terms = self.chebyshev_terms(tape, bound)?;
        let mut h = x;
        for blk in 0..self.config.blocks {
            let p = BlockParams::bind(bound, &format!("block{blk}"))?;
            h = plain_block_forward(h, &terms, &p, self.config.temporal_kernel)?;
        }
        self.head(bound, h)
    }

    /// Inference without gradient tracking.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let y = self.forward(&tape, &bound, tape.constant(x.clone()))?;
        let value = y.value().clone();
        Ok(value)
    }

    /// Inference that also returns per-block activations.
    pub fn predict_with_activations(&self, x: &Tensor) -> Result<(Tensor, Vec<BlockActivations>)> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let (y, blocks) = self.forward_detailed(&tape, &bound, tape.constant(x.clone()))?;
        let acts = blocks.iter().map(|b| b.snapshot()).collect();
        let value = y.value().clone();
        Ok((value, acts))
    }
}
