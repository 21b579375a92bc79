//! Station graphs and the adjacency-matrix schemes compared by the study:
//! spatial (distance kernels), temporal (Pearson correlation),
//! spatio-temporal (demand embeddings) and adaptive (trained with the model).
//!
//! Fixed matrices are plain [`Tensor`]s. Adaptive matrices are rebuilt on
//! the tape every forward pass so gradients reach their parameters.

pub mod linalg;

use crate::tensor::{Tape, Tensor, TensorError, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("distance matrix is not a valid metric matrix: {0}")]
    InvalidDistance(String),
    #[error("need at least 2 stations, got {0}")]
    TooFewStations(usize),
    #[error("invalid station `{id}`: {msg}")]
    InvalidStation { id: String, msg: String },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("adjacency csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, GraphError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
}

/// Stations of one bike-sharing scheme; each is a graph node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationGraph {
    stations: Vec<Station>,
    /// Optional per-station history, `N×T`.
    series: Option<Tensor>,
}

impl StationGraph {
    pub fn new(stations: Vec<Station>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &stations {
            if !seen.insert(s.id.as_str()) {
                return Err(GraphError::InvalidStation {
                    id: s.id.clone(),
                    msg: "duplicate id".into(),
                });
            }
            if !(-90.0..=90.0).contains(&s.latitude) || !(-180.0..=180.0).contains(&s.longitude) {
                return Err(GraphError::InvalidStation {
                    id: s.id.clone(),
                    msg: format!("coordinates ({}, {}) out of range", s.latitude, s.longitude),
                });
            }
        }
        Ok(Self {
            stations,
            series: None,
        })
    }

    pub fn with_series(mut self, series: Tensor) -> Result<Self> {
        if series.rank() != 2 || series.shape()[0] != self.stations.len() {
            return Err(GraphError::InvalidArgument(format!(
                "series shape {:?} does not match {} stations",
                series.shape(),
                self.stations.len()
            )));
        }
        self.series = Some(series);
        Ok(self)
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn series(&self) -> Option<&Tensor> {
        self.series.as_ref()
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.stations.iter().map(|s| s.id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjacencyCategory {
    /// Spatial, distance based.
    Spatial,
    /// Temporal, correlation based.
    Temporal,
    /// Spatio-temporal node embeddings.
    SpatioTemporal,
    /// Trainable, initialized from a spatial matrix.
    AdaptiveDistanceInit,
    /// Trainable, generated from learned node embeddings.
    AdaptiveEmbedding,
}

impl AdjacencyCategory {
    /// Short label in the comparison-table convention (`S`, `T`, `ST`, `S + A`, `ST + A`).
    pub fn label(&self) -> &'static str {
        match self {
            Self::Spatial => "S",
            Self::Temporal => "T",
            Self::SpatioTemporal => "ST",
            Self::AdaptiveDistanceInit => "S + A",
            Self::AdaptiveEmbedding => "ST + A",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyMatrix {
    pub w: Tensor,
    pub category: AdjacencyCategory,
    pub trainable: bool,
    /// Source embeddings `(E1, E2)`, each `N×e`, for embedding-based matrices.
    pub embeddings: Option<(Tensor, Tensor)>,
}

impl AdjacencyMatrix {
    pub fn fixed(w: Tensor, category: AdjacencyCategory) -> Self {
        Self {
            w,
            category,
            trainable: false,
            embeddings: None,
        }
    }

    pub fn len(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| (0..i).all(|j| self.w.at(&[i, j]) == self.w.at(&[j, i])))
    }
}

/// How distances between stations are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceMetric {
    /// Euclidean distance on min-max normalized (latitude, longitude).
    NormalizedEuclidean,
    /// Haversine great-circle distance in kilometres.
    GreatCircleKm,
}

const EARTH_RADIUS_KM: f64 = 6371.0;

pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

pub fn distance_matrix(g: &StationGraph, metric: DistanceMetric) -> Result<Tensor> {
    let n = g.len();
    if n < 2 {
        return Err(GraphError::TooFewStations(n));
    }
    let st = g.stations();
    let coords: Vec<(f64, f64)> = match metric {
        DistanceMetric::GreatCircleKm => st.iter().map(|s| (s.latitude, s.longitude)).collect(),
        DistanceMetric::NormalizedEuclidean => {
            let norm = |vals: Vec<f64>| {
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                vals.into_iter()
                    .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
                    .collect::<Vec<_>>()
            };
            let lat = norm(st.iter().map(|s| s.latitude).collect());
            let lon = norm(st.iter().map(|s| s.longitude).collect());
            lat.into_iter().zip(lon).collect()
        }
    };
    let mut d = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (coords[i], coords[j]);
            let v = match metric {
                DistanceMetric::GreatCircleKm => haversine_km(a.0, a.1, b.0, b.1),
                DistanceMetric::NormalizedEuclidean => ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt(),
            };
            d.set(&[i, j], v);
            d.set(&[j, i], v);
        }
    }
    Ok(d)
}

fn square_matrix_len(t: &Tensor, what: &str) -> Result<usize> {
    match t.shape() {
        [r, c] if r == c => Ok(*r),
        s => Err(GraphError::InvalidArgument(format!("{what} must be square, got {s:?}"))),
    }
}

/// Thresholded Gaussian kernel `w_ij = exp(-d_ij² / sigma)`, zeroed below
/// `epsilon` and on the diagonal.
pub fn gaussian_kernel_adjacency(dist: &Tensor, sigma: f64, epsilon: f64) -> Result<AdjacencyMatrix> {
    let n = square_matrix_len(dist, "distance matrix")?;
    if !(sigma > 0.0) {
        return Err(GraphError::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(GraphError::InvalidArgument(format!("epsilon must lie in [0, 1), got {epsilon}")));
    }
    for i in 0..n {
        if dist.at(&[i, i]) != 0.0 {
            return Err(GraphError::InvalidDistance(format!("non-zero diagonal at {i}")));
        }
        for j in 0..n {
            let v = dist.at(&[i, j]);
            if !(v >= 0.0) || !v.is_finite() {
                return Err(GraphError::InvalidDistance(format!("entry ({i}, {j}) = {v}")));
            }
            if v != dist.at(&[j, i]) {
                return Err(GraphError::InvalidDistance(format!("asymmetric at ({i}, {j})")));
            }
        }
    }
    let w = Tensor::from_fn(vec![n, n], |k| {
        let (i, j) = (k / n, k % n);
        if i == j {
            return 0.0;
        }
        let d = dist.data()[k];
        let v = (-(d * d) / sigma).exp();
        if v >= epsilon {
            v
        } else {
            0.0
        }
    });
    Ok(AdjacencyMatrix::fixed(w, AdjacencyCategory::Spatial))
}

/// Full Pearson correlation matrix of the rows of `series` (`N×T`).
///
/// Stations with zero variance get an all-zero row and column (including
/// the diagonal); every other diagonal entry is exactly 1.
pub fn pearson_matrix(series: &Tensor) -> Result<Tensor> {
    let (n, t) = match series.shape() {
        [n, t] => (*n, *t),
        s => return Err(GraphError::InvalidArgument(format!("series must be N×T, got {s:?}"))),
    };
    if t < 2 {
        return Err(GraphError::InvalidArgument(format!("need at least 2 time steps, got {t}")));
    }
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row = &series.data()[i * t..(i + 1) * t];
            let mean = row.iter().sum::<f64>() / t as f64;
            row.iter().map(|x| x - mean).collect()
        })
        .collect();
    let ss: Vec<f64> = centered.iter().map(|r| r.iter().map(|x| x * x).sum()).collect();
    let valid: Vec<bool> = ss
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let ok = s > 0.0;
            if !ok {
                log::warn!("station row {i} has zero variance; its correlations are set to 0");
            }
            ok
        })
        .collect();
    let mut r = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        if !valid[i] {
            continue;
        }
        r.set(&[i, i], 1.0);
        for j in 0..i {
            if !valid[j] {
                continue;
            }
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let v = (dot / (ss[i] * ss[j]).sqrt()).clamp(-1.0, 1.0);
            r.set(&[i, j], v);
            r.set(&[j, i], v);
        }
    }
    Ok(r)
}

/// Correlation graph `w_ij = |r_ij|` where `|r_ij| >= threshold`, `i != j`.
pub fn pearson_adjacency(series: &Tensor, threshold: f64) -> Result<AdjacencyMatrix> {
    let r = pearson_matrix(series)?;
    let n = r.shape()[0];
    let w = Tensor::from_fn(vec![n, n], |k| {
        let v = r.data()[k].abs();
        if k / n != k % n && v >= threshold {
            v
        } else {
            0.0
        }
    });
    Ok(AdjacencyMatrix::fixed(w, AdjacencyCategory::Temporal))
}

/// Per-station embeddings from a truncated SVD of the row-centered demand
/// matrix (`N×T`): row `i` is `U_i,:k · S_k`.
///
/// Computed through the eigen-decomposition of the `N×N` Gram matrix. When
/// the centered matrix has rank below `dim`, the width is reduced to the rank.
pub fn demand_embeddings(demand: &Tensor, dim: usize) -> Result<Tensor> {
    let (n, t) = match demand.shape() {
        [n, t] => (*n, *t),
        s => return Err(GraphError::InvalidArgument(format!("demand must be N×T, got {s:?}"))),
    };
    if dim == 0 || dim > n.min(t) {
        return Err(GraphError::InvalidArgument(format!(
            "embedding width {dim} must lie in 1..={} for a {n}×{t} demand matrix",
            n.min(t)
        )));
    }
    let mut x = demand.data().to_vec();
    for row in x.chunks_mut(t) {
        let mean = row.iter().sum::<f64>() / t as f64;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    let xt = Tensor::from_parts(vec![n, t], x);
    let gram = xt.matmul(&xt.transpose()?)?;
    // symmetrize away rounding
    let gram = Tensor::from_fn(vec![n, n], |k| {
        let (i, j) = (k / n, k % n);
        0.5 * (gram.data()[i * n + j] + gram.data()[j * n + i])
    });
    let (vals, vecs) = linalg::symmetric_eigen(&gram);
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let rank = vals.iter().filter(|&&v| v > top * 1e-12 && v > 0.0).count();
    let k = if rank < dim {
        log::warn!("demand matrix has rank {rank} < embedding width {dim}; using {rank}");
        rank.max(1)
    } else {
        dim
    };
    Ok(Tensor::from_fn(vec![n, k], |idx| {
        let (i, c) = (idx / k, idx % k);
        vecs.at(&[i, c]) * vals[c].max(0.0).sqrt()
    }))
}

/// `w_ij = exp(-‖e_i - e_j‖² / sigma)` for `i != j` over embedding rows.
pub fn embedding_kernel(emb: &Tensor, sigma: f64) -> Result<Tensor> {
    if !(sigma > 0.0) {
        return Err(GraphError::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let (n, k) = (emb.shape()[0], emb.shape()[1]);
    let mut w = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in 0..i {
            let d2: f64 = (0..k).map(|c| (emb.at(&[i, c]) - emb.at(&[j, c])).powi(2)).sum();
            let v = (-d2 / sigma).exp();
            w.set(&[i, j], v);
            w.set(&[j, i], v);
        }
    }
    Ok(w)
}

/// Spatio-temporal embedding adjacency; returns the matrix and the
/// `N×k` embeddings it was built from.
pub fn st_embedding_adjacency(demand: &Tensor, feature_dim: usize, sigma: f64) -> Result<(AdjacencyMatrix, Tensor)> {
    let emb = demand_embeddings(demand, feature_dim)?;
    let w = embedding_kernel(&emb, sigma)?;
    Ok((AdjacencyMatrix::fixed(w, AdjacencyCategory::SpatioTemporal), emb))
}

/// Embedding-based adaptive adjacency `softmax_row(relu(E1·E2ᵀ))`, recorded
/// on the tape of `e1`/`e2`.
pub fn eaam<'t>(e1: Var<'t>, e2: Var<'t>) -> Result<Var<'t>> {
    let (s1, s2) = (e1.shape(), e2.shape());
    if s1.len() != 2 || s1 != s2 {
        return Err(TensorError::ShapeMismatch {
            op: "eaam",
            lhs: s1,
            rhs: s2,
        }
        .into());
    }
    Ok(e1.matmul(e2.t()?)?.relu().softmax(1)?)
}

/// Random `N×dim` embedding pair drawn i.i.d. from `normal(0, std)`.
pub fn eaam_init(n: usize, dim: usize, std: f64, rng: &mut impl Rng) -> (Tensor, Tensor) {
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut draw = || Tensor::from_fn(vec![n, dim], |_| normal.sample(rng));
    let e1 = draw();
    let e2 = draw();
    (e1, e2)
}

/// Value snapshot of an embedding-based adaptive adjacency.
pub fn eaam_matrix(e1: &Tensor, e2: &Tensor) -> Result<AdjacencyMatrix> {
    let tape = Tape::new();
    let w = eaam(tape.constant(e1.clone()), tape.constant(e2.clone()))?;
    let w = w.value().clone();
    Ok(AdjacencyMatrix {
        w,
        category: AdjacencyCategory::AdaptiveEmbedding,
        trainable: true,
        embeddings: Some((e1.clone(), e2.clone())),
    })
}

/// Trainable adjacency initialized from a spatial kernel matrix.
pub fn diaam(init: &AdjacencyMatrix) -> Result<AdjacencyMatrix> {
    if init.category != AdjacencyCategory::Spatial {
        return Err(GraphError::InvalidArgument(format!(
            "distance-initialized adaptive adjacency needs a spatial matrix, got {:?}",
            init.category
        )));
    }
    Ok(AdjacencyMatrix {
        w: init.w.clone(),
        category: AdjacencyCategory::AdaptiveDistanceInit,
        trainable: true,
        embeddings: None,
    })
}

/// Chebyshev polynomials `T_0..T_{K-1}` of the scaled graph Laplacian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevBasis {
    pub terms: Vec<Tensor>,
    pub lambda_max: f64,
}

impl ChebyshevBasis {
    pub fn order(&self) -> usize {
        self.terms.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.terms[0].shape()[0]
    }

    /// Records the terms on `tape` as constants.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.terms.iter().map(|t| tape.constant(t.clone())).collect()
    }
}

/// Largest Laplacian eigenvalue used when power iteration does not converge.
pub const LAMBDA_MAX_BOUND: f64 = 2.0;
/// Relative settling an estimate must reach to be used.
const POWER_TOL: f64 = 1e-8;
/// Settling the iteration aims for before stopping early.
const POWER_TARGET: f64 = 1e-15;
const POWER_MAX_ITER: usize = 1000;
const POWER_BLOCK: usize = 6;

/// `L = I - D^{-1/2} W D^{-1/2}` with degrees from row sums; isolated nodes
/// get `D^{-1/2} = 0`, so their Laplacian row is the identity row.
pub fn normalized_laplacian<'t>(w: Var<'t>) -> Result<Var<'t>> {
    let shape = w.shape();
    let n = match shape.as_slice() {
        [r, c] if r == c => *r,
        _ => return Err(GraphError::InvalidArgument(format!("adjacency must be square, got {shape:?}"))),
    };
    let tape = w.tape();
    let d = w.sum_axes(&[1])?.inv_sqrt_or_zero();
    let norm = d.mul(w)?.mul(d.reshape(vec![1, n])?)?;
    Ok(tape.constant(Tensor::eye(n)).sub(norm)?)
}

/// Chebyshev terms over a Laplacian already on the tape:
/// `L̃ = 2L/λ_max - I`, `T_0 = I`, `T_1 = L̃`, `T_k = 2·L̃·T_{k-1} - T_{k-2}`.
pub fn chebyshev_terms<'t>(laplacian: Var<'t>, lambda_max: f64, order: usize) -> Result<Vec<Var<'t>>> {
    if order < 1 {
        return Err(GraphError::InvalidArgument("Chebyshev order must be at least 1".into()));
    }
    let n = laplacian.shape()[0];
    let tape = laplacian.tape();
    let eye = tape.constant(Tensor::eye(n));
    let mut terms = vec![eye];
    if order == 1 {
        return Ok(terms);
    }
    let scaled = laplacian.scale(2.0 / lambda_max).sub(eye)?;
    terms.push(scaled);
    for k in 2..order {
        let next = scaled.matmul(terms[k - 1])?.scale(2.0).sub(terms[k - 2])?;
        terms.push(next);
    }
    Ok(terms)
}

/// Largest eigenvalue of a (symmetric) Laplacian by block power iteration,
/// or [`LAMBDA_MAX_BOUND`] when the iteration fails to settle.
///
/// The start block is drawn from a fixed-seed generator: a single
/// structured start vector can be exactly orthogonal to the top eigenvector
/// (the 4-cycle is one such case), and a block also absorbs near-equal
/// top eigenvalues that would stall a single vector.
pub fn lambda_max(laplacian: &Tensor) -> f64 {
    let n = laplacian.shape()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let start: Vec<Vec<f64>> = (0..n.min(POWER_BLOCK))
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    match linalg::block_power_iteration(laplacian, &start, POWER_TARGET, POWER_MAX_ITER) {
        Some(e) if e.rel_change <= POWER_TOL && e.value > 1e-12 => e.value,
        _ => {
            log::warn!("power iteration did not converge; using lambda_max = {LAMBDA_MAX_BOUND}");
            LAMBDA_MAX_BOUND
        }
    }
}

/// Chebyshev basis of a fixed adjacency matrix.
pub fn chebyshev_basis(w: &Tensor, order: usize) -> Result<ChebyshevBasis> {
    if order < 1 {
        return Err(GraphError::InvalidArgument("Chebyshev order must be at least 1".into()));
    }
    square_matrix_len(w, "adjacency")?;
    if w.data().iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(GraphError::InvalidArgument("adjacency entries must be finite and non-negative".into()));
    }
    let tape = Tape::new();
    let lap = normalized_laplacian(tape.constant(w.clone()))?;
    let lambda = lambda_max(&lap.value());
    let terms = chebyshev_terms(lap, lambda, order)?
        .into_iter()
        .map(|v| v.value().clone())
        .collect();
    Ok(ChebyshevBasis {
        terms,
        lambda_max: lambda,
    })
}

/// Adjacency schemes available to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyKind {
    Euclidean,
    Geographic,
    Pearson,
    StEmbedding,
    Diaam,
    Eaam,
}

impl AdjacencyKind {
    pub const ALL: [AdjacencyKind; 6] = [
        Self::Euclidean,
        Self::Geographic,
        Self::Pearson,
        Self::StEmbedding,
        Self::Diaam,
        Self::Eaam,
    ];

    pub fn category(&self) -> AdjacencyCategory {
        match self {
            Self::Euclidean | Self::Geographic => AdjacencyCategory::Spatial,
            Self::Pearson => AdjacencyCategory::Temporal,
            Self::StEmbedding => AdjacencyCategory::SpatioTemporal,
            Self::Diaam => AdjacencyCategory::AdaptiveDistanceInit,
            Self::Eaam => AdjacencyCategory::AdaptiveEmbedding,
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, Self::Diaam | Self::Eaam)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Euclidean => "euclidean",
            Self::Geographic => "geographic",
            Self::Pearson => "pearson",
            Self::StEmbedding => "st_embedding",
            Self::Diaam => "diaam",
            Self::Eaam => "eaam",
        }
    }

    /// Human-readable name for report tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            Self::Euclidean => "Euclidean distance",
            Self::Geographic => "Geographical distance",
            Self::Pearson => "Temporal correlation",
            Self::StEmbedding => "ST embedding",
            Self::Diaam => "DIAAM",
            Self::Eaam => "EAAM",
        }
    }
}

impl fmt::Display for AdjacencyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdjacencyKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GraphError::InvalidArgument(format!("unknown adjacency kind `{s}`")))
    }
}

/// Hyperparameters of the adjacency builders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjacencyParams {
    pub kernel_sigma: f64,
    pub kernel_epsilon: f64,
    pub pearson_threshold: f64,
    pub st_feature_dim: usize,
    pub st_sigma: f64,
    pub embedding_dim: usize,
    pub embedding_init_std: f64,
}

impl Default for AdjacencyParams {
    fn default() -> Self {
        Self {
            kernel_sigma: 0.2,
            kernel_epsilon: 0.368,
            pearson_threshold: 0.05,
            st_feature_dim: 20,
            st_sigma: 1.0,
            embedding_dim: 10,
            embedding_init_std: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencySpec {
    pub kind: AdjacencyKind,
    #[serde(default)]
    pub params: AdjacencyParams,
}

impl AdjacencySpec {
    pub fn new(kind: AdjacencyKind) -> Self {
        Self {
            kind,
            params: AdjacencyParams::default(),
        }
    }
}

/// Builds the adjacency for `spec`. Correlation and embedding schemes read
/// the training-split history attached to `graph`. For EAAM the returned
/// matrix holds freshly drawn embeddings.
pub fn build_adjacency(spec: &AdjacencySpec, graph: &StationGraph, rng: &mut impl Rng) -> Result<AdjacencyMatrix> {
    let p = &spec.params;
    let series = || {
        graph
            .series()
            .ok_or_else(|| GraphError::InvalidArgument(format!("{} adjacency needs station history", spec.kind)))
    };
    match spec.kind {
        AdjacencyKind::Euclidean => {
            let d = distance_matrix(graph, DistanceMetric::NormalizedEuclidean)?;
            gaussian_kernel_adjacency(&d, p.kernel_sigma, p.kernel_epsilon)
        }
        AdjacencyKind::Geographic => {
            let d = distance_matrix(graph, DistanceMetric::GreatCircleKm)?;
            gaussian_kernel_adjacency(&d, p.kernel_sigma, p.kernel_epsilon)
        }
        AdjacencyKind::Pearson => pearson_adjacency(series()?, p.pearson_threshold),
        AdjacencyKind::StEmbedding => {
            let s = series()?;
            let dim = p.st_feature_dim.min(s.shape()[0]).min(s.shape()[1]);
            if dim < p.st_feature_dim {
                log::warn!("st embedding width {} exceeds matrix size; using {dim}", p.st_feature_dim);
            }
            Ok(st_embedding_adjacency(s, dim, p.st_sigma)?.0)
        }
        AdjacencyKind::Diaam => {
            let d = distance_matrix(graph, DistanceMetric::NormalizedEuclidean)?;
            diaam(&gaussian_kernel_adjacency(&d, p.kernel_sigma, p.kernel_epsilon)?)
        }
        AdjacencyKind::Eaam => {
            let (e1, e2) = eaam_init(graph.len(), p.embedding_dim, p.embedding_init_std, rng);
            eaam_matrix(&e1, &e2)
        }
    }
}

/// Writes `w` as CSV: a header of station ids, then one row per station.
pub fn write_adjacency_csv(w: &Tensor, ids: &[String], out: impl Write) -> Result<()> {
    let n = square_matrix_len(w, "adjacency")?;
    if ids.len() != n {
        return Err(GraphError::Csv(format!("{} ids for a {n}×{n} matrix", ids.len())));
    }
    let mut wr = csv::Writer::from_writer(out);
    let err = |e: csv::Error| GraphError::Csv(e.to_string());
    wr.write_record(ids).map_err(err)?;
    for i in 0..n {
        wr.write_record((0..n).map(|j| w.at(&[i, j]).to_string())).map_err(err)?;
    }
    wr.flush().map_err(|e| GraphError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_adjacency_csv(input: impl Read) -> Result<(Vec<String>, Tensor)> {
    let mut rd = csv::Reader::from_reader(input);
    let err = |e: csv::Error| GraphError::Csv(e.to_string());
    let ids: Vec<String> = rd.headers().map_err(err)?.iter().map(str::to_string).collect();
    let n = ids.len();
    let mut data = Vec::with_capacity(n * n);
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(err)?;
        if rec.len() != n {
            return Err(GraphError::Csv(format!("row {} has {} fields, expected {n}", row + 1, rec.len())));
        }
        for field in rec.iter() {
            data.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| GraphError::Csv(format!("row {}: `{field}`: {e}", row + 1)))?,
            );
        }
    }
    if data.len() != n * n {
        return Err(GraphError::Csv(format!("expected {n} data rows, got {}", data.len() / n.max(1))));
    }
    Ok((ids, Tensor::new(vec![n, n], data)?))
}
