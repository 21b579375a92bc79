//! Shared test oracles: finite differences and dense brute-force graph algebra.
#![allow(dead_code)]

use bikecast::model::StgcnModel;
use bikecast::tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: Vec<usize>, scale: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| scale * rng.random_range(-1.0..1.0))
}

/// Largest relative error seen by a finite-difference sweep.
#[derive(Debug, Default, Clone)]
pub struct FdStats {
    pub checked: usize,
    /// Coordinates whose ±h interval crosses a ReLU kink.
    pub skipped: usize,
    pub max_rel: f64,
    pub worst: String,
}

impl FdStats {
    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        self.checked += 1;
        let rel = rel_err(analytic, numeric);
        if rel >= self.max_rel {
            self.max_rel = rel;
            self.worst = format!("{} analytic {analytic:.6e} numeric {numeric:.6e}", label());
        }
    }

    pub fn merge(&mut self, other: FdStats) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        if other.max_rel >= self.max_rel {
            self.max_rel = other.max_rel;
            self.worst = other.worst;
        }
    }
}

/// `|a - n| / max(|a|, |n|)`, zero when both are exactly equal.
pub fn rel_err(a: f64, n: f64) -> f64 {
    if a == n {
        return 0.0;
    }
    (a - n).abs() / a.abs().max(n.abs())
}

/// Central-difference check of `f` (any output shape, contracted with a
/// fixed random tensor) against reverse-mode gradients of every input.
///
/// `pattern` reports the ReLU activity of a forward pass; coordinates
/// whose perturbation changes it are skipped because the function is not
/// differentiable across that interval.
pub fn fd_check<F, P>(inputs: &[Tensor], h: f64, seed: u64, f: F, pattern: P) -> FdStats
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
    P: Fn(&[Tensor]) -> Vec<bool>,
{
    let probe = {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let shape = f(&tape, &vars).shape();
        shape
    };
    let r = uniform(probe, 1.0, &mut rng(seed));
    let loss = |xs: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        let y = f(&tape, &vars);
        let v = y.mul(tape.constant(r.clone())).expect("loss shape").sum().value().item().unwrap();
        v
    };
    let grads: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.var(t.clone())).collect();
        let y = f(&tape, &vars);
        let l = y.mul(tape.constant(r.clone())).expect("loss shape").sum();
        let g = l.backward().expect("backward");
        vars.iter().map(|&v| g.get(v)).collect()
    };
    let mut stats = FdStats::default();
    let mut work = inputs.to_vec();
    for (i, g) in grads.iter().enumerate() {
        for k in 0..inputs[i].len() {
            let x0 = inputs[i].data()[k];
            work[i].data_mut()[k] = x0 + h;
            let (fp, pp) = (loss(&work), pattern(&work));
            work[i].data_mut()[k] = x0 - h;
            let (fm, pm) = (loss(&work), pattern(&work));
            work[i].data_mut()[k] = x0;
            if pp != pm {
                stats.skipped += 1;
                continue;
            }
            stats.record(|| format!("input {i}[{k}]"), g.data()[k], (fp - fm) / (2.0 * h));
        }
    }
    stats
}

pub fn no_kinks(_: &[Tensor]) -> Vec<bool> {
    Vec::new()
}

/// Which ReLUs of a model are active for input `x`: SGC outputs, attention
/// gates (exactly 0.5 when their ReLU is off) and, for embedding
/// adjacencies, the entries of `E1·E2ᵀ`.
pub fn model_pattern(model: &StgcnModel, x: &Tensor) -> Vec<bool> {
    let (_, acts) = model.predict_with_activations(x).expect("forward");
    let mut p = Vec::new();
    for a in &acts {
        p.extend(a.xs.data().iter().map(|&v| v > 0.0));
        if let Some(att) = &a.attention {
            p.extend(att.data().iter().map(|&v| v != 0.5));
        }
    }
    if let (Some(e1), Some(e2)) = (model.params.get("adj.e1"), model.params.get("adj.e2")) {
        let prod = e1.value.matmul(&e2.value.transpose().unwrap()).unwrap();
        p.extend(prod.data().iter().map(|&v| v > 0.0));
    }
    p
}

/// End-to-end check of every parameter of `model` under the contraction
/// `sum(y ⊙ R)`.
pub fn fd_model(model: &StgcnModel, x: &Tensor, h: f64, seed: u64) -> FdStats {
    let probe = model.predict(x).expect("forward");
    let r = uniform(probe.shape().to_vec(), 1.0, &mut rng(seed));
    let loss = |m: &StgcnModel| -> f64 {
        let y = m.predict(x).expect("forward");
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    let mut analytic = model.clone();
    {
        let tape = Tape::new();
        let bound = analytic.params.bind(&tape, true);
        let y = analytic.forward(&tape, &bound, tape.constant(x.clone())).expect("forward");
        let l = y.mul(tape.constant(r.clone())).expect("loss").sum();
        let g = l.backward().expect("backward");
        analytic.params.load_grads(&bound, &g);
    }
    let mut stats = FdStats::default();
    let mut work = model.clone();
    let names: Vec<String> = model.params.names().cloned().collect();
    for name in &names {
        let grad = analytic.params.get(name).unwrap().grad.clone().expect("gradient reached parameter");
        for k in 0..grad.len() {
            let x0 = model.params.get(name).unwrap().value.data()[k];
            let set = |w: &mut StgcnModel, v: f64| w.params.get_mut(name).unwrap().value.data_mut()[k] = v;
            set(&mut work, x0 + h);
            let (fp, pp) = (loss(&work), model_pattern(&work, x));
            set(&mut work, x0 - h);
            let (fm, pm) = (loss(&work), model_pattern(&work, x));
            set(&mut work, x0);
            if pp != pm {
                stats.skipped += 1;
                continue;
            }
            stats.record(|| format!("{name}[{k}]"), grad.data()[k], (fp - fm) / (2.0 * h));
        }
    }
    stats
}

/// Dense row-major helpers on `Vec<f64>` for oracles that must not share
/// code with the library.
pub mod dense {
    pub fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    c[i * n + j] += a[i * n + k] * b[k * n + j];
                }
            }
        }
        c
    }

    pub fn eye(n: usize) -> Vec<f64> {
        (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect()
    }

    /// `I - D^{-1/2} W D^{-1/2}`, isolated nodes keeping an identity row.
    pub fn laplacian(w: &[f64], n: usize) -> Vec<f64> {
        let deg: Vec<f64> = (0..n).map(|i| w[i * n..(i + 1) * n].iter().sum()).collect();
        let s: Vec<f64> = deg.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
        (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                let id = if i == j { 1.0 } else { 0.0 };
                id - s[i] * w[k] * s[j]
            })
            .collect()
    }

    /// Largest eigenvalue of a symmetric matrix by full decomposition.
    pub fn lambda_max(m: &[f64], n: usize) -> f64 {
        let mat = nalgebra::DMatrix::from_row_slice(n, n, m);
        mat.symmetric_eigen().eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `T_0..T_{K-1}` of `2L/λ - I`.
    pub fn chebyshev(lap: &[f64], lambda: f64, n: usize, order: usize) -> Vec<Vec<f64>> {
        let id = eye(n);
        let scaled: Vec<f64> = lap.iter().zip(&id).map(|(l, e)| 2.0 * l / lambda - e).collect();
        let mut t = vec![id];
        if order > 1 {
            t.push(scaled.clone());
        }
        while t.len() < order {
            let k = t.len();
            let prod = matmul(&scaled, &t[k - 1], n);
            t.push(prod.iter().zip(&t[k - 2]).map(|(p, q)| 2.0 * p - q).collect());
        }
        t
    }
}

/// Pins a closure to the higher-ranked signature `fd_check` expects.
pub fn on_tape<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    f
}
