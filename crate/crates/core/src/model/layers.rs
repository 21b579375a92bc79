//! Building blocks on the tape. Activations are `B×T×N×C` (batch, time,
//! node, channel).

use super::{ModelError, Result};
use crate::tensor::{BoundParams, Tensor, Var};

fn dims4(x: Var<'_>, what: &str) -> Result<[usize; 4]> {
    let s = x.shape();
    <[usize; 4]>::try_from(s.as_slice())
        .map_err(|_| ModelError::Shape(format!("{what} expects a B×T×N×C input, got {s:?}")))
}

/// Weights of one temporal gated convolution.
#[derive(Clone, Copy)]
pub struct TgcParams<'t> {
    /// `[Kt·C_in, 2·C_out]`; row `j·C_in + i` holds time offset `j`, input
    /// channel `i`. Output columns `[0, C_out)` are the linear branch P,
    /// `[C_out, 2·C_out)` the gate branch Q.
    pub w: Var<'t>,
    pub b: Var<'t>,
    /// `[C_in, C_out]`, only when `C_in > C_out`.
    pub proj: Option<Var<'t>>,
}

impl<'t> TgcParams<'t> {
    pub fn bind(p: &BoundParams<'t>, prefix: &str) -> Result<Self> {
        Ok(Self {
            w: p.get(&format!("{prefix}.w"))?,
            b: p.get(&format!("{prefix}.b"))?,
            proj: p.get(&format!("{prefix}.proj")).ok(),
        })
    }
}

/// Temporal gated convolution: a valid 1-D convolution along time with
/// kernel `kt`, split into `(P, Q)` and combined as
/// `(P + residual) ⊙ sigmoid(Q)`.
///
/// The residual is the input cropped to its last `T - kt + 1` steps,
/// zero-padded when `C_in < C_out` and projected when `C_in > C_out`.
pub fn tgc_forward<'t>(x: Var<'t>, p: &TgcParams<'t>, kt: usize) -> Result<Var<'t>> {
    let [b, t, n, cin] = dims4(x, "temporal convolution")?;
    if kt == 0 || t < kt {
        return Err(ModelError::Shape(format!("temporal kernel {kt} longer than input length {t}")));
    }
    let wshape = p.w.shape();
    if wshape.len() != 2 || wshape[0] != kt * cin || wshape[1] % 2 != 0 {
        return Err(ModelError::Shape(format!(
            "temporal weights {wshape:?} do not fit kernel {kt} over {cin} channels"
        )));
    }
    let cout = wshape[1] / 2;
    let t_out = t - kt + 1;
    let unfolded = if kt == 1 {
        x
    } else {
        let taps = (0..kt).map(|j| x.slice(1, j, t_out)).collect::<std::result::Result<Vec<_>, _>>()?;
        Var::concat(&taps, 3)?
    };
    let conv = unfolded.matmul(p.w)?.add(p.b)?;
    let lin = conv.slice(3, 0, cout)?;
    let gate = conv.slice(3, cout, cout)?.sigmoid();
    let crop = x.slice(1, kt - 1, t_out)?;
    let residual = if cin == cout {
        crop
    } else if cin < cout {
        let pad = x.tape().constant(Tensor::zeros(vec![b, t_out, n, cout - cin]));
        Var::concat(&[crop, pad], 3)?
    } else {
        let proj = p
            .proj
            .ok_or_else(|| ModelError::Shape(format!("{cin} -> {cout} channels needs a residual projection")))?;
        crop.matmul(proj)?
    };
    Ok(lin.add(residual)?.mul(gate)?)
}

/// Spatial graph convolution `relu(Σ_k T_k · X · θ_k + b)` at every time
/// step, with `theta` stacked as `[Ks·C_in, C_out]` (row `k·C_in + i`).
pub fn sgc_forward<'t>(x: Var<'t>, terms: &[Var<'t>], theta: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
    let [_, _, n, cin] = dims4(x, "graph convolution")?;
    let ks = terms.len();
    if ks == 0 {
        return Err(ModelError::Shape("graph convolution needs at least one Chebyshev term".into()));
    }
    for t in terms {
        if t.shape() != [n, n] {
            return Err(ModelError::Shape(format!(
                "Chebyshev term {:?} does not match {n} nodes",
                t.shape()
            )));
        }
    }
    if theta.shape().first() != Some(&(ks * cin)) {
        return Err(ModelError::Shape(format!(
            "graph weights {:?} do not fit {ks} terms over {cin} channels",
            theta.shape()
        )));
    }
    // T_0 is the identity, so its product is the input itself
    let mut props = vec![x];
    for t in &terms[1..] {
        props.push(t.matmul(x)?);
    }
    let stacked = if ks == 1 { x } else { Var::concat(&props, 3)? };
    Ok(stacked.matmul(theta)?.add(bias)?.relu())
}

/// Temporal attention `sigmoid(relu(mean_c(crop(x1)) + mean_c(x2)))`,
/// `B×T2×N×1`, with `x1` cropped to the last `T2` steps.
pub fn tam_forward<'t>(x1: Var<'t>, x2: Var<'t>) -> Result<Var<'t>> {
    let [b1, t1, n1, _] = dims4(x1, "attention")?;
    let [b2, t2, n2, _] = dims4(x2, "attention")?;
    if b1 != b2 || n1 != n2 || t2 > t1 {
        return Err(ModelError::Shape(format!(
            "attention inputs {:?} and {:?} are not aligned",
            x1.shape(),
            x2.shape()
        )));
    }
    let a1 = x1.slice(1, t1 - t2, t2)?.mean_axes(&[3])?;
    let a2 = x2.mean_axes(&[3])?;
    Ok(a1.add(a2)?.relu().sigmoid())
}

/// Intermediate tensors of one ST-Conv block.
#[derive(Debug, Clone)]
pub struct BlockActivations {
    pub x1: Tensor,
    pub xs: Tensor,
    pub x2: Tensor,
    pub attention: Option<Tensor>,
}

/// Parameters of one ST-Conv block.
pub struct BlockParams<'t> {
    pub tgc1: TgcParams<'t>,
    pub theta: Var<'t>,
    pub sgc_bias: Var<'t>,
    pub tgc2: TgcParams<'t>,
}

impl<'t> BlockParams<'t> {
    pub fn bind(p: &BoundParams<'t>, prefix: &str) -> Result<Self> {
        Ok(Self {
            tgc1: TgcParams::bind(p, &format!("{prefix}.tgc1"))?,
            theta: p.get(&format!("{prefix}.sgc.theta"))?,
            sgc_bias: p.get(&format!("{prefix}.sgc.b"))?,
            tgc2: TgcParams::bind(p, &format!("{prefix}.tgc2"))?,
        })
    }
}

/// Block outputs on the tape.
pub struct BlockVars<'t> {
    pub x1: Var<'t>,
    pub xs: Var<'t>,
    pub x2: Var<'t>,
    pub attention: Option<Var<'t>>,
    pub output: Var<'t>,
}

impl BlockVars<'_> {
    pub fn snapshot(&self) -> BlockActivations {
        BlockActivations {
            x1: self.x1.value().clone(),
            xs: self.xs.value().clone(),
            x2: self.x2.value().clone(),
            attention: self.attention.map(|a| a.value().clone()),
        }
    }
}

/// TGC → SGC → TGC. With attention on, the output is
/// `concat_c(x2, att ⊙ crop(x1))`; otherwise it is `x2`.
pub fn stconv_block_forward<'t>(
    x: Var<'t>,
    terms: &[Var<'t>],
    p: &BlockParams<'t>,
    kt: usize,
    attention: bool,
) -> Result<BlockVars<'t>> {
    let x1 = tgc_forward(x, &p.tgc1, kt)?;
    let xs = sgc_forward(x1, terms, p.theta, p.sgc_bias)?;
    let x2 = tgc_forward(xs, &p.tgc2, kt)?;
    if !attention {
        return Ok(BlockVars {
            x1,
            xs,
            x2,
            attention: None,
            output: x2,
        });
    }
    let att = tam_forward(x1, x2)?;
    let (t1, t2) = (x1.shape()[1], x2.shape()[1]);
    let attended = att.mul(x1.slice(1, t1 - t2, t2)?)?;
    let output = Var::concat(&[x2, attended], 3)?;
    Ok(BlockVars {
        x1,
        xs,
        x2,
        attention: Some(att),
        output,
    })
}

/// The block without any attention code path, as in plain ST-GCN.
pub fn plain_block_forward<'t>(x: Var<'t>, terms: &[Var<'t>], p: &BlockParams<'t>, kt: usize) -> Result<Var<'t>> {
    let h = tgc_forward(x, &p.tgc1, kt)?;
    let h = sgc_forward(h, terms, p.theta, p.sgc_bias)?;
    tgc_forward(h, &p.tgc2, kt)
}
