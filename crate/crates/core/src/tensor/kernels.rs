//! Raw array kernels shared by [`Tensor`] methods and tape primitives.

use super::{Result, Tensor, TensorError};
use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2, ShapeBuilder};

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Splits `shape` around `axis` into (outer, extent, inner) block sizes.
pub(crate) fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(TensorError::InvalidAxis {
            axis,
            rank: shape.len(),
        });
    }
    Ok(())
}

/// Walks `shape` in row-major order, reporting the linear output index and
/// the offset into a source laid out with `strides` (zero strides broadcast).
fn strided_walk(shape: &[usize], strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let rank = shape.len();
    if rank == 0 {
        f(0, 0);
        return;
    }
    let last = shape[rank - 1];
    let last_stride = strides[rank - 1];
    let outer: usize = shape[..rank - 1].iter().product();
    let mut idx = vec![0usize; rank - 1];
    let mut base = 0usize;
    let mut out = 0usize;
    for _ in 0..outer {
        let mut off = base;
        for _ in 0..last {
            f(out, off);
            out += 1;
            off += last_stride;
        }
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            base += strides[d];
            if idx[d] < shape[d] {
                break;
            }
            base -= strides[d] * shape[d];
            idx[d] = 0;
        }
    }
}

/// Strides of `shape` viewed inside a broadcast target of rank `rank`.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let pad = out_shape.len() - shape.len();
    let own = row_major_strides(shape);
    (0..out_shape.len())
        .map(|i| {
            if i < pad || shape[i - pad] == 1 {
                0
            } else {
                own[i - pad]
            }
        })
        .collect()
}

pub(crate) fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op,
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

pub(crate) fn broadcast_binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape == b.shape {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor::from_parts(a.shape.clone(), data));
    }
    let out_shape = broadcast_shape(op, &a.shape, &b.shape)?;
    let n: usize = out_shape.iter().product();
    let mut data = vec![0.0; n];
    let sa = broadcast_strides(&a.shape, &out_shape);
    let sb = broadcast_strides(&b.shape, &out_shape);
    let mut a_offsets = Vec::with_capacity(n);
    strided_walk(&out_shape, &sa, |_, off| a_offsets.push(off));
    strided_walk(&out_shape, &sb, |i, off| {
        data[i] = f(a.data[a_offsets[i]], b.data[off]);
    });
    Ok(Tensor::from_parts(out_shape, data))
}

/// Repeats `t` along broadcast dimensions to fill `shape`.
pub(crate) fn broadcast_to(t: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let out = broadcast_shape("broadcast_to", &t.shape, shape)?;
    if out != shape {
        return Err(TensorError::ShapeMismatch {
            op: "broadcast_to",
            lhs: t.shape.clone(),
            rhs: shape.to_vec(),
        });
    }
    if t.shape == shape {
        return Ok(t.clone());
    }
    let strides = broadcast_strides(&t.shape, shape);
    let mut data = vec![0.0; shape.iter().product()];
    strided_walk(shape, &strides, |i, off| data[i] = t.data[off]);
    Ok(Tensor::from_parts(shape.to_vec(), data))
}

/// Sums `t` down to `target`, the inverse of broadcasting `target` to `t`.
pub(crate) fn reduce_to_shape(t: &Tensor, target: &[usize]) -> Tensor {
    if t.shape == target {
        return t.clone();
    }
    let strides = broadcast_strides(target, &t.shape);
    let mut data = vec![0.0; target.iter().product()];
    strided_walk(&t.shape, &strides, |i, off| data[off] += t.data[i]);
    Tensor::from_parts(target.to_vec(), data)
}

/// Sum over `axes`, keeping reduced axes with extent 1.
pub(crate) fn sum_axes(t: &Tensor, axes: &[usize]) -> Result<Tensor> {
    let mut target = t.shape.clone();
    for &ax in axes {
        check_axis(&t.shape, ax)?;
        target[ax] = 1;
    }
    Ok(reduce_to_shape(t, &target))
}

pub(crate) fn slice_axis(t: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    check_axis(&t.shape, axis)?;
    let (outer, dim, inner) = split_at_axis(&t.shape, axis);
    if len == 0 || start + len > dim {
        return Err(TensorError::Invalid {
            op: "slice",
            msg: format!(
                "range {start}..{} outside extent {dim} of axis {axis} in {:?}",
                start + len,
                t.shape
            ),
        });
    }
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * dim + start) * inner;
        data.extend_from_slice(&t.data[base..base + len * inner]);
    }
    let mut shape = t.shape.clone();
    shape[axis] = len;
    Ok(Tensor::from_parts(shape, data))
}

/// Embeds `t` into zeros of `full_shape` at `start` along `axis`.
pub(crate) fn pad_axis(t: &Tensor, full_shape: &[usize], axis: usize, start: usize) -> Tensor {
    let (outer, dim, inner) = split_at_axis(full_shape, axis);
    let len = t.shape[axis];
    let mut data = vec![0.0; full_shape.iter().product()];
    for o in 0..outer {
        let dst = (o * dim + start) * inner;
        let src = o * len * inner;
        data[dst..dst + len * inner].copy_from_slice(&t.data[src..src + len * inner]);
    }
    Tensor::from_parts(full_shape.to_vec(), data)
}

pub(crate) fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or(TensorError::Invalid {
        op: "concat",
        msg: "no inputs".into(),
    })?;
    check_axis(&first.shape, axis)?;
    let mut total = 0;
    for p in parts {
        let compatible = p.shape.len() == first.shape.len()
            && p.shape
                .iter()
                .zip(&first.shape)
                .enumerate()
                .all(|(i, (x, y))| i == axis || x == y);
        if !compatible {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                lhs: first.shape.clone(),
                rhs: p.shape.clone(),
            });
        }
        total += p.shape[axis];
    }
    let (outer, _, inner) = split_at_axis(&first.shape, axis);
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let block = p.shape[axis] * inner;
            data.extend_from_slice(&p.data[o * block..(o + 1) * block]);
        }
    }
    let mut shape = first.shape.clone();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, data))
}

pub(crate) fn permute(t: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let rank = t.shape.len();
    let mut seen = vec![false; rank];
    if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
        return Err(TensorError::Invalid {
            op: "permute",
            msg: format!("{perm:?} is not a permutation of {rank} axes"),
        });
    }
    let own = row_major_strides(&t.shape);
    let shape: Vec<usize> = perm.iter().map(|&p| t.shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| own[p]).collect();
    let mut data = vec![0.0; t.data.len()];
    strided_walk(&shape, &strides, |i, off| data[i] = t.data[off]);
    Ok(Tensor::from_parts(shape, data))
}

pub(crate) fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// A strided matrix operand: data, rows, cols, row stride, col stride.
#[derive(Clone, Copy)]
struct MatRef<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> MatRef<'a> {
    fn row_major(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, rs: cols, cs: 1 }
    }

    fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    fn view(&self) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols).strides((self.rs, self.cs)), self.data)
            .expect("matrix view within bounds")
    }
}

/// `c = a·b + beta·c` with `c` row-major.
fn gemm(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f64], beta: f64) {
    debug_assert_eq!(a.cols, b.rows);
    let mut cv = ArrayViewMut2::from_shape((a.rows, b.cols), c).expect("output view");
    general_mat_mul(1.0, &a.view(), &b.view(), beta, &mut cv);
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Batching {
    /// rhs is a single matrix shared by every lhs batch (dense layers).
    SharedRhs,
    /// lhs is a single matrix shared by every rhs batch (graph propagation).
    SharedLhs,
    Paired,
}

struct MatmulPlan {
    batching: Batching,
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    out_shape: Vec<usize>,
}

fn plan_matmul(a: &[usize], b: &[usize]) -> Result<MatmulPlan> {
    let mismatch = || TensorError::ShapeMismatch {
        op: "matmul",
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    };
    if a.len() < 2 || b.len() < 2 {
        return Err(mismatch());
    }
    let (ab, am) = a.split_at(a.len() - 2);
    let (bb, bm) = b.split_at(b.len() - 2);
    if am[1] != bm[0] {
        return Err(mismatch());
    }
    let (m, k, n) = (am[0], am[1], bm[1]);
    let (batching, batch_dims) = if bb.is_empty() {
        (Batching::SharedRhs, ab)
    } else if ab.is_empty() {
        (Batching::SharedLhs, bb)
    } else if ab == bb {
        (Batching::Paired, ab)
    } else {
        return Err(mismatch());
    };
    let mut out_shape = batch_dims.to_vec();
    out_shape.extend([m, n]);
    Ok(MatmulPlan {
        batching,
        batch: batch_dims.iter().product(),
        m,
        k,
        n,
        out_shape,
    })
}

/// Batched matrix product over the trailing two axes.
///
/// Supported batch layouts: both operands with identical leading axes, or one
/// operand a plain matrix shared across the other's leading axes.
pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let p = plan_matmul(&a.shape, &b.shape)?;
    let mut out = vec![0.0; p.out_shape.iter().product()];
    let (mk, kn, mn) = (p.m * p.k, p.k * p.n, p.m * p.n);
    match p.batching {
        Batching::SharedRhs => gemm(
            MatRef::row_major(&a.data, p.batch * p.m, p.k),
            MatRef::row_major(&b.data, p.k, p.n),
            &mut out,
            0.0,
        ),
        Batching::SharedLhs => {
            let lhs = MatRef::row_major(&a.data, p.m, p.k);
            for i in 0..p.batch {
                gemm(
                    lhs,
                    MatRef::row_major(&b.data[i * kn..(i + 1) * kn], p.k, p.n),
                    &mut out[i * mn..(i + 1) * mn],
                    0.0,
                );
            }
        }
        Batching::Paired => {
            for i in 0..p.batch {
                gemm(
                    MatRef::row_major(&a.data[i * mk..(i + 1) * mk], p.m, p.k),
                    MatRef::row_major(&b.data[i * kn..(i + 1) * kn], p.k, p.n),
                    &mut out[i * mn..(i + 1) * mn],
                    0.0,
                );
            }
        }
    }
    Ok(Tensor::from_parts(p.out_shape, out))
}

/// Vector-Jacobian products of [`matmul`] for the upstream gradient `g`.
pub(crate) fn matmul_backward(
    a: &Tensor,
    b: &Tensor,
    g: &Tensor,
    need_a: bool,
    need_b: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let p = plan_matmul(&a.shape, &b.shape).expect("shapes validated in forward");
    let (mk, kn, mn) = (p.m * p.k, p.k * p.n, p.m * p.n);
    let mut ga = need_a.then(|| vec![0.0; a.data.len()]);
    let mut gb = need_b.then(|| vec![0.0; b.data.len()]);
    match p.batching {
        Batching::SharedRhs => {
            let rows = p.batch * p.m;
            let gm = MatRef::row_major(&g.data, rows, p.n);
            if let Some(ga) = ga.as_mut() {
                gemm(gm, MatRef::row_major(&b.data, p.k, p.n).t(), ga, 0.0);
            }
            if let Some(gb) = gb.as_mut() {
                gemm(MatRef::row_major(&a.data, rows, p.k).t(), gm, gb, 0.0);
            }
        }
        Batching::SharedLhs => {
            let lhs = MatRef::row_major(&a.data, p.m, p.k);
            for i in 0..p.batch {
                let gi = MatRef::row_major(&g.data[i * mn..(i + 1) * mn], p.m, p.n);
                let bi = MatRef::row_major(&b.data[i * kn..(i + 1) * kn], p.k, p.n);
                if let Some(ga) = ga.as_mut() {
                    gemm(gi, bi.t(), ga, 1.0);
                }
                if let Some(gb) = gb.as_mut() {
                    gemm(lhs.t(), gi, &mut gb[i * kn..(i + 1) * kn], 0.0);
                }
            }
        }
        Batching::Paired => {
            for i in 0..p.batch {
                let gi = MatRef::row_major(&g.data[i * mn..(i + 1) * mn], p.m, p.n);
                if let Some(ga) = ga.as_mut() {
                    let bi = MatRef::row_major(&b.data[i * kn..(i + 1) * kn], p.k, p.n);
                    gemm(gi, bi.t(), &mut ga[i * mk..(i + 1) * mk], 0.0);
                }
                if let Some(gb) = gb.as_mut() {
                    let ai = MatRef::row_major(&a.data[i * mk..(i + 1) * mk], p.m, p.k);
                    gemm(ai.t(), gi, &mut gb[i * kn..(i + 1) * kn], 0.0);
                }
            }
        }
    }
    (
        ga.map(|d| Tensor::from_parts(a.shape.clone(), d)),
        gb.map(|d| Tensor::from_parts(b.shape.clone(), d)),
    )
}

pub(crate) fn softmax(t: &Tensor, axis: usize) -> Result<Tensor> {
    check_axis(&t.shape, axis)?;
    let (outer, dim, inner) = split_at_axis(&t.shape, axis);
    let mut out = t.data.clone();
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * dim + j) * inner + i;
            let max = (0..dim).map(|j| t.data[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..dim {
                let e = (t.data[at(j)] - max).exp();
                out[at(j)] = e;
                total += e;
            }
            for j in 0..dim {
                out[at(j)] /= total;
            }
        }
    }
    Ok(Tensor::from_parts(t.shape.clone(), out))
}

pub(crate) fn softmax_backward(y: &Tensor, g: &Tensor, axis: usize) -> Tensor {
    let (outer, dim, inner) = split_at_axis(&y.shape, axis);
    let mut out = vec![0.0; y.data.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * dim + j) * inner + i;
            let dot: f64 = (0..dim).map(|j| y.data[at(j)] * g.data[at(j)]).sum();
            for j in 0..dim {
                out[at(j)] = y.data[at(j)] * (g.data[at(j)] - dot);
            }
        }
    }
    Tensor::from_parts(y.shape.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn broadcast_bias_and_column() {
        let a = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let bias = t(&[3], &[10., 20., 30.]);
        let s = broadcast_binary("add", &a, &bias, |x, y| x + y).unwrap();
        assert_eq!(s.data(), &[11., 22., 33., 14., 25., 36.]);
        let col = t(&[2, 1], &[2., 3.]);
        let p = broadcast_binary("mul", &a, &col, |x, y| x * y).unwrap();
        assert_eq!(p.data(), &[2., 4., 6., 12., 15., 18.]);
        assert_eq!(reduce_to_shape(&p, &[2, 1]).data(), &[12., 45.]);
        assert!(broadcast_binary("add", &a, &t(&[2], &[1., 2.]), |x, y| x + y).is_err());
    }

    #[test]
    fn slice_pad_concat() {
        let a = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let s = slice_axis(&a, 1, 1, 2).unwrap();
        assert_eq!(s.data(), &[2., 3., 5., 6.]);
        assert_eq!(pad_axis(&s, &[2, 3], 1, 1).data(), &[0., 2., 3., 0., 5., 6.]);
        let c = concat(&[&slice_axis(&a, 1, 0, 1).unwrap(), &s], 1).unwrap();
        assert_eq!(c, a);
        assert!(slice_axis(&a, 1, 2, 2).is_err());
    }

    #[test]
    fn permute_matches_manual_transpose() {
        let a = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(permute(&a, &[1, 0]).unwrap().data(), &[1., 4., 2., 5., 3., 6.]);
        let b = Tensor::from_fn(vec![2, 3, 4], |i| i as f64);
        let p = permute(&b, &[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.at(&[3, 1, 2]), b.at(&[1, 2, 3]));
        assert_eq!(permute(&p, &inverse_permutation(&[2, 0, 1])).unwrap(), b);
    }

    #[test]
    fn matmul_batching_modes() {
        let l = t(&[2, 2], &[0., 1., 1., 0.]);
        let x = Tensor::from_fn(vec![3, 2, 2], |i| i as f64);
        let y = matmul(&l, &x).unwrap();
        assert_eq!(y.shape(), &[3, 2, 2]);
        // swapping rows of each batch item
        assert_eq!(y.at(&[1, 0, 0]), x.at(&[1, 1, 0]));
        let w = t(&[2, 1], &[1., 1.]);
        let z = matmul(&x, &w).unwrap();
        assert_eq!(z.shape(), &[3, 2, 1]);
        assert_eq!(z.at(&[2, 1, 0]), 11.0 + 10.0);
        assert!(matmul(&x, &Tensor::zeros(vec![2, 2, 2])).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let a = t(&[2, 3], &[1., 2., 3., -1., 0., 1000.]);
        let s = softmax(&a, 1).unwrap();
        for r in 0..2 {
            let total: f64 = (0..3).map(|c| s.at(&[r, c])).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(s.is_finite());
    }
}
