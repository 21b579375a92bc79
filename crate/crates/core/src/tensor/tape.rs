//! Define-by-run tape. Nodes are appended in evaluation order, so walking
//! the node list backwards is a reverse topological order.

use super::kernels;
use super::{Result, Tensor, TensorError};
use std::cell::{Cell, Ref, RefCell};
use std::fmt;

type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Abs(NodeId),
    /// `x^(-1/2)` for positive entries, 0 elsewhere.
    InvSqrtOrZero(NodeId),
    Softmax { x: NodeId, axis: usize },
    SumAxes(NodeId),
    SumAll(NodeId),
    Slice { x: NodeId, axis: usize, start: usize },
    Concat { parts: Vec<NodeId>, axis: usize },
    MatMul(NodeId, NodeId),
    Permute { x: NodeId, perm: Vec<usize> },
    Reshape(NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records primitive operations for one forward pass.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.borrow().len())
            .field("consumed", &self.consumed.get())
            .finish()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A leaf whose gradient is tracked.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn value(&self, id: NodeId) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }
}

/// Gradients produced by one backward pass, indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros when the loss does not reach it.
    pub fn get(&self, var: Var<'_>) -> Tensor {
        self.grads[var.id]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[var.id].clone()))
    }

    /// Whether any gradient flowed into `var`.
    pub fn reached(&self, var: Var<'_>) -> bool {
        self.grads[var.id].is_some()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn same_tape(&self, other: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(TensorError::ForeignVar)
        }
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let value = self.value().map(f);
        let rg = self.requires_grad();
        self.tape.push(value, op, rg)
    }

    fn binary(
        &self,
        other: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let value = kernels::broadcast_binary(name, &self.value(), &other.value(), f)?;
        let rg = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(value, op, rg))
    }

    /// Elementwise sum with trailing-axis broadcasting.
    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, factor), |x| x * factor)
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id), |x| x + c)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn abs(&self) -> Var<'t> {
        self.unary(Op::Abs(self.id), f64::abs)
    }

    /// `x^(-1/2)` where `x > 0`, and 0 where `x <= 0` (isolated graph nodes).
    pub fn inv_sqrt_or_zero(&self) -> Var<'t> {
        self.unary(Op::InvSqrtOrZero(self.id), |x| {
            if x > 0.0 {
                1.0 / x.sqrt()
            } else {
                0.0
            }
        })
    }

    pub fn softmax(&self, axis: usize) -> Result<Var<'t>> {
        let value = kernels::softmax(&self.value(), axis)?;
        Ok(self
            .tape
            .push(value, Op::Softmax { x: self.id, axis }, self.requires_grad()))
    }

    /// Sum over `axes`, keeping them with extent 1.
    pub fn sum_axes(&self, axes: &[usize]) -> Result<Var<'t>> {
        let value = kernels::sum_axes(&self.value(), axes)?;
        Ok(self.tape.push(value, Op::SumAxes(self.id), self.requires_grad()))
    }

    /// Mean over `axes`, keeping them with extent 1.
    pub fn mean_axes(&self, axes: &[usize]) -> Result<Var<'t>> {
        let shape = self.shape();
        let count: usize = axes.iter().map(|&a| shape.get(a).copied().unwrap_or(1)).product();
        Ok(self.sum_axes(axes)?.scale(1.0 / count as f64))
    }

    /// Sum of every element, as a shape-`[1]` scalar.
    pub fn sum(&self) -> Var<'t> {
        let value = Tensor::scalar(self.value().sum());
        self.tape.push(value, Op::SumAll(self.id), self.requires_grad())
    }

    pub fn mean(&self) -> Var<'t> {
        let n = self.value().len();
        self.sum().scale(1.0 / n as f64)
    }

    /// `len` consecutive entries along `axis` starting at `start`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let value = kernels::slice_axis(&self.value(), axis, start, len)?;
        Ok(self.tape.push(
            value,
            Op::Slice {
                x: self.id,
                axis,
                start,
            },
            self.requires_grad(),
        ))
    }

    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts.first().ok_or(TensorError::Invalid {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        for p in parts {
            first.same_tape(p)?;
        }
        let tape = first.tape;
        let value = {
            let values: Vec<Ref<'_, Tensor>> = parts.iter().map(|p| p.value()).collect();
            let refs: Vec<&Tensor> = values.iter().map(|r| &**r).collect();
            kernels::concat(&refs, axis)?
        };
        let ids: Vec<NodeId> = parts.iter().map(|p| p.id).collect();
        let rg = tape.needs(&ids);
        Ok(tape.push(value, Op::Concat { parts: ids, axis }, rg))
    }

    /// Batched matrix product over the trailing two axes.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let value = kernels::matmul(&self.value(), &other.value())?;
        let rg = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), rg))
    }

    /// Contracts `axis` of `self` with `other_axis` of `other`. The result
    /// keeps the remaining axes of `self` followed by those of `other`.
    pub fn contract(&self, other: Var<'t>, axis: usize, other_axis: usize) -> Result<Var<'t>> {
        let sa = self.shape();
        let sb = other.shape();
        if axis >= sa.len() || other_axis >= sb.len() {
            return Err(TensorError::InvalidAxis {
                axis: axis.max(other_axis),
                rank: sa.len().min(sb.len()),
            });
        }
        if sa[axis] != sb[other_axis] {
            return Err(TensorError::ShapeMismatch {
                op: "contract",
                lhs: sa,
                rhs: sb,
            });
        }
        let k = sa[axis];
        let mut perm_a: Vec<usize> = (0..sa.len()).filter(|&i| i != axis).collect();
        perm_a.push(axis);
        let mut perm_b = vec![other_axis];
        perm_b.extend((0..sb.len()).filter(|&i| i != other_axis));
        let rest_a: Vec<usize> = perm_a[..sa.len() - 1].iter().map(|&i| sa[i]).collect();
        let rest_b: Vec<usize> = perm_b[1..].iter().map(|&i| sb[i]).collect();
        let rows = rest_a.iter().product::<usize>();
        let cols = rest_b.iter().product::<usize>();
        let lhs = self.permute(&perm_a)?.reshape(vec![rows, k])?;
        let rhs = other.permute(&perm_b)?.reshape(vec![k, cols])?;
        let mut out_shape = rest_a;
        out_shape.extend(rest_b);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        lhs.matmul(rhs)?.reshape(out_shape)
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Var<'t>> {
        let value = kernels::permute(&self.value(), perm)?;
        Ok(self.tape.push(
            value,
            Op::Permute {
                x: self.id,
                perm: perm.to_vec(),
            },
            self.requires_grad(),
        ))
    }

    /// Matrix transpose of a rank-2 value.
    pub fn t(&self) -> Result<Var<'t>> {
        if self.shape().len() != 2 {
            return Err(TensorError::Invalid {
                op: "transpose",
                msg: format!("expected a matrix, got shape {:?}", self.shape()),
            });
        }
        self.permute(&[1, 0])
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'t>> {
        let value = self.value().reshape(shape)?;
        Ok(self.tape.push(value, Op::Reshape(self.id), self.requires_grad()))
    }

    /// Replays the tape from this scalar, returning gradients for every node.
    ///
    /// A tape may be replayed once; later calls fail with
    /// [`TensorError::TapeConsumed`].
    pub fn backward(&self) -> Result<Gradients> {
        let tape = self.tape;
        let nodes = tape.nodes.borrow();
        let loss_shape = nodes[self.id].value.shape().to_vec();
        if nodes[self.id].value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_shape));
        }
        if tape.consumed.replace(true) {
            return Err(TensorError::TapeConsumed);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.id + 1];
        grads[self.id] = Some(Tensor::ones(loss_shape));

        for id in (0..=self.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            let mut send = |target: NodeId, contribution: Tensor| {
                if !nodes[target].requires_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(contribution.data())
                        .for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(contribution),
                }
            };
            let value_of = |i: NodeId| &nodes[i].value;
            match &node.op {
                Op::Leaf => unreachable!("leaves handled above"),
                Op::Add(a, b) => {
                    send(*a, kernels::reduce_to_shape(&g, value_of(*a).shape()));
                    send(*b, kernels::reduce_to_shape(&g, value_of(*b).shape()));
                }
                Op::Sub(a, b) => {
                    send(*a, kernels::reduce_to_shape(&g, value_of(*a).shape()));
                    let neg = g.map(|x| -x);
                    send(*b, kernels::reduce_to_shape(&neg, value_of(*b).shape()));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (value_of(*a), value_of(*b));
                    if nodes[*a].requires_grad {
                        let ga = kernels::broadcast_binary("mul", &g, vb, |x, y| x * y)
                            .expect("broadcast validated in forward");
                        send(*a, kernels::reduce_to_shape(&ga, va.shape()));
                    }
                    if nodes[*b].requires_grad {
                        let gb = kernels::broadcast_binary("mul", &g, va, |x, y| x * y)
                            .expect("broadcast validated in forward");
                        send(*b, kernels::reduce_to_shape(&gb, vb.shape()));
                    }
                }
                Op::Scale(x, f) => send(*x, g.map(|v| v * f)),
                Op::AddScalar(x) => send(*x, g),
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    send(*x, zip_map(&g, y, |gi, yi| gi * yi * (1.0 - yi)));
                }
                Op::Relu(x) => {
                    send(*x, zip_map(&g, value_of(*x), |gi, xi| if xi > 0.0 { gi } else { 0.0 }));
                }
                Op::Tanh(x) => {
                    send(*x, zip_map(&g, &node.value, |gi, yi| gi * (1.0 - yi * yi)));
                }
                Op::Abs(x) => {
                    send(*x, zip_map(&g, value_of(*x), |gi, xi| {
                        if xi > 0.0 {
                            gi
                        } else if xi < 0.0 {
                            -gi
                        } else {
                            0.0
                        }
                    }));
                }
                Op::InvSqrtOrZero(x) => {
                    // d/dx x^(-1/2) = -1/2 · y³
                    send(*x, zip_map(&g, &node.value, |gi, yi| -0.5 * gi * yi * yi * yi));
                }
                Op::Softmax { x, axis } => {
                    send(*x, kernels::softmax_backward(&node.value, &g, *axis));
                }
                Op::SumAxes(x) => {
                    let full = kernels::broadcast_to(&g, value_of(*x).shape())
                        .expect("reduced shape broadcasts back");
                    send(*x, full);
                }
                Op::SumAll(x) => {
                    send(*x, Tensor::full(value_of(*x).shape().to_vec(), g.data()[0]));
                }
                Op::Slice { x, axis, start } => {
                    send(*x, kernels::pad_axis(&g, value_of(*x).shape(), *axis, *start));
                }
                Op::Concat { parts, axis } => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = value_of(p).shape()[*axis];
                        if nodes[p].requires_grad {
                            send(
                                p,
                                kernels::slice_axis(&g, *axis, offset, len)
                                    .expect("concat extents recorded"),
                            );
                        }
                        offset += len;
                    }
                }
                Op::MatMul(a, b) => {
                    let (ga, gb) = kernels::matmul_backward(
                        value_of(*a),
                        value_of(*b),
                        &g,
                        nodes[*a].requires_grad,
                        nodes[*b].requires_grad,
                    );
                    if let Some(ga) = ga {
                        send(*a, ga);
                    }
                    if let Some(gb) = gb {
                        send(*b, gb);
                    }
                }
                Op::Permute { x, perm } => {
                    let inv = kernels::inverse_permutation(perm);
                    send(*x, kernels::permute(&g, &inv).expect("valid inverse permutation"));
                }
                Op::Reshape(x) => {
                    send(*x, Tensor::from_parts(value_of(*x).shape().to_vec(), g.into_data()));
                }
            }
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        grads.resize(nodes.len(), None);
        Ok(Gradients { grads, shapes })
    }
}

fn zip_map(g: &Tensor, v: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_parts(
        g.shape().to_vec(),
        g.data().iter().zip(v.data()).map(|(&a, &b)| f(a, b)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    /// Central differences of `f` at `x`.
    fn numeric_grad(x: &Tensor, f: &dyn Fn(&Tensor) -> f64) -> Tensor {
        let h = 1e-6;
        let mut g = Tensor::zeros(x.shape().to_vec());
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            g.data_mut()[i] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    fn check_unary(build: impl Fn(Var<'_>) -> Var<'_>, x: Tensor) {
        let out_shape = {
            let tape = Tape::new();
            let shape = build(tape.constant(x.clone())).shape();
            shape
        };
        let weights = Tensor::from_fn(out_shape, |i| 0.3 + 0.1 * i as f64);
        let eval = |input: &Tensor| {
            let tape = Tape::new();
            let y = build(tape.constant(input.clone()));
            let total: f64 = y.value().data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
            total
        };
        let tape = Tape::new();
        let xv = tape.var(x.clone());
        let w = tape.constant(weights.clone());
        let loss = build(xv).mul(w).unwrap().sum();
        let analytic = loss.backward().unwrap().get(xv);
        let numeric = numeric_grad(&x, &eval);
        for (a, n) in analytic.data().iter().zip(numeric.data()) {
            assert!((a - n).abs() <= 1e-6 * a.abs().max(n.abs()).max(1.0), "{a} vs {n}");
        }
    }

    #[test]
    fn trivial_activation_values() {
        let tape = Tape::new();
        assert_eq!(tape.constant(Tensor::scalar(0.0)).sigmoid().value().data(), &[0.5]);
        assert_eq!(tape.constant(Tensor::scalar(-2.0)).relu().value().data(), &[0.0]);
        let s = tape.constant(t(&[2], &[0.0, 0.0])).softmax(0).unwrap();
        assert_eq!(s.value().data(), &[0.5, 0.5]);
    }

    #[test]
    fn sum_and_product_rule() {
        let tape = Tape::new();
        let x = tape.var(Tensor::from_fn(vec![2, 3], |i| i as f64));
        let g = x.sum().backward().unwrap();
        assert_eq!(g.get(x), Tensor::ones(vec![2, 3]));

        let tape = Tape::new();
        let x = tape.var(Tensor::scalar(3.0));
        let y = tape.var(Tensor::scalar(5.0));
        let g = x.mul(y).unwrap().backward().unwrap();
        assert_eq!(g.get(x).data(), &[5.0]);
        assert_eq!(g.get(y).data(), &[3.0]);
    }

    #[test]
    fn contraction_examples() {
        let tape = Tape::new();
        let id = tape.constant(Tensor::eye(2));
        let m = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        assert_eq!(id.matmul(m).unwrap().value().data(), &[1., 2., 3., 4.]);
        let ones = tape.constant(t(&[2, 1], &[1., 1.]));
        assert_eq!(m.matmul(ones).unwrap().value().data(), &[3., 7.]);
        let row = tape.constant(t(&[1, 3], &[1., 1., 1.]));
        let o = tape.constant(Tensor::ones(vec![3, 3]));
        assert_eq!(row.matmul(o).unwrap().value().data(), &[3., 3., 3.]);
        // tensordot over axis 1 of m and axis 0 of a vector-shaped [2,1]
        assert_eq!(m.contract(ones, 1, 0).unwrap().value().data(), &[3., 7.]);
        let err = m.matmul(tape.constant(Tensor::ones(vec![3, 1]))).unwrap_err();
        assert!(err.to_string().contains("[2, 2]") && err.to_string().contains("[3, 1]"));
    }

    #[test]
    fn backward_errors() {
        let tape = Tape::new();
        let x = tape.var(Tensor::ones(vec![2]));
        assert!(matches!(x.backward(), Err(TensorError::NonScalarLoss(_))));
        let l = x.sum();
        l.backward().unwrap();
        assert!(matches!(l.backward(), Err(TensorError::TapeConsumed)));
    }

    #[test]
    fn unreachable_leaf_gets_zero() {
        let tape = Tape::new();
        let x = tape.var(Tensor::ones(vec![3]));
        let y = tape.var(Tensor::ones(vec![2, 2]));
        let g = x.sum().backward().unwrap();
        assert!(!g.reached(y));
        assert_eq!(g.get(y), Tensor::zeros(vec![2, 2]));
    }

    #[test]
    fn primitive_gradients_match_finite_differences() {
        let x = Tensor::from_fn(vec![2, 3, 4], |i| ((i * 7 % 11) as f64 - 5.0) * 0.37 + 0.01);
        check_unary(|v| v.sigmoid(), x.clone());
        check_unary(|v| v.tanh(), x.clone());
        check_unary(|v| v.relu(), x.clone());
        check_unary(|v| v.abs(), x.clone());
        check_unary(|v| v.scale(-1.5).add_scalar(2.0), x.clone());
        check_unary(|v| v.softmax(1).unwrap(), x.clone());
        check_unary(|v| v.softmax(2).unwrap(), x.clone());
        check_unary(|v| v.mean_axes(&[2]).unwrap(), x.clone());
        check_unary(|v| v.sum_axes(&[0, 2]).unwrap(), x.clone());
        check_unary(|v| v.slice(1, 1, 2).unwrap(), x.clone());
        check_unary(|v| v.permute(&[2, 0, 1]).unwrap(), x.clone());
        check_unary(|v| v.reshape(vec![6, 4]).unwrap(), x.clone());
        check_unary(|v| Var::concat(&[v, v.slice(2, 0, 1).unwrap()], 2).unwrap(), x.clone());
        check_unary(|v| v.mul(v).unwrap().add_scalar(0.5).inv_sqrt_or_zero(), x.clone());
        check_unary(
            |v| {
                let w = v.tape().constant(Tensor::from_fn(vec![4, 2], |i| i as f64 - 3.0));
                v.matmul(w).unwrap()
            },
            x.clone(),
        );
        check_unary(
            |v| {
                let l = v.tape().constant(Tensor::from_fn(vec![3, 3], |i| (i as f64).sin()));
                l.matmul(v).unwrap()
            },
            x.clone(),
        );
        // gradient with respect to the shared operand of a batched product
        check_unary(
            |l| {
                let b = l.tape().constant(Tensor::from_fn(vec![2, 3, 4], |i| (i as f64).cos()));
                l.matmul(b).unwrap()
            },
            Tensor::from_fn(vec![3, 3], |i| i as f64 * 0.1),
        );
        check_unary(
            |w| {
                let a = w.tape().constant(Tensor::from_fn(vec![2, 3, 4], |i| (i as f64).cos()));
                a.matmul(w).unwrap()
            },
            Tensor::from_fn(vec![4, 2], |i| i as f64 * 0.1),
        );
        check_unary(
            |b| {
                let a = b.tape().constant(Tensor::from_fn(vec![2, 3, 4], |i| (i as f64).cos()));
                a.mul(b).unwrap().add(b.slice(1, 0, 1).unwrap()).unwrap()
            },
            Tensor::from_fn(vec![3, 4], |i| i as f64 * 0.1 - 0.4),
        );
    }
}
