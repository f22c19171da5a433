//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s in creation
//! order, so parents always precede children. [`Tape::backward`] walks the
//! record once in reverse and returns the gradient of a scalar loss with
//! respect to every parameter leaf.
//!
//! Broadcasting is limited to equal shapes and one-element tensors against
//! anything. `relu` uses the subgradient 0 at exactly 0.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(1);

#[derive(Clone, Copy, Debug)]
enum Op {
    Param,
    Const,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Exp(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    Reshape(usize),
    Slice { src: usize, start: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Append-only record of a computation.
pub struct Tape {
    id: usize,
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl core::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Var")
            .field("tape", &self.tape.id)
            .field("id", &self.id)
            .finish()
    }
}

/// Gradients of a scalar loss, indexed by node.
pub struct Gradients {
    tape_id: usize,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to a parameter leaf; `None` for constants and
    /// intermediate nodes.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        if var.tape.id != self.tape_id {
            return None;
        }
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but moves the tensor out.
    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        if var.tape.id != self.tape_id {
            return None;
        }
        self.grads.get_mut(var.id).and_then(Option::take)
    }

    /// `(node_id, gradient)` for every parameter leaf.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Tensor)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (i, g)))
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf whose gradient is reported by [`Tape::backward`].
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Param, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Const, false)
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, needs_grad });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// Smallest `|x|` over all inputs to `relu` on this tape. Finite-difference
    /// checks use it to reject points too close to the kink.
    pub fn min_abs_relu_input(&self) -> Option<f64> {
        let nodes = self.nodes.borrow();
        nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(src) => nodes[src].value.data().iter().map(|v| v.abs()).reduce(f64::min),
                _ => None,
            })
            .reduce(f64::min)
    }

    /// Gradients of `loss` with respect to every parameter leaf recorded
    /// before it. Parameters that do not influence the loss get zeros.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !core::ptr::eq(loss.tape, self) {
            return Err(Error::TapeMismatch);
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if !root.value.is_scalar() {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }

        let mut adj: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        adj[loss.id] = Some(Tensor::filled(root.value.shape(), 1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let mut send = |parent: usize, grad: Tensor| {
                if nodes[parent].needs_grad {
                    accumulate(&mut adj[parent], grad);
                }
            };
            match node.op {
                Op::Param => grads[id] = Some(g),
                Op::Const => {}
                Op::MatMul(a, b) => {
                    let av = &nodes[a].value;
                    let bv = &nodes[b].value;
                    let (m, k) = av.dims2()?;
                    let (_, n) = bv.dims2()?;
                    if nodes[a].needs_grad {
                        let ga = tensor::matmul_nt(g.data(), bv.data(), m, k, n);
                        send(a, Tensor::new(vec![m, k], ga)?);
                    }
                    if nodes[b].needs_grad {
                        let gb = tensor::matmul_tn(av.data(), g.data(), m, k, n);
                        send(b, Tensor::new(vec![k, n], gb)?);
                    }
                }
                Op::Add(a, b) => {
                    send(a, reduce_to(&g, &nodes[a].value, |_| 1.0));
                    send(b, reduce_to(&g, &nodes[b].value, |_| 1.0));
                }
                Op::Sub(a, b) => {
                    send(a, reduce_to(&g, &nodes[a].value, |_| 1.0));
                    send(b, reduce_to(&g, &nodes[b].value, |_| -1.0));
                }
                Op::Mul(a, b) => {
                    let av = &nodes[a].value;
                    let bv = &nodes[b].value;
                    if nodes[a].needs_grad {
                        send(a, reduce_to(&g, av, |i| bcast(bv, i)));
                    }
                    if nodes[b].needs_grad {
                        send(b, reduce_to(&g, bv, |i| bcast(av, i)));
                    }
                }
                Op::Scale(a, c) => send(a, g.map(|v| v * c)),
                Op::Relu(a) => {
                    let x = nodes[a].value.data();
                    send(a, zip_map(&g, x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
                }
                Op::Exp(a) => {
                    let y = node.value.data();
                    send(a, zip_map(&g, y, |gv, yv| gv * yv));
                }
                Op::Square(a) => {
                    let x = nodes[a].value.data();
                    send(a, zip_map(&g, x, |gv, xv| 2.0 * gv * xv));
                }
                Op::Sum(a) => {
                    let gv = g.data()[0];
                    send(a, Tensor::filled(nodes[a].value.shape(), gv));
                }
                Op::Mean(a) => {
                    let n = nodes[a].value.len() as f64;
                    let gv = g.data()[0] / n;
                    send(a, Tensor::filled(nodes[a].value.shape(), gv));
                }
                Op::Reshape(a) => {
                    let shape = nodes[a].value.shape().to_vec();
                    send(a, g.reshape(shape)?);
                }
                Op::Slice { src, start } => {
                    // Written straight into the source's adjoint; slices of
                    // large parameter vectors would otherwise allocate a full
                    // zero tensor each.
                    if nodes[src].needs_grad {
                        let acc = adj[src].get_or_insert_with(|| Tensor::zeros(nodes[src].value.shape()));
                        for (a, v) in acc.data_mut()[start..start + g.len()].iter_mut().zip(g.data()) {
                            *a += v;
                        }
                    }
                }
            }
        }

        for (id, node) in nodes.iter().enumerate() {
            if matches!(node.op, Op::Param) && grads[id].is_none() {
                grads[id] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients {
            tape_id: self.id,
            grads,
        })
    }
}

fn accumulate(slot: &mut Option<Tensor>, grad: Tensor) {
    match slot {
        Some(acc) => {
            for (a, g) in acc.data_mut().iter_mut().zip(grad.data()) {
                *a += g;
            }
        }
        None => *slot = Some(grad),
    }
}

fn bcast(t: &Tensor, i: usize) -> f64 {
    if t.len() == 1 {
        t.data()[0]
    } else {
        t.data()[i]
    }
}

/// `g[i] * local(i)`, summed down to one element when `target` was broadcast.
fn reduce_to(g: &Tensor, target: &Tensor, local: impl Fn(usize) -> f64) -> Tensor {
    if target.len() == 1 && g.len() != 1 {
        let s = g.data().iter().enumerate().map(|(i, gv)| gv * local(i)).sum();
        Tensor::filled(target.shape(), s)
    } else {
        let data = g.data().iter().enumerate().map(|(i, gv)| gv * local(i)).collect();
        Tensor::new(target.shape(), data).expect("gradient matches target shape")
    }
}

fn zip_map(g: &Tensor, x: &[f64], f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = g.data().iter().zip(x).map(|(&gv, &xv)| f(gv, xv)).collect();
    Tensor::new(g.shape(), data).expect("same shape")
}

fn broadcast_shape(a: &Tensor, b: &Tensor) -> Option<Vec<usize>> {
    if a.shape() == b.shape() || b.len() == 1 {
        Some(a.shape().to_vec())
    } else if a.len() == 1 {
        Some(b.shape().to_vec())
    } else {
        None
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// A copy of the forward value.
    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> Result<f64> {
        self.tape.nodes.borrow()[self.id].value.item()
    }

    fn same_tape(&self, other: &Var<'_>) -> Result<()> {
        if core::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::TapeMismatch)
        }
    }

    fn unary(&self, op: Op, f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<Var<'t>> {
        let value = f(&self.tape.nodes.borrow()[self.id].value)?;
        let needs = self.tape.needs_grad(self.id);
        Ok(self.tape.push(value, op, needs))
    }

    fn binary(&self, other: Var<'t>, name: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].value;
            let b = &nodes[other.id].value;
            let shape = broadcast_shape(a, b).ok_or_else(|| Error::shape(name, a.shape(), b.shape()))?;
            let n: usize = shape.iter().product();
            let data = (0..n).map(|i| f(bcast(a, i), bcast(b, i))).collect();
            Tensor::new(shape, data)?
        };
        let needs = self.tape.needs_grad(self.id) || self.tape.needs_grad(other.id);
        Ok(self.tape.push(value, op, needs))
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.matmul(&nodes[other.id].value)?
        };
        let needs = self.tape.needs_grad(self.id) || self.tape.needs_grad(other.id);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), needs))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    /// Multiplication by a constant.
    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), |x| Ok(x.map(|v| v * c)))
            .expect("scale is total")
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |x| Ok(x.map(|v| if v > 0.0 { v } else { 0.0 })))
            .expect("relu is total")
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(Op::Exp(self.id), |x| Ok(x.map(libm::exp)))
            .expect("exp is total")
    }

    pub fn square(&self) -> Var<'t> {
        self.unary(Op::Square(self.id), |x| Ok(x.map(|v| v * v)))
            .expect("square is total")
    }

    pub fn sum(&self) -> Result<Var<'t>> {
        self.unary(Op::Sum(self.id), |x| {
            if x.is_empty() {
                return Err(Error::domain("sum of an empty tensor"));
            }
            Ok(Tensor::scalar(x.sum()))
        })
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        self.unary(Op::Mean(self.id), |x| {
            if x.is_empty() {
                return Err(Error::domain("mean of an empty tensor"));
            }
            Ok(Tensor::scalar(x.sum() / x.len() as f64))
        })
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let shape = shape.into();
        self.unary(Op::Reshape(self.id), |x| x.clone().reshape(shape.clone()))
    }

    /// The contiguous range `[start, start + prod(shape))` of the flattened
    /// value, reshaped to `shape`.
    pub fn slice(&self, start: usize, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let shape = shape.into();
        self.unary(Op::Slice { src: self.id, start }, |x| {
            let n: usize = shape.iter().product();
            if start + n > x.len() {
                return Err(Error::shape("slice", x.shape(), &shape));
            }
            Tensor::new(shape.clone(), x.data()[start..start + n].to_vec())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_param<'t>(tape: &'t Tape, v: &[f64]) -> Var<'t> {
        tape.param(Tensor::vector(v.to_vec()))
    }

    #[test]
    fn elementwise_forward_values() {
        let tape = Tape::new();
        let x = vec_param(&tape, &[-1.0, 0.0, 2.0]);
        assert_eq!(x.relu().value().data(), &[0.0, 0.0, 2.0]);
        let z = vec_param(&tape, &[0.0]);
        assert_eq!(z.exp().value().data(), &[1.0]);
    }

    #[test]
    fn square_derivative_at_three() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = x.square();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let tape = Tape::new();
        let x = vec_param(&tape, &[0.0, 1e-300, -1e-300]);
        let loss = x.relu().sum().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn reductions() {
        let tape = Tape::new();
        let x = vec_param(&tape, &[2.0, 4.0]);
        let m = x.mean().unwrap();
        assert_eq!(m.item().unwrap(), 3.0);
        let g = tape.backward(m).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.5, 0.5]);

        let empty = tape.param(Tensor::vector(vec![]));
        assert!(matches!(empty.sum(), Err(Error::Domain(_))));
        assert!(matches!(empty.mean(), Err(Error::Domain(_))));
    }

    #[test]
    fn linear_and_quadratic_losses() {
        let tape = Tape::new();
        let w = vec_param(&tape, &[1.0, 2.0, 3.0]);
        let g = tape.backward(w.sum().unwrap()).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0, 1.0, 1.0]);

        let tape = Tape::new();
        let w = vec_param(&tape, &[1.0, 2.0]);
        let g = tape.backward(w.square().sum().unwrap()).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::new();
        let w = vec_param(&tape, &[0.5, -1.0, 3.0]);
        let loss = w.sum().unwrap().add(w.sum().unwrap()).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn matmul_gradient() {
        let tape = Tape::new();
        let a = tape.param(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let b = tape.param(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let loss = a.matmul(b).unwrap().sum().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[3.0, 4.0]);
        assert_eq!(g.get(b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn scalar_broadcast_gradient_sums() {
        let tape = Tape::new();
        let s = tape.param(Tensor::scalar(2.0));
        let w = vec_param(&tape, &[1.0, 2.0, 3.0]);
        let loss = s.mul(w).unwrap().sum().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(s).unwrap().data(), &[6.0]);
        assert_eq!(g.get(w).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn shape_errors() {
        let tape = Tape::new();
        let a = vec_param(&tape, &[1.0, 2.0]);
        let b = vec_param(&tape, &[1.0, 2.0, 3.0]);
        assert!(matches!(a.add(b), Err(Error::Shape { op: "add", .. })));
        let m = tape.param(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let err = m.matmul(m).unwrap_err();
        assert_eq!(
            err,
            Error::Shape {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
    }

    #[test]
    fn backward_contract_errors() {
        let tape = Tape::new();
        let w = vec_param(&tape, &[1.0, 2.0]);
        assert!(matches!(tape.backward(w.square()), Err(Error::NonScalarLoss(_))));
        let other = Tape::new();
        let foreign = other.param(Tensor::scalar(1.0));
        assert!(matches!(tape.backward(foreign), Err(Error::TapeMismatch)));
        assert!(matches!(w.add(foreign), Err(Error::TapeMismatch)));
    }

    #[test]
    fn slice_and_reshape_route_gradients() {
        let tape = Tape::new();
        let w = vec_param(&tape, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let m = w.slice(1, [2, 2]).unwrap();
        assert_eq!(m.value().data(), &[2.0, 3.0, 4.0, 5.0]);
        let loss = m.reshape([4]).unwrap().square().sum().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[0.0, 4.0, 6.0, 8.0, 10.0]);
        assert!(w.slice(3, [3]).is_err());
    }

    #[test]
    fn unused_params_get_zero_gradient_and_constants_none() {
        let tape = Tape::new();
        let used = vec_param(&tape, &[1.0]);
        let unused = vec_param(&tape, &[1.0, 1.0]);
        let c = tape.constant(Tensor::vector(vec![2.0]));
        let loss = used.mul(c).unwrap().sum().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(unused).unwrap().data(), &[0.0, 0.0]);
        assert!(g.get(c).is_none());
        assert_eq!(g.iter().count(), 2);
    }
}
