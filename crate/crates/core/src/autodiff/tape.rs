//! Reverse-mode tape.
//!
//! Each recorded operation appends a node holding its forward value; inputs
//! always precede the node that consumes them, so a reverse sweep over the
//! node list is a valid topological order for backpropagation.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;

use crate::autodiff::param::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::ops::basic;
use crate::ops::conv::{self, ConvShape, PlaneGeometry};
use crate::ops::dense;
use crate::ops::norm::{self, BatchNormCache, BatchStats};
use crate::ops::pool::{self, PoolKind};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Train or inference behaviour for dropout and batch normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    Conv2d(ConvShape),
    Depthwise(ConvShape),
    MaxPool(Vec<usize>),
    AvgPool(PlaneGeometry),
    GlobalAvgPool,
    Dense,
    Relu,
    Softmax,
    BatchNorm(BatchNormCache<T>),
    Concat(Vec<usize>),
    Add,
    Dropout(Vec<T>),
    Flatten,
    CrossEntropy(Vec<usize>),
    WeightedSum(Tensor<T>),
    SumSquares,
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::Conv2d(_) => "conv2d",
            Op::Depthwise(_) => "depthwise_conv2d",
            Op::MaxPool(_) => "max_pool",
            Op::AvgPool(_) => "avg_pool",
            Op::GlobalAvgPool => "global_avg_pool",
            Op::Dense => "dense",
            Op::Relu => "relu",
            Op::Softmax => "softmax",
            Op::BatchNorm(_) => "batch_norm",
            Op::Concat(_) => "concat",
            Op::Add => "add",
            Op::Dropout(_) => "dropout",
            Op::Flatten => "flatten",
            Op::CrossEntropy(_) => "cross_entropy",
            Op::WeightedSum(_) => "weighted_sum",
            Op::SumSquares => "sum_squares",
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    inputs: Vec<NodeId>,
    value: Tensor<T>,
}

#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    fn push(&mut self, op: Op<T>, inputs: Vec<NodeId>, value: Tensor<T>) -> NodeId {
        debug_assert!(inputs.iter().all(|i| i.0 < self.nodes.len()));
        self.nodes.push(Node { op, inputs, value });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Graph(format!("node {} is not on this tape", id.0)))
        }
    }

    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Input, vec![], value)
    }

    /// Records a leaf holding a copy of the parameter's current value.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        self.push(Op::Param(id), vec![], store.value(id).clone())
    }

    pub fn conv2d(&mut self, x: NodeId, kernels: NodeId, bias: NodeId, stride: usize, padding: usize) -> Result<NodeId> {
        for id in [x, kernels, bias] {
            self.check(id)?;
        }
        let (xv, kv, bv) = (self.value(x), self.value(kernels), self.value(bias));
        let cs = conv::conv2d_shape(xv, kv, bv, stride, padding)?;
        let y = conv::conv2d_forward(xv, kv, bv, stride, padding)?;
        Ok(self.push(Op::Conv2d(cs), vec![x, kernels, bias], y))
    }

    pub fn depthwise_conv2d(
        &mut self,
        x: NodeId,
        kernels: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        for id in [x, kernels, bias] {
            self.check(id)?;
        }
        let (xv, kv, bv) = (self.value(x), self.value(kernels), self.value(bias));
        let cs = conv::depthwise_shape(xv, kv, bv, stride, padding)?;
        let y = conv::depthwise_conv2d_forward(xv, kv, bv, stride, padding)?;
        Ok(self.push(Op::Depthwise(cs), vec![x, kernels, bias], y))
    }

    /// Pooling; `window`, `stride` and `padding` are ignored for [`PoolKind::GlobalAvg`].
    pub fn pool2d(&mut self, x: NodeId, kind: PoolKind, window: usize, stride: usize, padding: usize) -> Result<NodeId> {
        self.check(x)?;
        let xv = self.value(x);
        match kind {
            PoolKind::GlobalAvg => {
                let y = pool::global_avg_pool_forward(xv)?;
                Ok(self.push(Op::GlobalAvgPool, vec![x], y))
            }
            PoolKind::Max => {
                let g = pool::pool_geometry(xv.dims4("pool2d")?, window, stride, padding)?;
                let (y, arg) = pool::max_pool_forward(xv, &g)?;
                Ok(self.push(Op::MaxPool(arg), vec![x], y))
            }
            PoolKind::Avg => {
                let g = pool::pool_geometry(xv.dims4("pool2d")?, window, stride, padding)?;
                let y = pool::avg_pool_forward(xv, &g)?;
                Ok(self.push(Op::AvgPool(g), vec![x], y))
            }
        }
    }

    pub fn dense(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        for id in [x, weight, bias] {
            self.check(id)?;
        }
        let y = dense::dense_forward(self.value(x), self.value(weight), self.value(bias))?;
        Ok(self.push(Op::Dense, vec![x, weight, bias], y))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let y = basic::relu(self.value(x));
        Ok(self.push(Op::Relu, vec![x], y))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let y = basic::softmax(self.value(x))?;
        Ok(self.push(Op::Softmax, vec![x], y))
    }

    /// Batch normalization. In training mode the observed batch statistics are
    /// returned so the caller can fold them into its running estimates.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
        mode: Mode,
        running_mean: &[T],
        running_var: &[T],
    ) -> Result<(NodeId, Option<BatchStats<T>>)> {
        for id in [x, scale, shift] {
            self.check(id)?;
        }
        let (xv, sv, hv) = (self.value(x), self.value(scale), self.value(shift));
        let (y, cache, stats) = match mode {
            Mode::Train => {
                let (y, cache, stats) = norm::batch_norm_train(xv, sv, hv)?;
                (y, cache, Some(stats))
            }
            Mode::Infer => {
                let (y, cache) = norm::batch_norm_infer(xv, sv, hv, running_mean, running_var)?;
                (y, cache, None)
            }
        };
        Ok((self.push(Op::BatchNorm(cache), vec![x, scale, shift], y), stats))
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        for &id in xs {
            self.check(id)?;
        }
        let values: Vec<&Tensor<T>> = xs.iter().map(|&i| self.value(i)).collect();
        let y = basic::concat_channels(&values)?;
        let channels = values.iter().map(|v| v.shape()[1]).collect();
        Ok(self.push(Op::Concat(channels), xs.to_vec(), y))
    }

    pub fn add(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        for &id in xs {
            self.check(id)?;
        }
        let values: Vec<&Tensor<T>> = xs.iter().map(|&i| self.value(i)).collect();
        let y = basic::add_all(&values)?;
        Ok(self.push(Op::Add, xs.to_vec(), y))
    }

    /// Inverted dropout. Inference mode and `rate == 0` return `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: NodeId, rate: f64, mode: Mode, rng: &mut R) -> Result<NodeId> {
        self.check(x)?;
        basic::check_rate(rate)?;
        if mode == Mode::Infer || rate == 0.0 {
            return Ok(x);
        }
        let xv = self.value(x);
        let mask: Vec<T> = basic::dropout_mask(xv.len(), rate, rng)?;
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let y = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(Op::Dropout(mask), vec![x], y))
    }

    /// `[B, ...] -> [B, prod(...)]`.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let xv = self.value(x);
        let b = xv.shape()[0];
        let y = xv.clone().reshape(vec![b, xv.len() / b])?;
        Ok(self.push(Op::Flatten, vec![x], y))
    }

    pub fn cross_entropy(&mut self, probs: NodeId, targets: &Tensor<T>) -> Result<NodeId> {
        self.check(probs)?;
        let pv = self.value(probs);
        let loss = basic::cross_entropy(pv, targets)?;
        let classes = basic::target_classes(targets)?;
        Ok(self.push(Op::CrossEntropy(classes), vec![probs], Tensor::scalar(loss)))
    }

    /// `sum(weights * x)`: a scalar probe used to test the gradients of tensor-valued ops.
    pub fn weighted_sum(&mut self, x: NodeId, weights: Tensor<T>) -> Result<NodeId> {
        self.check(x)?;
        let xv = self.value(x);
        if xv.shape() != weights.shape() {
            return Err(Error::shape("weighted_sum", format!("{:?} vs {:?}", xv.shape(), weights.shape())));
        }
        let s: T = xv.data().iter().zip(weights.data()).map(|(&a, &b)| a * b).sum();
        Ok(self.push(Op::WeightedSum(weights), vec![x], Tensor::scalar(s)))
    }

    pub fn sum_squares(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let s: T = self.value(x).data().iter().map(|&v| v * v).sum();
        Ok(self.push(Op::SumSquares, vec![x], Tensor::scalar(s)))
    }

    /// Hash of every piecewise-linear branch taken in the forward pass (relu
    /// signs, max-pool winners). Two evaluations with equal signatures lie on
    /// the same smooth piece.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu => {
                    for v in self.nodes[node.inputs[0].0].value.data() {
                        (*v > T::zero()).hash(&mut h);
                    }
                }
                Op::MaxPool(arg) => arg.hash(&mut h),
                Op::CrossEntropy(classes) => {
                    let p = &self.nodes[node.inputs[0].0].value;
                    let k = p.shape()[1];
                    for (r, &c) in classes.iter().enumerate() {
                        (p.data()[r * k + c] > T::lit(basic::CE_EPSILON)).hash(&mut h);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Backpropagates from the scalar `loss`, adding the gradient of every
    /// reachable parameter leaf into `store`. Unreached parameters are untouched.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore<T>) -> Result<()> {
        self.check(loss).map_err(|_| Error::Graph("backward called before the forward pass recorded the loss".into()))?;
        if self.value(loss).len() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape().to_vec(), T::one())?);

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let inp = |k: usize| &self.nodes[node.inputs[k].0].value;
            let upstream: Vec<Tensor<T>> = match &node.op {
                Op::Input => vec![],
                Op::Param(pid) => {
                    store.get_mut(*pid).grad.add_assign(&dy)?;
                    vec![]
                }
                Op::Conv2d(cs) => {
                    let (dx, dk, db) = conv::conv2d_backward(inp(0), inp(1), cs, dy.data())?;
                    vec![dx, dk, db]
                }
                Op::Depthwise(cs) => {
                    let (dx, dk, db) = conv::depthwise_conv2d_backward(inp(0), inp(1), cs, dy.data())?;
                    vec![dx, dk, db]
                }
                Op::MaxPool(arg) => vec![pool::max_pool_backward(inp(0).shape(), arg, dy.data())?],
                Op::AvgPool(g) => vec![pool::avg_pool_backward(inp(0).shape(), g, dy.data())?],
                Op::GlobalAvgPool => vec![pool::global_avg_pool_backward(inp(0).shape(), dy.data())?],
                Op::Dense => {
                    let (dx, dw, db) = dense::dense_backward(inp(0), inp(1), dy.data())?;
                    vec![dx, dw, db]
                }
                Op::Relu => vec![basic::relu_backward(inp(0), dy.data())?],
                Op::Softmax => vec![basic::softmax_backward(&node.value, dy.data())?],
                Op::BatchNorm(cache) => {
                    let (dx, ds, dh) = norm::batch_norm_backward(inp(0).shape(), inp(1), cache, dy.data())?;
                    vec![dx, ds, dh]
                }
                Op::Concat(channels) => basic::split_channels(&dy, channels)?,
                Op::Add => vec![dy.clone(); node.inputs.len()],
                Op::Dropout(mask) => {
                    let data = dy.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                    vec![Tensor::new(dy.shape().to_vec(), data)?]
                }
                Op::Flatten => vec![dy.reshape(inp(0).shape().to_vec())?],
                Op::CrossEntropy(classes) => {
                    vec![basic::cross_entropy_backward(inp(0), classes, dy.data()[0])?]
                }
                Op::WeightedSum(w) => {
                    let g = dy.data()[0];
                    vec![w.map(|v| v * g)]
                }
                Op::SumSquares => {
                    let g = dy.data()[0] + dy.data()[0];
                    vec![inp(0).map(|v| v * g)]
                }
            };
            for (k, gi) in upstream.into_iter().enumerate() {
                let slot = &mut grads[node.inputs[k].0];
                match slot {
                    Some(acc) => acc.add_assign(&gi)?,
                    None => *slot = Some(gi),
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_parameter_loss_has_unit_gradient() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::scalar(3.0)).unwrap();
        let mut tape = Tape::new();
        let n = tape.param(&store, w);
        tape.backward(n, &mut store).unwrap();
        assert_eq!(store.grad(w).data(), &[1.0]);
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_value() {
        let mut store = ParamStore::<f64>::new();
        let v = store.add("v", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let n = tape.param(&store, v);
        let loss = tape.sum_squares(n).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(v).data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn add_delivers_gradient_to_each_addend() {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let n = tape.param(&store, x);
        let s = tape.add(&[n, n]).unwrap();
        assert_eq!(tape.value(s).data(), &[2.0, 4.0]);
        let g = Tensor::new(vec![2], vec![0.5, -1.5]).unwrap();
        let loss = tape.weighted_sum(s, g).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(x).data(), &[1.0, -3.0]);
    }

    #[test]
    fn unreachable_parameters_keep_zero_gradient() {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", Tensor::scalar(1.0)).unwrap();
        let b = store.add("b", Tensor::scalar(1.0)).unwrap();
        let mut tape = Tape::new();
        let na = tape.param(&store, a);
        let _nb = tape.param(&store, b);
        let loss = tape.sum_squares(na).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(b).data(), &[0.0]);
    }

    #[test]
    fn backward_errors() {
        let mut store = ParamStore::<f64>::new();
        let v = store.add("v", Tensor::zeros(vec![2]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let n = tape.param(&store, v);
        assert!(matches!(tape.backward(n, &mut store), Err(Error::Graph(_))));
        let empty = Tape::<f64>::new();
        assert!(empty.backward(n, &mut store).is_err());
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = rand::rng();
        let mut tape = Tape::<f32>::new();
        let x = tape.input(Tensor::full(vec![4], 2.0).unwrap());
        assert_eq!(tape.dropout(x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(tape.dropout(x, 0.7, Mode::Infer, &mut rng).unwrap(), x);
        assert!(tape.dropout(x, 1.0, Mode::Train, &mut rng).is_err());
    }
}
