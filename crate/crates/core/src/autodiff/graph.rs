use crate::error::{Error, Result};
use crate::tensor::ops::{
    self, check_broadcast, conv2d_backward, maxpool2d_backward, maxpool2d_with_argmax,
    upsample_nearest_backward, ElementwiseKind,
};
use crate::tensor::{ConvSpec, Element, Shape, Tensor};

/// Handle to a node inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        spec: ConvSpec,
    },
    MaxPool {
        input: NodeId,
        argmax: Vec<u32>,
    },
    Upsample {
        input: NodeId,
        factor: usize,
    },
    Concat(Vec<NodeId>),
    Add {
        a: NodeId,
        b: NodeId,
        broadcast: bool,
    },
    Mul {
        a: NodeId,
        b: NodeId,
        broadcast: bool,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    StopGradient(NodeId),
    Binarize(NodeId),
    Bce {
        pred: NodeId,
        target: NodeId,
    },
    Sum(NodeId),
    WeightedSum(Vec<(NodeId, f64)>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool { .. } => "maxpool2d",
            Op::Upsample { .. } => "upsample",
            Op::Concat(_) => "concat",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::StopGradient(_) => "stop_gradient",
            Op::Binarize(_) => "binarize",
            Op::Bce { .. } => "bce",
            Op::Sum(_) => "sum",
            Op::WeightedSum(_) => "weighted_sum",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            } => vec![*input, *weight, *bias],
            Op::MaxPool { input, .. } | Op::Upsample { input, .. } => vec![*input],
            Op::Concat(parts) => parts.clone(),
            Op::Add { a, b, .. } | Op::Mul { a, b, .. } => vec![*a, *b],
            Op::Relu(x) | Op::Sigmoid(x) | Op::StopGradient(x) | Op::Binarize(x) | Op::Sum(x) => {
                vec![*x]
            }
            Op::Bce { pred, target } => vec![*pred, *target],
            Op::WeightedSum(terms) => terms.iter().map(|(id, _)| *id).collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    op: Op,
    requires_grad: bool,
}

/// Probability clamp used by [`Graph::bce`].
pub const BCE_EPS: f64 = 1e-7;

/// An append-only record of tensor computations supporting reverse-mode
/// differentiation.
///
/// Nodes can only reference nodes created before them, so the graph is
/// acyclic by construction. Gradients accumulate across repeated calls to
/// [`backward`](Graph::backward) until [`zero_grad`](Graph::zero_grad).
#[derive(Debug, Clone)]
pub struct Graph<T: Element = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, id: NodeId) -> Result<&Node<T>> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| Error::Graph(format!("node {} does not belong to this graph", id.0)))
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::Numeric(format!(
                "{} produced a non-finite value",
                op.name()
            )));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::StopGradient(_) | Op::Binarize(_) => false,
            other => other
                .inputs()
                .iter()
                .any(|id| self.nodes[id.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// A leaf; gradients flow into it only when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op: Op::Leaf,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Accumulated gradient, `None` if nothing has flowed into `id` yet.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Accumulated gradient, or zeros shaped like the node's value.
    pub fn grad_or_zeros(&self, id: NodeId) -> Tensor<T> {
        self.grad(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.value(id).shape()))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        spec: ConvSpec,
    ) -> Result<NodeId> {
        let v = ops::conv2d(
            &self.node(input)?.value,
            &self.node(weight)?.value,
            &self.node(bias)?.value,
            &spec,
        )?;
        self.push(
            v,
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            },
        )
    }

    pub fn maxpool2d(
        &mut self,
        input: NodeId,
        k: usize,
        stride: usize,
        same_padding: bool,
    ) -> Result<NodeId> {
        let (v, argmax) = maxpool2d_with_argmax(&self.node(input)?.value, k, stride, same_padding)?;
        self.push(v, Op::MaxPool { input, argmax })
    }

    pub fn upsample_nearest(&mut self, input: NodeId, factor: usize) -> Result<NodeId> {
        let v = ops::upsample_nearest(&self.node(input)?.value, factor)?;
        self.push(v, Op::Upsample { input, factor })
    }

    pub fn concat_channels(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values = parts
            .iter()
            .map(|&p| self.node(p).map(|n| &n.value))
            .collect::<Result<Vec<_>>>()?;
        let v = ops::concat_channels(&values)?;
        self.push(v, Op::Concat(parts.to_vec()))
    }

    pub fn elementwise(
        &mut self,
        kind: ElementwiseKind,
        a: NodeId,
        b: Option<NodeId>,
    ) -> Result<NodeId> {
        let av = &self.node(a)?.value;
        let bv = b.map(|b| self.node(b).map(|n| &n.value)).transpose()?;
        let v = ops::elementwise(kind, av, bv)?;
        let broadcast = match bv {
            Some(bv) => check_broadcast(av.shape(), bv.shape())?,
            None => false,
        };
        let op = match (kind, b) {
            (ElementwiseKind::Add, Some(b)) => Op::Add { a, b, broadcast },
            (ElementwiseKind::Mul, Some(b)) => Op::Mul { a, b, broadcast },
            (ElementwiseKind::Relu, None) => Op::Relu(a),
            (ElementwiseKind::Sigmoid, None) => Op::Sigmoid(a),
            _ => unreachable!("operand count validated by ops::elementwise"),
        };
        self.push(v, op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(ElementwiseKind::Add, a, Some(b))
    }

    /// Product; `b` may be a single-channel mask broadcast over `a`'s channels.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(ElementwiseKind::Mul, a, Some(b))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.elementwise(ElementwiseKind::Relu, x, None)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.elementwise(ElementwiseKind::Sigmoid, x, None)
    }

    /// Identity in the forward pass; contributes nothing in the backward pass.
    pub fn stop_gradient(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.node(x)?.value.clone();
        self.push(v, Op::StopGradient(x))
    }

    /// `1.0` where `x >= threshold`, else `0.0`. Not differentiable: the
    /// result never requires a gradient.
    pub fn binarize(&mut self, x: NodeId, threshold: f64) -> Result<NodeId> {
        let v = binarize(&self.node(x)?.value, threshold)?;
        self.push(v, Op::Binarize(x))
    }

    /// Mean binary cross-entropy over every element of `pred`.
    ///
    /// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]`; the backward
    /// pass evaluates `(p - y) / (p (1 - p)) / N` at the clamped `p`.
    pub fn bce(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let p = &self.node(pred)?.value;
        let y = &self.node(target)?.value;
        if p.shape() != y.shape() {
            return Err(Error::Shape(format!(
                "bce prediction {} and target {} differ",
                p.shape(),
                y.shape()
            )));
        }
        let loss = crate::loss::bce_value(p, y)?;
        self.push(Tensor::scalar(T::from_f64(loss)), Op::Bce { pred, target })
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.node(x)?.value.sum();
        self.push(Tensor::scalar(T::from_f64(s)), Op::Sum(x))
    }

    /// `Σ wᵢ·xᵢ` over scalar nodes, accumulated in 64 bits.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let mut acc = 0.0f64;
        for &(id, w) in terms {
            let v = &self.node(id)?.value;
            acc += w * v.item()?.as_f64();
        }
        self.push(Tensor::scalar(T::from_f64(acc)), Op::WeightedSum(terms.to_vec()))
    }

    /// Back-propagate from a scalar node, adding `∂loss/∂node` into the
    /// stored gradient of every reachable node that requires one.
    ///
    /// A [`bce`](Graph::bce) of a sigmoid node sends its gradient straight to
    /// the sigmoid's input, so the probability node's stored gradient leaves
    /// that term out.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let shape = self.node(loss)?.value.shape();
        if shape != Shape::scalar() {
            return Err(Error::Contract(format!(
                "backward needs a (1, 1, 1, 1) loss, got {shape}"
            )));
        }
        let mut pending: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        pending[loss.0] = Some(Tensor::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = pending[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            for input in self.nodes[idx].op.inputs() {
                if input.0 >= idx {
                    return Err(Error::Graph(format!(
                        "cycle: node {idx} consumes node {}",
                        input.0
                    )));
                }
            }
            for (input, contribution) in self.local_grads(idx, &g)? {
                accumulate(&mut pending[input.0], contribution)?;
            }
            let node = &mut self.nodes[idx];
            match node.grad.as_mut() {
                Some(acc) => acc.add_assign(&g)?,
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `idx` for every input that needs one.
    fn local_grads(&self, idx: usize, g: &Tensor<T>) -> Result<Vec<(NodeId, Tensor<T>)>> {
        let wants = |id: NodeId| self.nodes[id.0].requires_grad;
        let val = |id: NodeId| &self.nodes[id.0].value;
        let mut out = Vec::new();
        match &self.nodes[idx].op {
            Op::Leaf | Op::StopGradient(_) | Op::Binarize(_) => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            } => {
                let grads = conv2d_backward(val(*input), val(*weight), spec, g, wants(*input))?;
                if let Some(gi) = grads.input {
                    out.push((*input, gi));
                }
                if wants(*weight) {
                    out.push((*weight, grads.weight));
                }
                if wants(*bias) {
                    let bshape = val(*bias).shape();
                    out.push((*bias, Tensor::from_vec(bshape, grads.bias.into_data())?));
                }
            }
            Op::MaxPool { input, argmax } => {
                if wants(*input) {
                    let gi = maxpool2d_backward(
                        val(*input).shape(),
                        self.nodes[idx].value.shape(),
                        argmax,
                        g,
                    )?;
                    out.push((*input, gi));
                }
            }
            Op::Upsample { input, factor } => {
                if wants(*input) {
                    out.push((
                        *input,
                        upsample_nearest_backward(val(*input).shape(), *factor, g)?,
                    ));
                }
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let c = val(p).shape().c;
                    if wants(p) {
                        out.push((p, g.slice_channels(start, start + c)?));
                    }
                    start += c;
                }
            }
            Op::Add { a, b, broadcast } => {
                if wants(*a) {
                    out.push((*a, g.clone()));
                }
                if wants(*b) {
                    let gb = if *broadcast {
                        channel_sum(g)
                    } else {
                        g.clone()
                    };
                    out.push((*b, gb));
                }
            }
            Op::Mul { a, b, broadcast } => {
                if wants(*a) {
                    out.push((*a, ops::elementwise(ElementwiseKind::Mul, g, Some(val(*b)))?));
                }
                if wants(*b) {
                    let full = ops::elementwise(ElementwiseKind::Mul, g, Some(val(*a)))?;
                    out.push((*b, if *broadcast { channel_sum(&full) } else { full }));
                }
            }
            Op::Relu(x) => {
                if wants(*x) {
                    let gx = g
                        .data()
                        .iter()
                        .zip(val(*x).data())
                        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                        .collect();
                    out.push((*x, Tensor::from_vec(g.shape(), gx)?));
                }
            }
            Op::Sigmoid(x) => {
                if wants(*x) {
                    let s = &self.nodes[idx].value;
                    let gx = g
                        .data()
                        .iter()
                        .zip(s.data())
                        .map(|(&g, &s)| g * s * (T::one() - s))
                        .collect();
                    out.push((*x, Tensor::from_vec(g.shape(), gx)?));
                }
            }
            Op::Bce { pred, target } => {
                if let Op::Sigmoid(z) = self.nodes[pred.0].op {
                    // through the sigmoid in one step: (p - y) / N stays
                    // alive where p(1 - p) underflows
                    if wants(z) {
                        let upstream = g.item()?.as_f64();
                        let p = val(*pred);
                        let n = p.numel() as f64;
                        let gz = p
                            .data()
                            .iter()
                            .zip(val(*target).data())
                            .map(|(&p, &y)| T::from_f64(upstream * (p.as_f64() - y.as_f64()) / n))
                            .collect();
                        out.push((z, Tensor::from_vec(p.shape(), gz)?));
                    }
                } else if wants(*pred) {
                    let upstream = g.item()?.as_f64();
                    let p = val(*pred);
                    let y = val(*target);
                    let n = p.numel() as f64;
                    let gp = p
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&p, &y)| {
                            let p = p.as_f64().clamp(BCE_EPS, 1.0 - BCE_EPS);
                            T::from_f64(upstream * (p - y.as_f64()) / (p * (1.0 - p)) / n)
                        })
                        .collect();
                    out.push((*pred, Tensor::from_vec(p.shape(), gp)?));
                }
            }
            Op::Sum(x) => {
                if wants(*x) {
                    out.push((*x, Tensor::full(val(*x).shape(), g.item()?)));
                }
            }
            Op::WeightedSum(terms) => {
                let upstream = g.item()?.as_f64();
                for &(id, w) in terms {
                    if wants(id) {
                        out.push((id, Tensor::scalar(T::from_f64(w * upstream))));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn accumulate<T: Element>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Sum over channels, keeping a single channel.
fn channel_sum<T: Element>(t: &Tensor<T>) -> Tensor<T> {
    let s = t.shape();
    let plane = s.plane();
    let mut out = vec![T::zero(); s.n * plane];
    for n in 0..s.n {
        let dst = &mut out[n * plane..(n + 1) * plane];
        for c in 0..s.c {
            let base = (n * s.c + c) * plane;
            for (d, &v) in dst.iter_mut().zip(&t.data()[base..base + plane]) {
                *d = *d + v;
            }
        }
    }
    Tensor::from_vec(Shape { c: 1, ..s }, out).expect("channel_sum shape")
}

/// Threshold a probability map: `1.0` where `p >= threshold`, else `0.0`.
pub fn binarize<T: Element>(prob: &Tensor<T>, threshold: f64) -> Result<Tensor<T>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Spec(format!(
            "binarization threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let t = T::from_f64(threshold);
    Ok(prob.map(|p| if p >= t { T::one() } else { T::zero() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(g: &mut Graph<f64>, v: f64) -> NodeId {
        g.param(Tensor::scalar(v))
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut g = Graph::new();
        let x = scalar(&mut g, 0.0);
        let y = g.sigmoid(x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item().unwrap(), 0.25);
    }

    #[test]
    fn bce_of_sigmoid_reaches_saturated_logits() {
        let z = [-120.0, -3.0, 0.5, 40.0];
        let y = [1.0, 0.0, 1.0, 0.0];
        let mut g = Graph::<f64>::new();
        let zi = g.param(Tensor::new([1, 1, 1, 4], z.to_vec()).unwrap());
        let p = g.sigmoid(zi).unwrap();
        let yi = g.constant(Tensor::new([1, 1, 1, 4], y.to_vec()).unwrap());
        let l = g.bce(p, yi).unwrap();
        g.backward(l).unwrap();
        let got = g.grad(zi).unwrap().data().to_vec();
        for i in 0..4 {
            let s = 1.0 / (1.0 + (-z[i]).exp());
            assert!((got[i] - (s - y[i]) / 4.0).abs() < 1e-15, "{i}: {}", got[i]);
        }
        // a wrong-side saturated pixel still pulls with full strength
        assert!((got[0] + 0.25).abs() < 1e-15 && (got[3] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_then_bce_passes_grad_check() {
        let target = Tensor::new([1, 1, 2, 3], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let x = Tensor::new([1, 1, 2, 3], vec![-2.0, -0.3, 0.7, 1.5, 0.1, 2.5]).unwrap();
        let r = crate::autodiff::grad_check(
            move |g: &mut Graph<f64>, x| {
                let p = g.sigmoid(x)?;
                let t = g.constant(target.clone());
                g.bce(p, t)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-7, "{r:?}");
    }

    #[test]
    fn product_rule() {
        let mut g = Graph::new();
        let a = scalar(&mut g, 2.0);
        let b = scalar(&mut g, 3.0);
        let p = g.mul(a, b).unwrap();
        let s = g.sum(p).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap().item().unwrap(), 3.0);
        assert_eq!(g.grad(b).unwrap().item().unwrap(), 2.0);
    }

    #[test]
    fn stop_gradient_freezes_one_factor() {
        let mut g = Graph::new();
        let y = scalar(&mut g, 2.0);
        let frozen = g.stop_gradient(y).unwrap();
        let p = g.mul(y, frozen).unwrap();
        let s = g.sum(p).unwrap();
        g.backward(s).unwrap();
        // d/dy [y * c] with c = y held constant
        assert_eq!(g.grad(y).unwrap().item().unwrap(), 2.0);
    }

    #[test]
    fn stop_gradient_alone_yields_zero_grad() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new([1, 1, 1, 3], vec![1.0, -2.0, 0.5]).unwrap());
        let s = g.stop_gradient(x).unwrap();
        assert!(g.value(s).bitwise_eq(g.value(x)));
        let total = g.sum(s).unwrap();
        g.backward(total).unwrap();
        assert_eq!(g.grad_or_zeros(x).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn repeated_use_accumulates() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new([1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn second_backward_doubles() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new([1, 2, 2, 2], (0..8).map(|v| v as f64 * 0.3 - 1.0).collect()).unwrap());
        let s = g.sigmoid(x).unwrap();
        let m = g.mul(s, x).unwrap();
        let l = g.sum(m).unwrap();
        g.backward(l).unwrap();
        let once = g.grad(x).unwrap().clone();
        g.backward(l).unwrap();
        let twice = g.grad(x).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_and_foreign_nodes() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::zeros(Shape::new(1, 1, 2, 2).unwrap()));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
        assert!(matches!(g.backward(NodeId(17)), Err(Error::Graph(_))));
        assert!(matches!(g.relu(NodeId(17)), Err(Error::Graph(_))));
    }

    #[test]
    fn maxpool_routes_to_first_maximum() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::new([1, 1, 2, 2], vec![5.0, 5.0, 5.0, 1.0]).unwrap());
        let p = g.maxpool2d(x, 2, 2, false).unwrap();
        let s = g.sum(p).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn binarize_examples() {
        let p = Tensor::new([1, 1, 1, 3], vec![0.4f32, 0.5, 0.6]).unwrap();
        let b = binarize(&p, 0.5).unwrap();
        assert_eq!(b.data(), &[0.0, 1.0, 1.0]);
        assert_eq!(binarize(&b, 0.5).unwrap(), b);
        let z = Tensor::<f32>::zeros(Shape::new(1, 1, 3, 3).unwrap());
        assert_eq!(binarize(&z, 0.01).unwrap(), z);
        assert!(matches!(binarize(&p, 1.0), Err(Error::Spec(_))));
        assert!(matches!(binarize(&p, 0.0), Err(Error::Spec(_))));
    }

    #[test]
    fn binarized_nodes_do_not_require_grad() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::full(Shape::new(1, 1, 2, 2).unwrap(), 0.7));
        let b = g.binarize(x, 0.5).unwrap();
        assert!(!g.requires_grad(b));
        let m = g.mul(x, b).unwrap();
        assert!(g.requires_grad(m));
    }
}
