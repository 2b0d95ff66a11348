use std::borrow::Cow;

use super::kernels as k;
use super::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Pad { x: Var, pad: usize },
    Conv { x: Var, w: Var, b: Var },
    Relu(Var),
    MaxPool { x: Var, argmax: Vec<u32> },
    Upsample(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Reshape(Var),
    Transpose(Var),
    MatMul(Var, Var),
    Softmax(Var),
    MeanVarNorm { x: Var, inv_std: Vec<f64> },
    ChannelMean(Var),
    ChannelStd { x: Var },
    MeanSquare(Var),
    L2Norm(Var),
}

struct Node<'t> {
    value: Cow<'t, Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Epsilon added to variances before taking square roots.
pub const VAR_EPS: f64 = 1e-5;

/// A tape of operations. Nodes are appended in evaluation order, so the
/// node list is already topologically sorted for the backward sweep.
///
/// Leaves may borrow their tensors (`'t`), which lets many graphs share one
/// immutable weight set without copying it.
#[derive(Default)]
pub struct Graph<'t> {
    nodes: Vec<Node<'t>>,
}

/// Gradients of a scalar root with respect to every node that required them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<'t> Graph<'t> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'t, Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.push(Cow::Owned(value), op, needs_grad)
    }

    /// Owned leaf.
    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, requires_grad)
    }

    /// Borrowed leaf, typically a network weight.
    pub fn param(&mut self, value: &'t Tensor, requires_grad: bool) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn pad_reflect(&mut self, x: Var, pad: usize) -> Var {
        let out = k::pad_reflect(self.value(x), pad);
        self.derived(out, Op::Pad { x, pad }, &[x])
    }

    /// Stride-1 valid convolution; pad the input first for "same" output.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let out = k::conv2d(self.value(x), self.value(w), self.value(b));
        self.derived(out, Op::Conv { x, w, b }, &[x, w, b])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = v.max(0.0);
        }
        self.derived(out, Op::Relu(x), &[x])
    }

    pub fn max_pool2(&mut self, x: Var) -> Var {
        let (out, argmax) = k::max_pool2(self.value(x));
        self.derived(out, Op::MaxPool { x, argmax }, &[x])
    }

    pub fn upsample2(&mut self, x: Var) -> Var {
        let out = k::upsample2(self.value(x));
        self.derived(out, Op::Upsample(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.derived(out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "sub shape mismatch");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(av.shape().to_vec(), data);
        self.derived(out, Op::Sub(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let mut out = self.value(x).clone();
        out.scale_in_place(factor);
        self.derived(out, Op::Scale(x, factor), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let out = self.value(x).clone().reshape(shape);
        self.derived(out, Op::Reshape(x), &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = k::transpose(self.value(x));
        self.derived(out, Op::Transpose(x), &[x])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = k::matmul(self.value(a), self.value(b));
        self.derived(out, Op::MatMul(a, b), &[a, b])
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = k::softmax_rows(self.value(x));
        self.derived(out, Op::Softmax(x), &[x])
    }

    /// Per-channel `(x - mean) / sqrt(var + eps)` over spatial positions.
    pub fn mean_var_norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (_, h, w) = xv.dims3();
        let (means, vars) = k::channel_stats(xv);
        let inv_std: Vec<f64> = vars.iter().map(|v| 1.0 / (v + VAR_EPS).sqrt()).collect();
        let mut out = xv.clone();
        for (ch, plane) in out.data_mut().chunks_exact_mut(h * w).enumerate() {
            for v in plane {
                *v = (*v - means[ch]) * inv_std[ch];
            }
        }
        self.derived(out, Op::MeanVarNorm { x, inv_std }, &[x])
    }

    /// `(c)` vector of spatial means.
    pub fn channel_mean(&mut self, x: Var) -> Var {
        let (means, _) = k::channel_stats(self.value(x));
        let out = Tensor::new(vec![means.len()], means);
        self.derived(out, Op::ChannelMean(x), &[x])
    }

    /// `(c)` vector of `sqrt(var + eps)`.
    pub fn channel_std(&mut self, x: Var) -> Var {
        let (_, vars) = k::channel_stats(self.value(x));
        let stds: Vec<f64> = vars.iter().map(|v| (v + VAR_EPS).sqrt()).collect();
        let out = Tensor::new(vec![stds.len()], stds);
        self.derived(out, Op::ChannelStd { x }, &[x])
    }

    /// Scalar mean of squared entries.
    pub fn mean_square(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let ms = xv.data().iter().map(|v| v * v).sum::<f64>() / xv.len() as f64;
        self.derived(Tensor::scalar(ms), Op::MeanSquare(x), &[x])
    }

    /// Scalar Euclidean norm.
    pub fn l2_norm(&mut self, x: Var) -> Var {
        let n = self.value(x).data().iter().map(|v| v * v).sum::<f64>().sqrt();
        self.derived(Tensor::scalar(n), Op::L2Norm(x), &[x])
    }

    /// Mean squared difference between two same-shaped nodes.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        self.mean_square(d)
    }

    /// Sum of scalar nodes; `None` for an empty list.
    pub fn sum(&mut self, terms: &[Var]) -> Option<Var> {
        let (first, rest) = terms.split_first()?;
        Some(rest.iter().fold(*first, |acc, t| self.add(acc, *t)))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward root must be a scalar");
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(Tensor::new(self.value(root).shape().to_vec(), vec![1.0]));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node<'t>, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Pad { x, pad } => {
                let (_, h, w) = self.value(*x).dims3();
                self.accumulate(grads, *x, k::pad_reflect_backward(g, *pad, h, w));
            }
            Op::Conv { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                if self.wants(*x) {
                    let (_, h, wd) = xv.dims3();
                    self.accumulate(grads, *x, k::conv2d_backward_input(g, wv, h, wd));
                }
                if self.wants(*w) || self.wants(*b) {
                    let (dw, db) = k::conv2d_backward_params(g, xv, wv.shape()[2]);
                    self.accumulate(grads, *w, dw);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Relu(x) => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(gv, yv)| if *yv > 0.0 { *gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), data));
            }
            Op::MaxPool { x, argmax } => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, k::max_pool2_backward(g, argmax, &shape));
            }
            Op::Upsample(x) => self.accumulate(grads, *x, k::upsample2_backward(g)),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                let mut neg = g.clone();
                neg.scale_in_place(-1.0);
                self.accumulate(grads, *b, neg);
            }
            Op::Scale(x, f) => {
                let mut d = g.clone();
                d.scale_in_place(*f);
                self.accumulate(grads, *x, d);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, g.clone().reshape(shape));
            }
            Op::Transpose(x) => self.accumulate(grads, *x, k::transpose(g)),
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let bt = k::transpose(self.value(*b));
                    self.accumulate(grads, *a, k::matmul(g, &bt));
                }
                if self.wants(*b) {
                    let at = k::transpose(self.value(*a));
                    self.accumulate(grads, *b, k::matmul(&at, g));
                }
            }
            Op::Softmax(x) => {
                self.accumulate(grads, *x, k::softmax_rows_backward(g, &node.value));
            }
            Op::MeanVarNorm { x, inv_std } => {
                // dx = inv_std * (dy - mean(dy) - y * mean(dy * y))
                let y = &node.value;
                let (_, h, w) = y.dims3();
                let n = (h * w) as f64;
                let mut out = vec![0.0; y.len()];
                let planes = out
                    .chunks_exact_mut(h * w)
                    .zip(g.data().chunks_exact(h * w))
                    .zip(y.data().chunks_exact(h * w));
                for (ch, ((o, gp), yp)) in planes.enumerate() {
                    let mean_g = gp.iter().sum::<f64>() / n;
                    let mean_gy = gp.iter().zip(yp).map(|(a, b)| a * b).sum::<f64>() / n;
                    for ((ov, gv), yv) in o.iter_mut().zip(gp).zip(yp) {
                        *ov = inv_std[ch] * (gv - mean_g - yv * mean_gy);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(y.shape().to_vec(), out));
            }
            Op::ChannelMean(x) => {
                let xv = self.value(*x);
                let (c, h, w) = xv.dims3();
                let n = (h * w) as f64;
                let mut out = vec![0.0; c * h * w];
                for (ch, plane) in out.chunks_exact_mut(h * w).enumerate() {
                    plane.fill(g.data()[ch] / n);
                }
                self.accumulate(grads, *x, Tensor::new(vec![c, h, w], out));
            }
            Op::ChannelStd { x } => {
                // d std / dx_k = (x_k - mean) / (n * std)
                let xv = self.value(*x);
                let (c, h, w) = xv.dims3();
                let n = (h * w) as f64;
                let (means, _) = k::channel_stats(xv);
                let stds = node.value.data();
                let mut out = vec![0.0; c * h * w];
                let planes = out.chunks_exact_mut(h * w).zip(xv.data().chunks_exact(h * w));
                for (ch, (o, xp)) in planes.enumerate() {
                    let f = g.data()[ch] / (n * stds[ch]);
                    for (ov, xk) in o.iter_mut().zip(xp) {
                        *ov = f * (xk - means[ch]);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![c, h, w], out));
            }
            Op::MeanSquare(x) => {
                let xv = self.value(*x);
                let f = 2.0 * g.item() / xv.len() as f64;
                let data = xv.data().iter().map(|v| f * v).collect();
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), data));
            }
            Op::L2Norm(x) => {
                let xv = self.value(*x);
                let norm = node.value.item();
                let f = if norm > 0.0 { g.item() / norm } else { 0.0 };
                let data = xv.data().iter().map(|v| f * v).collect();
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), data));
            }
        }
    }
}
