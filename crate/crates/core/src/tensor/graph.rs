//! Tape of eagerly evaluated tensor ops with reverse-mode backward.
//!
//! A [`Graph`] is built fresh per forward pass: constants and parameter
//! leaves go in first, every op validates shapes and computes its value
//! immediately, and `backward` walks the tape once from a scalar loss,
//! returning gradients keyed by parameter slot. Graphs are cheap; batching
//! runs one graph per sample and sums the slot gradients outside.

use super::kernels;
use super::{Scalar, Tensor, TensorError};

/// Handle to a node in one specific [`Graph`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId(usize);

enum Op {
    Const,
    Param(usize),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddRowBias(NodeId, NodeId),
    AddChannelBias(NodeId, NodeId),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    Permute3(NodeId, [usize; 3]),
    SliceAxis0 { x: NodeId, start: usize },
    ConcatAxis0(Vec<NodeId>),
    Relu(NodeId),
    Softmax(NodeId, usize),
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, eps: f64 },
    Conv2d { x: NodeId, kernel: NodeId, stride: usize, pad: usize },
    UpsampleNearest2x(NodeId),
    Embedding { table: NodeId, indices: Vec<usize> },
    Mean(NodeId),
    CrossEntropy { logits: NodeId, targets: Vec<usize>, weights: Option<Vec<f64>> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    param_slots: usize,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Graph<T> {
        Graph { nodes: Vec::new(), param_slots: 0 }
    }

    /// Leaf that does not require a gradient (inputs, positional tables).
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Const, false)
    }

    /// Leaf whose gradient is collected under `slot` by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<T>, slot: usize) -> NodeId {
        self.param_slots = self.param_slots.max(slot + 1);
        self.push(value, Op::Param(slot), true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", va.shape(), vb.shape()));
        }
        let mut out = va.clone();
        out.accumulate(vb)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("mul", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let out = self.value(x).map(|v| v * T::from_f64(factor));
        let needs = self.needs(x);
        self.push(out, Op::Scale(x, factor), needs)
    }

    /// `[m,n] + [n]`, bias broadcast over rows.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, TensorError> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let n = *vx.shape().last().unwrap_or(&0);
        if vx.rank() != 2 || vb.shape() != [n] {
            return Err(shape_err("add_row_bias", vx.shape(), vb.shape()));
        }
        let mut out = vx.clone();
        for row in out.data_mut().chunks_exact_mut(n) {
            for (o, &b) in row.iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(out, Op::AddRowBias(x, bias), needs))
    }

    /// `[c,h,w] + [c]`, bias broadcast over the spatial plane.
    pub fn add_channel_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, TensorError> {
        let (vx, vb) = (self.value(x), self.value(bias));
        if vx.rank() != 3 || vb.shape() != [vx.shape()[0]] {
            return Err(shape_err("add_channel_bias", vx.shape(), vb.shape()));
        }
        let plane = vx.shape()[1] * vx.shape()[2];
        let mut out = vx.clone();
        for (c, chunk) in out.data_mut().chunks_exact_mut(plane).enumerate() {
            let b = vb.data()[c];
            for o in chunk {
                *o += b;
            }
        }
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(out, Op::AddChannelBias(x, bias), needs))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Matmul(a, b), needs))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let out = kernels::transpose2d(self.value(x))?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::Transpose(x), needs))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, TensorError> {
        let out = self.value(x).reshaped(shape)?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::Reshape(x), needs))
    }

    pub fn permute3(&mut self, x: NodeId, perm: [usize; 3]) -> Result<NodeId, TensorError> {
        let out = permute3(self.value(x), perm)?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::Permute3(x, perm), needs))
    }

    /// Contiguous block `[start, start+len)` along axis 0.
    pub fn slice_axis0(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, TensorError> {
        let vx = self.value(x);
        let d0 = vx.shape()[0];
        if start + len > d0 || len == 0 {
            return Err(TensorError::IndexOutOfRange { index: start + len, extent: d0 });
        }
        let rest: usize = vx.shape()[1..].iter().product();
        let mut shape = vx.shape().to_vec();
        shape[0] = len;
        let data = vx.data()[start * rest..(start + len) * rest].to_vec();
        let out = Tensor::new(shape, data)?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::SliceAxis0 { x, start }, needs))
    }

    pub fn concat_axis0(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        let first = self.value(parts[0]).shape().to_vec();
        let mut d0 = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.shape()[1..] != first[1..] {
                return Err(shape_err("concat_axis0", &first, v.shape()));
            }
            d0 += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = first;
        shape[0] = d0;
        let out = Tensor::new(shape, data)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::ConcatAxis0(parts.to_vec()), needs))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(|v| v.max(T::zero()));
        let needs = self.needs(x);
        self.push(out, Op::Relu(x), needs)
    }

    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId, TensorError> {
        let out = kernels::softmax(self.value(x), axis)?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::Softmax(x, axis), needs))
    }

    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    ) -> Result<NodeId, TensorError> {
        let out = kernels::layer_norm(self.value(x), self.value(gain), self.value(bias), eps)?;
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(out, Op::LayerNorm { x, gain, bias, eps }, needs))
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId, TensorError> {
        let out = kernels::conv2d(self.value(x), self.value(kernel), stride, pad)?;
        let needs = self.needs(x) || self.needs(kernel);
        Ok(self.push(out, Op::Conv2d { x, kernel, stride, pad }, needs))
    }

    pub fn upsample_nearest_2x(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let out = kernels::upsample_nearest_2x(self.value(x))?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::UpsampleNearest2x(x), needs))
    }

    /// Row gather: `table[indices[i], :]` stacked into `[len, n]`.
    pub fn embedding(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId, TensorError> {
        let vt = self.value(table);
        if vt.rank() != 2 {
            return Err(shape_err("embedding table", vt.shape(), &[]));
        }
        let (rows, n) = (vt.shape()[0], vt.shape()[1]);
        if indices.is_empty() {
            return Err(TensorError::IndexOutOfRange { index: 0, extent: 0 });
        }
        let mut data = Vec::with_capacity(indices.len() * n);
        for &ix in indices {
            if ix >= rows {
                return Err(TensorError::IndexOutOfRange { index: ix, extent: rows });
            }
            data.extend_from_slice(&vt.data()[ix * n..(ix + 1) * n]);
        }
        let out = Tensor::new(vec![indices.len(), n], data)?;
        let needs = self.needs(table);
        Ok(self.push(out, Op::Embedding { table, indices: indices.to_vec() }, needs))
    }

    /// Mean over all elements, as a `[1]` scalar.
    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        let mut acc = T::zero();
        for &v in vx.data() {
            acc += v;
        }
        let out = Tensor::scalar(acc / T::from_f64(vx.len() as f64));
        let needs = self.needs(x);
        self.push(out, Op::Mean(x), needs)
    }

    /// Weighted-mean cross entropy from logits `[l,k]` against `targets[l]`,
    /// computed through a stable log-sum-exp. `weights` default to 1.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<NodeId, TensorError> {
        let vl = self.value(logits);
        if vl.rank() != 2 || vl.shape()[0] != targets.len() {
            return Err(shape_err("cross_entropy", vl.shape(), &[targets.len()]));
        }
        let k = vl.shape()[1];
        for &t in targets {
            if t >= k {
                return Err(TensorError::IndexOutOfRange { index: t, extent: k });
            }
        }
        if let Some(w) = weights {
            if w.len() != targets.len() || w.iter().any(|&x| x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(TensorError::InvalidShape {
                    shape: vec![w.len()],
                    reason: "weights must match targets and have positive sum",
                });
            }
        }
        let mut total = 0.0;
        let mut weight_sum = 0.0;
        for (i, (row, &t)) in vl.data().chunks_exact(k).zip(targets).enumerate() {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut sum = T::zero();
            for &v in row {
                sum += (v - max).exp();
            }
            let lse = max.as_f64() + sum.as_f64().ln();
            let w = weights.map_or(1.0, |w| w[i]);
            total += w * (lse - row[t].as_f64());
            weight_sum += w;
        }
        let out = Tensor::scalar(T::from_f64(total / weight_sum));
        let needs = self.needs(logits);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.map(|w| w.to_vec()),
            },
            needs,
        ))
    }

    /// Reverse pass from a `[1]`-shaped loss. Returns one gradient per
    /// parameter slot (`None` for slots the loss does not reach).
    pub fn backward(&self, loss: NodeId) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarOutput(self.value(loss).shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        let mut param_grads: Vec<Option<Tensor<T>>> = vec![None; self.param_slots];

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let grad = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[id].op {
                Op::Const => {}
                Op::Param(slot) => accumulate_into(&mut param_grads[*slot], grad)?,
                Op::Add(a, b) => {
                    self.send(&mut grads, *a, grad.clone())?;
                    self.send(&mut grads, *b, grad)?;
                }
                Op::Mul(a, b) => {
                    let ga = elementwise_product(&grad, self.value(*b));
                    let gb = elementwise_product(&grad, self.value(*a));
                    self.send(&mut grads, *a, ga)?;
                    self.send(&mut grads, *b, gb)?;
                }
                Op::Scale(x, factor) => {
                    let g = grad.map(|v| v * T::from_f64(*factor));
                    self.send(&mut grads, *x, g)?;
                }
                Op::AddRowBias(x, bias) => {
                    let n = self.value(*bias).len();
                    let mut gb = Tensor::zeros(&[n]);
                    for row in grad.data().chunks_exact(n) {
                        for (o, &g) in gb.data_mut().iter_mut().zip(row) {
                            *o += g;
                        }
                    }
                    self.send(&mut grads, *x, grad)?;
                    self.send(&mut grads, *bias, gb)?;
                }
                Op::AddChannelBias(x, bias) => {
                    let c = self.value(*bias).len();
                    let plane = grad.len() / c;
                    let mut gb = Tensor::zeros(&[c]);
                    for (ci, chunk) in grad.data().chunks_exact(plane).enumerate() {
                        let mut acc = T::zero();
                        for &g in chunk {
                            acc += g;
                        }
                        gb.data_mut()[ci] = acc;
                    }
                    self.send(&mut grads, *x, grad)?;
                    self.send(&mut grads, *bias, gb)?;
                }
                Op::Matmul(a, b) => {
                    if self.needs(*a) {
                        let ga = kernels::matmul_bt(&grad, self.value(*b))?;
                        self.send(&mut grads, *a, ga)?;
                    }
                    if self.needs(*b) {
                        let gb = kernels::matmul_at(self.value(*a), &grad)?;
                        self.send(&mut grads, *b, gb)?;
                    }
                }
                Op::Transpose(x) => {
                    let g = kernels::transpose2d(&grad)?;
                    self.send(&mut grads, *x, g)?;
                }
                Op::Reshape(x) => {
                    let g = grad.reshaped(self.value(*x).shape())?;
                    self.send(&mut grads, *x, g)?;
                }
                Op::Permute3(x, perm) => {
                    let g = permute3(&grad, inverse_perm3(*perm))?;
                    self.send(&mut grads, *x, g)?;
                }
                Op::SliceAxis0 { x, start } => {
                    let vx = self.value(*x);
                    let rest: usize = vx.shape()[1..].iter().product();
                    let mut g = Tensor::zeros(vx.shape());
                    let off = start * rest;
                    g.data_mut()[off..off + grad.len()].copy_from_slice(grad.data());
                    self.send(&mut grads, *x, g)?;
                }
                Op::ConcatAxis0(parts) => {
                    let mut off = 0;
                    for &p in parts.clone().iter() {
                        let len = self.value(p).len();
                        let shape = self.value(p).shape().to_vec();
                        let piece =
                            Tensor::new(shape, grad.data()[off..off + len].to_vec())?;
                        off += len;
                        self.send(&mut grads, p, piece)?;
                    }
                }
                Op::Relu(x) => {
                    let vx = self.value(*x);
                    let data = grad
                        .data()
                        .iter()
                        .zip(vx.data())
                        .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                        .collect();
                    let g = Tensor::new(vx.shape().to_vec(), data)?;
                    self.send(&mut grads, *x, g)?;
                }
                Op::Softmax(x, axis) => {
                    let g = kernels::softmax_grad(&self.nodes[id].value, &grad, *axis)?;
                    self.send(&mut grads, *x, g)?;
                }
                Op::LayerNorm { x, gain, bias, eps } => {
                    let (gx, ggain, gbias) =
                        kernels::layer_norm_grad(self.value(*x), self.value(*gain), &grad, *eps)?;
                    self.send(&mut grads, *x, gx)?;
                    self.send(&mut grads, *gain, ggain)?;
                    self.send(&mut grads, *bias, gbias)?;
                }
                Op::Conv2d { x, kernel, stride, pad } => {
                    if self.needs(*x) {
                        let g = kernels::conv2d_grad_x(
                            self.value(*x),
                            self.value(*kernel),
                            &grad,
                            *stride,
                            *pad,
                        )?;
                        self.send(&mut grads, *x, g)?;
                    }
                    if self.needs(*kernel) {
                        let g = kernels::conv2d_grad_k(
                            self.value(*x),
                            self.value(*kernel),
                            &grad,
                            *stride,
                            *pad,
                        )?;
                        self.send(&mut grads, *kernel, g)?;
                    }
                }
                Op::UpsampleNearest2x(x) => {
                    let g = kernels::upsample_nearest_2x_grad(&grad)?;
                    self.send(&mut grads, *x, g)?;
                }
                Op::Embedding { table, indices } => {
                    let vt = self.value(*table);
                    let n = vt.shape()[1];
                    let mut g = Tensor::zeros(vt.shape());
                    for (row, &ix) in grad.data().chunks_exact(n).zip(indices) {
                        let dst = &mut g.data_mut()[ix * n..(ix + 1) * n];
                        for (o, &v) in dst.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    self.send(&mut grads, *table, g)?;
                }
                Op::Mean(x) => {
                    let vx = self.value(*x);
                    let scale = grad.item() / T::from_f64(vx.len() as f64);
                    let g = Tensor::full(vx.shape(), scale);
                    self.send(&mut grads, *x, g)?;
                }
                Op::CrossEntropy { logits, targets, weights } => {
                    let vl = self.value(*logits);
                    let k = vl.shape()[1];
                    let weight_sum =
                        weights.as_ref().map_or(targets.len() as f64, |w| w.iter().sum());
                    let upstream = grad.item();
                    let mut g = kernels::softmax(vl, 1)?;
                    for (i, (row, &t)) in
                        g.data_mut().chunks_exact_mut(k).zip(targets).enumerate()
                    {
                        let w = weights.as_ref().map_or(1.0, |w| w[i]);
                        row[t] = row[t] - T::one();
                        let factor = upstream * T::from_f64(w / weight_sum);
                        for v in row.iter_mut() {
                            *v *= factor;
                        }
                    }
                    self.send(&mut grads, *logits, g)?;
                }
            }
        }
        Ok(param_grads)
    }

    fn send(
        &self,
        grads: &mut [Option<Tensor<T>>],
        to: NodeId,
        grad: Tensor<T>,
    ) -> Result<(), TensorError> {
        if !self.nodes[to.0].needs_grad {
            return Ok(());
        }
        accumulate_into(&mut grads[to.0], grad)
    }
}

fn accumulate_into<T: Scalar>(
    slot: &mut Option<Tensor<T>>,
    grad: Tensor<T>,
) -> Result<(), TensorError> {
    match slot {
        Some(existing) => existing.accumulate(&grad),
        None => {
            *slot = Some(grad);
            Ok(())
        }
    }
}

fn elementwise_product<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn inverse_perm3(perm: [usize; 3]) -> [usize; 3] {
    let mut inv = [0; 3];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

fn permute3<T: Scalar>(x: &Tensor<T>, perm: [usize; 3]) -> Result<Tensor<T>, TensorError> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(TensorError::InvalidShape {
            shape: s.to_vec(),
            reason: "permute3 expects rank 3",
        });
    }
    let mut sorted = perm;
    sorted.sort_unstable();
    if sorted != [0, 1, 2] {
        return Err(TensorError::InvalidShape {
            shape: perm.to_vec(),
            reason: "permutation must cover axes 0..3",
        });
    }
    let out_shape = [s[perm[0]], s[perm[1]], s[perm[2]]];
    let mut out = Tensor::zeros(&out_shape);
    let od = out.data_mut();
    let xd = x.data();
    let strides = [s[1] * s[2], s[2], 1];
    let mut pos = 0;
    for a in 0..out_shape[0] {
        for b in 0..out_shape[1] {
            for c in 0..out_shape[2] {
                let mut src = [0usize; 3];
                src[perm[0]] = a;
                src[perm[1]] = b;
                src[perm[2]] = c;
                od[pos] = xd[src[0] * strides[0] + src[1] * strides[1] + src[2] * strides[2]];
                pos += 1;
            }
        }
    }
    Ok(out)
}

fn shape_err(context: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch { context, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
}
