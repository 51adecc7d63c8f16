use super::ops;
use super::Tensor;
use crate::error::{dim, Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    Sum(Var),
    Gelu(Var),
    FlipTime(Var),
    Conv1dCausal {
        input: Var,
        weight: Var,
        bias: Var,
        dilation: usize,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    GlobalAvgPoolTime(Var),
    SwapLastTwo(Var),
    SliceLast {
        input: Var,
        start: usize,
    },
    AssignLast {
        base: Var,
        value: Var,
        start: usize,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MulScalar(..) => "mul_scalar",
            Op::Sum(..) => "sum",
            Op::Gelu(..) => "gelu",
            Op::FlipTime(..) => "flip_time",
            Op::Conv1dCausal { .. } => "conv1d_causal",
            Op::Linear { .. } => "linear",
            Op::GlobalAvgPoolTime(..) => "global_avg_pool_time",
            Op::SwapLastTwo(..) => "swap_last_two",
            Op::SliceLast { .. } => "slice_last",
            Op::AssignLast { .. } => "assign_last",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Mul(a, b) | Op::MulScalar(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::Sum(a)
            | Op::Gelu(a)
            | Op::FlipTime(a)
            | Op::GlobalAvgPoolTime(a)
            | Op::SwapLastTwo(a) => vec![a],
            Op::Conv1dCausal {
                input,
                weight,
                bias,
                ..
            }
            | Op::Linear {
                input,
                weight,
                bias,
            } => vec![input, weight, bias],
            Op::SliceLast { input, .. } => vec![input],
            Op::AssignLast { base, value, .. } => vec![base, value],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![logits],
        }
    }
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Public view of one recorded operation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComputationRecord {
    pub id: usize,
    pub op: &'static str,
    pub inputs: Vec<Var>,
}

/// Append-only tape of tensor operations.
///
/// Node ids increase in construction order, so reverse id order is a valid
/// reverse topological order for the backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// Records a trainable leaf whose gradient is accumulated by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name().into()));
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn node(&self, v: Var) -> Result<&Node> {
        self.nodes
            .get(v.0)
            .ok_or_else(|| Error::Structural(format!("node {} is not on this graph", v.0)))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a parameter leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = node.grad.as_mut() {
                g.fill(0.0);
            }
        }
    }

    pub fn record(&self, v: Var) -> ComputationRecord {
        let op = &self.nodes[v.0].op;
        ComputationRecord {
            id: v.0,
            op: op.name(),
            inputs: op.inputs(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::from_parts_unchecked(x.shape().to_vec(), data);
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::from_parts_unchecked(x.shape().to_vec(), data);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let x = self.value(a);
        let data = x.data().iter().map(|p| p * factor).collect();
        let out = Tensor::from_parts_unchecked(x.shape().to_vec(), data);
        self.push(out, Op::Scale(a, factor))
    }

    /// Multiplies every element of `x` by the one-element tensor `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let factor = self.value(s).item()?;
        let xv = self.value(x);
        let data = xv.data().iter().map(|p| factor * p).collect();
        let out = Tensor::from_parts_unchecked(xv.shape().to_vec(), data);
        self.push(out, Op::MulScalar(x, s))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out = ops::gelu(self.value(x));
        self.push(out, Op::Gelu(x))
    }

    pub fn flip_time(&mut self, x: Var) -> Result<Var> {
        let out = ops::flip_time(self.value(x))?;
        self.push(out, Op::FlipTime(x))
    }

    pub fn conv1d_causal(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        dilation: usize,
    ) -> Result<Var> {
        let out = ops::conv1d_causal(
            self.value(input),
            self.value(weight),
            self.value(bias),
            dilation,
        )?;
        self.push(
            out,
            Op::Conv1dCausal {
                input,
                weight,
                bias,
                dilation,
            },
        )
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = ops::linear(self.value(input), self.value(weight), self.value(bias))?;
        self.push(
            out,
            Op::Linear {
                input,
                weight,
                bias,
            },
        )
    }

    pub fn global_avg_pool_time(&mut self, x: Var) -> Result<Var> {
        let out = ops::global_avg_pool_time(self.value(x))?;
        self.push(out, Op::GlobalAvgPoolTime(x))
    }

    pub fn swap_last_two(&mut self, x: Var) -> Result<Var> {
        let out = ops::swap_last_two(self.value(x))?;
        self.push(out, Op::SwapLastTwo(x))
    }

    /// Channels `start..start+len` of the last axis of a rank-3 tensor.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (d0, d1, d2) = self.value(x).dims3()?;
        if start + len > d2 || len == 0 {
            return dim(format!("slice {start}..{} out of last axis {d2}", start + len));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(d0 * d1 * len);
        for row in src.chunks(d2) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let out = Tensor::from_parts_unchecked(vec![d0, d1, len], out);
        self.push(out, Op::SliceLast { input: x, start })
    }

    /// Copy of `base` with last-axis channels `start..` overwritten by `value`.
    pub fn assign_last(&mut self, base: Var, value: Var, start: usize) -> Result<Var> {
        let (d0, d1, d2) = self.value(base).dims3()?;
        let (v0, v1, len) = self.value(value).dims3()?;
        if v0 != d0 || v1 != d1 || start + len > d2 {
            return dim(format!(
                "cannot assign {:?} into {:?} at {start}",
                self.value(value).shape(),
                self.value(base).shape()
            ));
        }
        let mut out = self.value(base).data().to_vec();
        for (row, src) in out.chunks_mut(d2).zip(self.value(value).data().chunks(len)) {
            row[start..start + len].copy_from_slice(src);
        }
        let out = Tensor::from_parts_unchecked(vec![d0, d1, d2], out);
        self.push(out, Op::AssignLast { base, value, start })
    }

    /// Mean over the batch of `−log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let l = self.value(logits);
        let (batch, k) = l.dims2()?;
        if labels.len() != batch {
            return dim(format!("{} labels for batch of {batch}", labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return dim(format!("label {bad} out of range for {k} classes"));
        }
        let mut loss = 0.0;
        let mut probs = Vec::with_capacity(batch * k);
        for (row, &y) in l.data().chunks(k).zip(labels) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_total = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss -= row[y] - max - log_total;
            probs.extend(row.iter().map(|v| (v - max - log_total).exp()));
        }
        loss /= batch as f64;
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    /// Reverse-mode pass from a one-element `loss`, accumulating into the
    /// gradient buffers of every parameter leaf the loss depends on.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let root = self.node(loss)?;
        if root.value.numel() != 1 {
            return dim(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            ));
        }
        if !root.requires_grad {
            return Err(Error::Structural(
                "loss does not depend on any parameter".into(),
            ));
        }

        let mut adjoints: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adjoints[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(upstream) = adjoints[id].take() else {
                continue;
            };
            if let Op::Leaf = self.nodes[id].op {
                if self.nodes[id].requires_grad {
                    let slot = self.nodes[id]
                        .grad
                        .get_or_insert_with(|| vec![0.0; upstream.len()]);
                    for (s, u) in slot.iter_mut().zip(&upstream) {
                        *s += u;
                    }
                }
                continue;
            }
            for (input, grad) in self.local_grads(id, &upstream)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match adjoints[input.0].as_mut() {
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grad) {
                            *a += g;
                        }
                    }
                    None => adjoints[input.0] = Some(grad),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Vector-Jacobian products of node `id` for each input that requires grad.
    fn local_grads(&self, id: usize, g: &[f64]) -> Result<Vec<(Var, Vec<f64>)>> {
        let node = &self.nodes[id];
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                out.push((a, g.to_vec()));
                out.push((b, g.to_vec()));
            }
            &Op::Mul(a, b) => {
                if self.wants(a) {
                    out.push((a, g.iter().zip(val(b)).map(|(u, y)| u * y).collect()));
                }
                if self.wants(b) {
                    out.push((b, g.iter().zip(val(a)).map(|(u, x)| u * x).collect()));
                }
            }
            &Op::Scale(a, factor) => out.push((a, g.iter().map(|u| u * factor).collect())),
            &Op::MulScalar(x, s) => {
                let factor = val(s)[0];
                if self.wants(x) {
                    out.push((x, g.iter().map(|u| u * factor).collect()));
                }
                if self.wants(s) {
                    let ds = g.iter().zip(val(x)).map(|(u, v)| u * v).sum();
                    out.push((s, vec![ds]));
                }
            }
            &Op::Sum(x) => out.push((x, vec![g[0]; val(x).len()])),
            &Op::Gelu(x) => out.push((
                x,
                g.iter()
                    .zip(val(x))
                    .map(|(u, &v)| u * ops::gelu_derivative(v))
                    .collect(),
            )),
            &Op::FlipTime(x) => {
                let len = self.nodes[x.0].value.shape()[2];
                let mut gx = g.to_vec();
                for row in gx.chunks_mut(len) {
                    row.reverse();
                }
                out.push((x, gx));
            }
            &Op::Conv1dCausal {
                input,
                weight,
                bias,
                dilation,
            } => {
                let (batch, c_in, len) = self.nodes[input.0].value.dims3()?;
                let (c_out, _, k) = self.nodes[weight.0].value.dims3()?;
                let x = val(input);
                let w = val(weight);
                let mut gx = vec![0.0; x.len()];
                let mut gw = vec![0.0; w.len()];
                let mut gb = vec![0.0; c_out];
                for b in 0..batch {
                    for o in 0..c_out {
                        let gr = &g[(b * c_out + o) * len..(b * c_out + o + 1) * len];
                        gb[o] += gr.iter().sum::<f64>();
                        for c in 0..c_in {
                            let base = (b * c_in + c) * len;
                            for i in 0..k {
                                let lag = i * dilation;
                                if lag >= len {
                                    break;
                                }
                                let widx = (o * c_in + c) * k + i;
                                let xr = &x[base..base + len - lag];
                                gw[widx] += gr[lag..].iter().zip(xr).map(|(u, v)| u * v).sum::<f64>();
                                let wv = w[widx];
                                for (dx, u) in gx[base..base + len - lag].iter_mut().zip(&gr[lag..]) {
                                    *dx += wv * u;
                                }
                            }
                        }
                    }
                }
                out.push((input, gx));
                out.push((weight, gw));
                out.push((bias, gb));
            }
            &Op::Linear {
                input,
                weight,
                bias,
            } => {
                let (batch, features) = self.nodes[input.0].value.dims2()?;
                let outs = self.nodes[bias.0].value.numel();
                let x = val(input);
                let w = val(weight);
                let mut gx = vec![0.0; x.len()];
                let mut gw = vec![0.0; w.len()];
                let mut gb = vec![0.0; outs];
                for b in 0..batch {
                    for o in 0..outs {
                        let u = g[b * outs + o];
                        gb[o] += u;
                        for f in 0..features {
                            gx[b * features + f] += u * w[o * features + f];
                            gw[o * features + f] += u * x[b * features + f];
                        }
                    }
                }
                out.push((input, gx));
                out.push((weight, gw));
                out.push((bias, gb));
            }
            &Op::GlobalAvgPoolTime(x) => {
                let len = self.nodes[x.0].value.shape()[2];
                let inv = 1.0 / len as f64;
                let mut gx = Vec::with_capacity(g.len() * len);
                for u in g {
                    gx.extend(std::iter::repeat_n(u * inv, len));
                }
                out.push((x, gx));
            }
            &Op::SwapLastTwo(x) => {
                let (d0, d1, d2) = node.value.dims3()?;
                let gt = Tensor::from_parts_unchecked(vec![d0, d1, d2], g.to_vec());
                out.push((x, ops::swap_last_two(&gt)?.into_data()));
            }
            &Op::SliceLast { input, start } => {
                let (_, _, full) = self.nodes[input.0].value.dims3()?;
                let len = node.value.shape()[2];
                let mut gx = vec![0.0; self.nodes[input.0].value.numel()];
                for (row, src) in gx.chunks_mut(full).zip(g.chunks(len)) {
                    row[start..start + len].copy_from_slice(src);
                }
                out.push((input, gx));
            }
            &Op::AssignLast { base, value, start } => {
                let (_, _, full) = node.value.dims3()?;
                let len = self.nodes[value.0].value.shape()[2];
                if self.wants(base) {
                    let mut gb = g.to_vec();
                    for row in gb.chunks_mut(full) {
                        row[start..start + len].fill(0.0);
                    }
                    out.push((base, gb));
                }
                if self.wants(value) {
                    let mut gv = Vec::with_capacity(self.nodes[value.0].value.numel());
                    for row in g.chunks(full) {
                        gv.extend_from_slice(&row[start..start + len]);
                    }
                    out.push((value, gv));
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let batch = labels.len();
                let k = probs.len() / batch;
                let scale = g[0] / batch as f64;
                let mut gl = probs.clone();
                for (b, &y) in labels.iter().enumerate() {
                    gl[b * k + y] -= 1.0;
                }
                gl.iter_mut().for_each(|v| *v *= scale);
                out.push((*logits, gl));
            }
        }
        Ok(out)
    }
}

fn same_shape(op: &str, x: &Tensor, y: &Tensor) -> Result<()> {
    if x.shape() != y.shape() {
        return dim(format!(
            "{op}: shapes {:?} and {:?} differ",
            x.shape(),
            y.shape()
        ));
    }
    Ok(())
}
