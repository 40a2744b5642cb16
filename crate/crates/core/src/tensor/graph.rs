//! Reverse-mode automatic differentiation over a recorded op tape.
//!
//! A [`Graph`] owns every intermediate value of one forward pass. Ops append
//! nodes; [`Graph::backward`] replays them once in reverse topological order
//! (creation order is already topological) and returns gradients keyed by
//! parameter name. Forward execution is single-threaded and bitwise
//! deterministic for fixed inputs.

use std::collections::HashMap;

use crate::error::{MatError, Result};
use crate::tensor::data::{strides, Tensor};
use crate::tensor::kernels::{self, ConvSpec};
use crate::tensor::param::ParamStore;
use crate::tensor::scalar::Scalar;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId(usize);

/// Gradients keyed by parameter name, in sorted order.
pub type GradMap<S> = std::collections::BTreeMap<String, Tensor<S>>;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddScalar(NodeId),
    MulScalar(NodeId, f64),
    Neg(NodeId),
    Exp(NodeId),
    Abs(NodeId),
    Silu(NodeId),
    Sigmoid(NodeId),
    Matmul {
        a: NodeId,
        b: NodeId,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv3d {
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
        spec: ConvSpec,
    },
    GroupNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        groups: usize,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        rows: usize,
        cols: usize,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Softmax {
        x: NodeId,
        rows: usize,
        cols: usize,
    },
    SumAll(NodeId),
    MeanAll(NodeId),
    Concat {
        inputs: Vec<NodeId>,
        axis: usize,
    },
    Narrow {
        x: NodeId,
        axis: usize,
        start: usize,
    },
    Reshape(NodeId),
    Permute {
        x: NodeId,
        perm: Vec<usize>,
    },
    RepeatAxis {
        x: NodeId,
        axis: usize,
    },
    Upsample2x(NodeId),
    AddBias {
        x: NodeId,
        bias: NodeId,
        axis: usize,
    },
    Embedding {
        table: NodeId,
        ids: Vec<usize>,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op,
    requires_grad: bool,
    param: Option<String>,
}

/// One forward computation with its tape.
pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
    param_nodes: HashMap<String, NodeId>,
    grad_enabled: bool,
    consumed: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            grad_enabled: true,
            consumed: false,
        }
    }

    /// A graph that never tracks gradients (inference mode).
    pub fn inference() -> Self {
        Graph {
            grad_enabled: false,
            ..Graph::new()
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor<S>, op: Op, requires_grad: bool) -> NodeId {
        let requires_grad = requires_grad && self.grad_enabled;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor<S>) -> NodeId {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf for a named parameter. Repeated requests for the same name return
    /// the same node, so gradients accumulate correctly when a parameter is
    /// used in several places. Frozen parameters track no gradient.
    pub fn param(&mut self, store: &ParamStore<S>, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.param_nodes.get(name) {
            return Ok(id);
        }
        let p = store.get(name)?;
        let id = self.push(p.tensor.clone(), Op::Leaf, !p.frozen);
        self.nodes[id.0].param = Some(name.to_string());
        self.param_nodes.insert(name.to_string(), id);
        Ok(id)
    }

    fn binary_same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(MatError::shape(self.shape(a), self.shape(b), what));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "sub")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x - y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let cv = S::from_f64(c);
        let data = self.value(x).data().iter().map(|&v| v + cv).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).unwrap();
        let rg = self.rg(x);
        self.push(t, Op::AddScalar(x), rg)
    }

    pub fn mul_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let cv = S::from_f64(c);
        let data = self.value(x).data().iter().map(|&v| v * cv).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).unwrap();
        let rg = self.rg(x);
        self.push(t, Op::MulScalar(x, c), rg)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data().iter().map(|&v| -v).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).unwrap();
        let rg = self.rg(x);
        self.push(t, Op::Neg(x), rg)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data().iter().map(|&v| v.exp()).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).unwrap();
        let rg = self.rg(x);
        self.push(t, Op::Exp(x), rg)
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data().iter().map(|&v| v.abs()).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).unwrap();
        let rg = self.rg(x);
        self.push(t, Op::Abs(x), rg)
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| v * sigmoid_s(v))
            .collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).unwrap();
        let rg = self.rg(x);
        self.push(t, Op::Silu(x), rg)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let data = self.value(x).data().iter().map(|&v| sigmoid_s(v)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).unwrap();
        let rg = self.rg(x);
        self.push(t, Op::Sigmoid(x), rg)
    }

    /// Standard matrix product of 2-D tensors [m,k] x [k,n].
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 {
            return Err(MatError::Dimension(format!(
                "matmul needs 2-D operands, got {sa:?} x {sb:?}"
            )));
        }
        if sa[1] != sb[0] {
            return Err(MatError::shape(sa, sb, "matmul inner dimension"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let t = Tensor::new(vec![m, n], data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Matmul { a, b, m, k, n }, rg))
    }

    /// 3D convolution with causal temporal padding (`kt-1` zeros on the past
    /// side) and symmetric "same"-style spatial padding. Output frame `t`
    /// depends only on input frames `0..=t*st`.
    pub fn conv3d_causal(
        &mut self,
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
        stride: (usize, usize, usize),
    ) -> Result<NodeId> {
        let kt = self.shape(w).get(2).copied().unwrap_or(0);
        self.conv3d_inner(x, w, bias, stride, kt.saturating_sub(1))
    }

    /// Windowed temporal reduction: a conv with `kt == st` and no temporal
    /// padding, so output frame `j` aggregates exactly input frames
    /// `j*st ..= j*st+st-1`. Used to collapse the PBR frames into one latent
    /// frame.
    pub fn conv3d_merge(
        &mut self,
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
        stride: (usize, usize, usize),
    ) -> Result<NodeId> {
        let sw = self.shape(w);
        if sw.len() == 5 && sw[2] != stride.0 {
            return Err(MatError::Dimension(format!(
                "merge conv needs kt == temporal stride, got kt={} st={}",
                sw[2], stride.0
            )));
        }
        self.conv3d_inner(x, w, bias, stride, 0)
    }

    fn conv3d_inner(
        &mut self,
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
        stride: (usize, usize, usize),
        pad_t: usize,
    ) -> Result<NodeId> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 4 || sw.len() != 5 {
            return Err(MatError::Dimension(format!(
                "conv3d needs x[C,T,H,W] and w[Co,C,kt,kh,kw], got {sx:?} and {sw:?}"
            )));
        }
        if sx.iter().any(|&d| d == 0) || sw.iter().any(|&d| d == 0) {
            return Err(MatError::Dimension(format!(
                "conv3d zero-size dimension: x {sx:?} w {sw:?}"
            )));
        }
        if sx[0] != sw[1] {
            return Err(MatError::shape(sw, sx, "conv3d channel count"));
        }
        if sw[2] > sx[1] + pad_t {
            return Err(MatError::Dimension(format!(
                "temporal kernel {} exceeds padded length {}",
                sw[2],
                sx[1] + pad_t
            )));
        }
        let spec = ConvSpec {
            ci: sx[0],
            co: sw[0],
            kt: sw[2],
            kh: sw[3],
            kw: sw[4],
            st: stride.0,
            sh: stride.1,
            sw: stride.2,
            pad_t,
            in_t: sx[1],
            in_h: sx[2],
            in_w: sx[3],
        };
        if let Some(b) = bias {
            if self.shape(b) != [spec.co] {
                return Err(MatError::shape(&[spec.co], self.shape(b), "conv3d bias"));
            }
        }
        let col = kernels::im2col(self.value(x).data(), &spec);
        let mut out = kernels::matmul(
            self.value(w).data(),
            &col,
            spec.co,
            spec.patch(),
            spec.out_cols(),
        );
        if let Some(b) = bias {
            let cols = spec.out_cols();
            for (o, &bv) in self.value(b).data().iter().enumerate() {
                for v in &mut out[o * cols..(o + 1) * cols] {
                    *v += bv;
                }
            }
        }
        let shape = vec![spec.co, spec.out_t(), spec.out_h(), spec.out_w()];
        let t = Tensor::new(shape, out)?;
        let rg = self.rg(x) || self.rg(w) || bias.map(|b| self.rg(b)).unwrap_or(false);
        Ok(self.push(t, Op::Conv3d { x, w, bias, spec }, rg))
    }

    /// Group normalization over the channel axis (axis 0) of [C, ...] with a
    /// learned affine. Statistics are computed per group over all remaining
    /// axes.
    pub fn group_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        groups: usize,
        eps: f64,
    ) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        let channels = sx[0];
        if channels % groups != 0 || groups == 0 {
            return Err(MatError::Dimension(format!(
                "group_norm: {channels} channels not divisible into {groups} groups"
            )));
        }
        if self.shape(gamma) != [channels] || self.shape(beta) != [channels] {
            return Err(MatError::shape(&[channels], self.shape(gamma), "group_norm affine"));
        }
        let (mean, inv_std) = kernels::group_stats(self.value(x).data(), channels, groups, eps);
        let per_ch = self.value(x).numel() / channels;
        let ch_per_g = channels / groups;
        let mut out = vec![S::ZERO; self.value(x).numel()];
        {
            let xv = self.value(x).data();
            let gv = self.value(gamma).data();
            let bv = self.value(beta).data();
            for c in 0..channels {
                let g = c / ch_per_g;
                let (m, istd) = (S::from_f64(mean[g]), S::from_f64(inv_std[g]));
                let (ga, be) = (gv[c], bv[c]);
                for i in 0..per_ch {
                    let idx = c * per_ch + i;
                    out[idx] = (xv[idx] - m) * istd * ga + be;
                }
            }
        }
        let t = Tensor::new(sx, out)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            t,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                mean,
                inv_std,
            },
            rg,
        ))
    }

    /// Layer normalization over the last axis with a learned affine.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        let cols = *sx.last().ok_or_else(|| {
            MatError::Dimension("layer_norm needs at least 1-D input".to_string())
        })?;
        let rows = self.value(x).numel() / cols;
        if self.shape(gamma) != [cols] || self.shape(beta) != [cols] {
            return Err(MatError::shape(&[cols], self.shape(gamma), "layer_norm affine"));
        }
        let mut mean = vec![0.0f64; rows];
        let mut inv_std = vec![0.0f64; rows];
        let mut out = vec![S::ZERO; self.value(x).numel()];
        {
            let xv = self.value(x).data();
            let gv = self.value(gamma).data();
            let bv = self.value(beta).data();
            for r in 0..rows {
                let seg = &xv[r * cols..(r + 1) * cols];
                let m = kernels::sum_f64(seg) / cols as f64;
                let mut var = 0.0;
                for &v in seg {
                    let d = v.to_f64() - m;
                    var += d * d;
                }
                var /= cols as f64;
                let istd = 1.0 / (var + eps).sqrt();
                mean[r] = m;
                inv_std[r] = istd;
                let (ms, is) = (S::from_f64(m), S::from_f64(istd));
                for c in 0..cols {
                    out[r * cols + c] = (seg[c] - ms) * is * gv[c] + bv[c];
                }
            }
        }
        let t = Tensor::new(sx, out)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                rows,
                cols,
                mean,
                inv_std,
            },
            rg,
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        let cols = *sx.last().ok_or_else(|| {
            MatError::Dimension("softmax needs at least 1-D input".to_string())
        })?;
        let rows = self.value(x).numel() / cols;
        let out = kernels::softmax_rows(self.value(x).data(), rows, cols);
        let t = Tensor::new(sx, out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Softmax { x, rows, cols }, rg))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s = S::from_f64(kernels::sum_f64(self.value(x).data()));
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).numel() as f64;
        let s = S::from_f64(kernels::sum_f64(self.value(x).data()) / n);
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::MeanAll(x), rg)
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(MatError::Dimension("concat of zero tensors".to_string()));
        }
        let first = self.shape(inputs[0]).to_vec();
        if axis >= first.len() {
            return Err(MatError::Dimension(format!(
                "concat axis {axis} out of range for {first:?}"
            )));
        }
        let mut axis_total = 0usize;
        for &id in inputs {
            let s = self.shape(id);
            if s.len() != first.len()
                || s.iter()
                    .zip(first.iter())
                    .enumerate()
                    .any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(MatError::shape(&first, s, "concat"));
            }
            axis_total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = vec![S::ZERO; outer * axis_total * inner];
        let mut offset = 0usize;
        for &id in inputs {
            let len = self.shape(id)[axis];
            let src = self.value(id).data();
            for o in 0..outer {
                let dst_base = (o * axis_total + offset) * inner;
                let src_base = o * len * inner;
                out[dst_base..dst_base + len * inner]
                    .copy_from_slice(&src[src_base..src_base + len * inner]);
            }
            offset += len;
        }
        let rg = inputs.iter().any(|&i| self.rg(i));
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            t,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() || start + len > sx[axis] {
            return Err(MatError::Dimension(format!(
                "narrow [{start}..{}) axis {axis} out of range for {sx:?}",
                start + len
            )));
        }
        let outer: usize = sx[..axis].iter().product();
        let inner: usize = sx[axis + 1..].iter().product();
        let mut out = vec![S::ZERO; outer * len * inner];
        let src = self.value(x).data();
        for o in 0..outer {
            let src_base = (o * sx[axis] + start) * inner;
            out[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&src[src_base..src_base + len * inner]);
        }
        let mut shape = sx;
        shape[axis] = len;
        let rg = self.rg(x);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Narrow { x, axis, start }, rg))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(MatError::Dimension(format!(
                "reshape {:?} -> {:?}",
                self.shape(x),
                shape
            )));
        }
        let t = Tensor::new(shape, self.value(x).data().to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    pub fn permute(&mut self, x: NodeId, perm: &[usize]) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if perm.len() != sx.len() {
            return Err(MatError::Dimension(format!(
                "permute {perm:?} rank mismatch for {sx:?}"
            )));
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || seen[p] {
                return Err(MatError::Dimension(format!("invalid permutation {perm:?}")));
            }
            seen[p] = true;
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| sx[p]).collect();
        let out = permute_data(self.value(x).data(), &sx, perm);
        let t = Tensor::new(out_shape, out)?;
        let rg = self.rg(x);
        Ok(self.push(
            t,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            rg,
        ))
    }

    /// Repeat a size-1 axis `times` times (broadcast with gradient summing).
    pub fn repeat_axis(&mut self, x: NodeId, axis: usize, times: usize) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() || sx[axis] != 1 {
            return Err(MatError::Dimension(format!(
                "repeat_axis needs size-1 axis {axis} in {sx:?}"
            )));
        }
        let outer: usize = sx[..axis].iter().product();
        let inner: usize = sx[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut out = vec![S::ZERO; outer * times * inner];
        for o in 0..outer {
            let block = &src[o * inner..(o + 1) * inner];
            for r in 0..times {
                out[(o * times + r) * inner..(o * times + r + 1) * inner].copy_from_slice(block);
            }
        }
        let mut shape = sx;
        shape[axis] = times;
        let rg = self.rg(x);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::RepeatAxis { x, axis }, rg))
    }

    /// Nearest-neighbor 2x spatial upsampling of [C,T,H,W].
    pub fn upsample2x(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 4 {
            return Err(MatError::Dimension(format!(
                "upsample2x needs [C,T,H,W], got {sx:?}"
            )));
        }
        let (c, t, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let src = self.value(x).data();
        let mut out = vec![S::ZERO; c * t * 4 * h * w];
        let (oh, ow) = (2 * h, 2 * w);
        for ct in 0..c * t {
            for y in 0..h {
                for xx in 0..w {
                    let v = src[(ct * h + y) * w + xx];
                    let base = (ct * oh + 2 * y) * ow + 2 * xx;
                    out[base] = v;
                    out[base + 1] = v;
                    out[base + ow] = v;
                    out[base + ow + 1] = v;
                }
            }
        }
        let rg = self.rg(x);
        let tns = Tensor::new(vec![c, t, oh, ow], out)?;
        Ok(self.push(tns, Op::Upsample2x(x), rg))
    }

    /// Broadcast-add a vector along `axis`: `bias.len() == x.shape[axis]`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId, axis: usize) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() || self.shape(bias) != [sx[axis]] {
            return Err(MatError::shape(&sx, self.shape(bias), "add_bias"));
        }
        let inner: usize = sx[axis + 1..].iter().product();
        let n_axis = sx[axis];
        let bv = self.value(bias).data().to_vec();
        let data: Vec<S> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv[(i / inner) % n_axis])
            .collect();
        let rg = self.rg(x) || self.rg(bias);
        let t = Tensor::new(sx, data)?;
        Ok(self.push(t, Op::AddBias { x, bias, axis }, rg))
    }

    /// Row lookup into an embedding table [V, d].
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let st = self.shape(table).to_vec();
        if st.len() != 2 {
            return Err(MatError::Dimension(format!(
                "embedding table must be 2-D, got {st:?}"
            )));
        }
        let (v, d) = (st[0], st[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(MatError::Dimension(format!(
                "embedding id {bad} out of range (vocab {v})"
            )));
        }
        let src = self.value(table).data();
        let mut out = vec![S::ZERO; ids.len() * d];
        for (r, &i) in ids.iter().enumerate() {
            out[r * d..(r + 1) * d].copy_from_slice(&src[i * d..(i + 1) * d]);
        }
        let rg = self.rg(table);
        let t = Tensor::new(vec![ids.len(), d], out)?;
        Ok(self.push(
            t,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Scaled dot-product attention over single-head [L,d] inputs:
    /// `softmax(q k^T / sqrt(d)) v`. Rejects non-finite inputs.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId) -> Result<NodeId> {
        for (id, name) in [(q, "q"), (k, "k"), (v, "v")] {
            if self.shape(id).len() != 2 {
                return Err(MatError::Dimension(format!(
                    "attention {name} must be [L,d], got {:?}",
                    self.shape(id)
                )));
            }
            if !self.value(id).all_finite() {
                return Err(MatError::NonFinite(format!("attention input {name}")));
            }
        }
        let d = self.shape(q)[1];
        if self.shape(k)[1] != d || self.shape(v)[0] != self.shape(k)[0] {
            return Err(MatError::shape(self.shape(q), self.shape(k), "attention dims"));
        }
        let kt = self.permute(k, &[1, 0])?;
        let scores = self.matmul(q, kt)?;
        let scaled = self.mul_scalar(scores, 1.0 / (d as f64).sqrt());
        let attn = self.softmax(scaled)?;
        self.matmul(attn, v)
    }

    /// `x @ w^T (+ bias)` for token matrices x: [L, d_in], w: [d_out, d_in].
    pub fn linear(&mut self, x: NodeId, w: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        let wt = self.permute(w, &[1, 0])?;
        let y = self.matmul(x, wt)?;
        match bias {
            Some(b) => self.add_bias(y, b, 1),
            None => Ok(y),
        }
    }

    /// Reverse sweep from a scalar loss. Returns gradients for every
    /// reachable unfrozen parameter; frozen parameters are absent.
    pub fn backward(&mut self, loss: NodeId) -> Result<GradMap<S>> {
        if self.consumed {
            return Err(MatError::GraphConsumed);
        }
        self.consumed = true;
        if !self.value(loss).is_scalar() {
            return Err(MatError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<S>>> = vec![None; n];
        grads[loss.0] = Some(vec![S::ONE]);

        for i in (0..n).rev() {
            if grads[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let g = grads[i].take().unwrap();
            let op = self.nodes[i].op.clone();
            self.backprop_op(i, &op, &g, &mut grads);
            if let Op::Leaf = op {
                grads[i] = Some(g); // keep leaf gradients for collection
            }
        }

        let mut out = GradMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(name) = &node.param {
                if node.requires_grad {
                    if let Some(g) = grads[i].take() {
                        out.insert(name.clone(), Tensor::new(node.value.shape().to_vec(), g)?);
                    }
                }
            }
        }
        Ok(out)
    }

    fn acc(&self, grads: &mut [Option<Vec<S>>], id: NodeId, f: impl FnOnce(&mut [S])) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let slot = &mut grads[id.0];
        if slot.is_none() {
            *slot = Some(vec![S::ZERO; self.nodes[id.0].value.numel()]);
        }
        f(slot.as_mut().unwrap());
    }

    fn backprop_op(&self, i: usize, op: &Op, g: &[S], grads: &mut [Option<Vec<S>>]) {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, |d| add_into(d, g));
                self.acc(grads, *b, |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |d| add_into(d, g));
                self.acc(grads, *b, |d| {
                    for (dv, &gv) in d.iter_mut().zip(g) {
                        *dv -= gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |d| {
                    for ((dv, &gv), &o) in d.iter_mut().zip(g).zip(bv) {
                        *dv += gv * o;
                    }
                });
                self.acc(grads, *b, |d| {
                    for ((dv, &gv), &o) in d.iter_mut().zip(g).zip(av) {
                        *dv += gv * o;
                    }
                });
            }
            Op::AddScalar(x) => self.acc(grads, *x, |d| add_into(d, g)),
            Op::MulScalar(x, c) => {
                let cv = S::from_f64(*c);
                self.acc(grads, *x, |d| {
                    for (dv, &gv) in d.iter_mut().zip(g) {
                        *dv += gv * cv;
                    }
                });
            }
            Op::Neg(x) => self.acc(grads, *x, |d| {
                for (dv, &gv) in d.iter_mut().zip(g) {
                    *dv -= gv;
                }
            }),
            Op::Exp(x) => {
                let y = self.nodes[i].value.data();
                self.acc(grads, *x, |d| {
                    for ((dv, &gv), &yv) in d.iter_mut().zip(g).zip(y) {
                        *dv += gv * yv;
                    }
                });
            }
            Op::Abs(x) => {
                let xv = self.value(*x).data();
                self.acc(grads, *x, |d| {
                    for ((dv, &gv), &v) in d.iter_mut().zip(g).zip(xv) {
                        if v > S::ZERO {
                            *dv += gv;
                        } else if v < S::ZERO {
                            *dv -= gv;
                        }
                    }
                });
            }
            Op::Silu(x) => {
                let xv = self.value(*x).data();
                self.acc(grads, *x, |d| {
                    for ((dv, &gv), &v) in d.iter_mut().zip(g).zip(xv) {
                        let s = sigmoid_s(v);
                        *dv += gv * (s * (S::ONE + v * (S::ONE - s)));
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = self.nodes[i].value.data();
                self.acc(grads, *x, |d| {
                    for ((dv, &gv), &yv) in d.iter_mut().zip(g).zip(y) {
                        *dv += gv * yv * (S::ONE - yv);
                    }
                });
            }
            Op::Matmul { a, b, m, k, n } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |d| kernels::matmul_bt_acc(g, bv, d, *m, *n, *k));
                self.acc(grads, *b, |d| kernels::matmul_at_acc(av, g, d, *k, *m, *n));
            }
            Op::Conv3d { x, w, bias, spec } => {
                let (co, patch, cols) = (spec.co, spec.patch(), spec.out_cols());
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                if self.nodes[w.0].requires_grad {
                    let col = kernels::im2col(xv, spec);
                    self.acc(grads, *w, |d| kernels::matmul_bt_acc(g, &col, d, co, cols, patch));
                }
                if self.nodes[x.0].requires_grad {
                    let mut dcol = vec![S::ZERO; patch * cols];
                    kernels::matmul_at_acc(wv, g, &mut dcol, patch, co, cols);
                    self.acc(grads, *x, |d| kernels::col2im_acc(&dcol, d, spec));
                }
                if let Some(b) = bias {
                    self.acc(grads, *b, |d| {
                        for (o, dv) in d.iter_mut().enumerate() {
                            *dv += S::from_f64(kernels::sum_f64(&g[o * cols..(o + 1) * cols]));
                        }
                    });
                }
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                mean,
                inv_std,
            } => {
                let xv = self.value(*x).data();
                let gv = self.value(*gamma).data();
                let channels = self.shape(*x)[0];
                let per_ch = xv.len() / channels;
                let ch_per_g = channels / groups;
                let gsize = (ch_per_g * per_ch) as f64;
                self.acc(grads, *beta, |d| {
                    for (c, dv) in d.iter_mut().enumerate() {
                        *dv += S::from_f64(kernels::sum_f64(&g[c * per_ch..(c + 1) * per_ch]));
                    }
                });
                self.acc(grads, *gamma, |d| {
                    for (c, dv) in d.iter_mut().enumerate() {
                        let grp = c / ch_per_g;
                        let mut s = 0.0f64;
                        for idx in c * per_ch..(c + 1) * per_ch {
                            let xh = (xv[idx].to_f64() - mean[grp]) * inv_std[grp];
                            s += g[idx].to_f64() * xh;
                        }
                        *dv += S::from_f64(s);
                    }
                });
                self.acc(grads, *x, |d| {
                    for grp in 0..*groups {
                        let base = grp * ch_per_g * per_ch;
                        let mut sum_gg = 0.0f64;
                        let mut sum_ggx = 0.0f64;
                        for c in 0..ch_per_g {
                            let ch = grp * ch_per_g + c;
                            let ga = gv[ch].to_f64();
                            for idx in ch * per_ch..(ch + 1) * per_ch {
                                let gg = g[idx].to_f64() * ga;
                                let xh = (xv[idx].to_f64() - mean[grp]) * inv_std[grp];
                                sum_gg += gg;
                                sum_ggx += gg * xh;
                            }
                        }
                        let (m_gg, m_ggx) = (sum_gg / gsize, sum_ggx / gsize);
                        for c in 0..ch_per_g {
                            let ch = grp * ch_per_g + c;
                            let ga = gv[ch].to_f64();
                            for idx in ch * per_ch..(ch + 1) * per_ch {
                                let gg = g[idx].to_f64() * ga;
                                let xh = (xv[idx].to_f64() - mean[grp]) * inv_std[grp];
                                d[idx] += S::from_f64(inv_std[grp] * (gg - m_gg - xh * m_ggx));
                            }
                        }
                        let _ = base;
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                rows,
                cols,
                mean,
                inv_std,
            } => {
                let xv = self.value(*x).data();
                let gv = self.value(*gamma).data();
                self.acc(grads, *beta, |d| {
                    for r in 0..*rows {
                        for c in 0..*cols {
                            d[c] += g[r * cols + c];
                        }
                    }
                });
                self.acc(grads, *gamma, |d| {
                    for r in 0..*rows {
                        for c in 0..*cols {
                            let xh = (xv[r * cols + c].to_f64() - mean[r]) * inv_std[r];
                            d[c] += S::from_f64(g[r * cols + c].to_f64() * xh);
                        }
                    }
                });
                self.acc(grads, *x, |d| {
                    for r in 0..*rows {
                        let mut sum_gg = 0.0f64;
                        let mut sum_ggx = 0.0f64;
                        for c in 0..*cols {
                            let idx = r * cols + c;
                            let gg = g[idx].to_f64() * gv[c].to_f64();
                            let xh = (xv[idx].to_f64() - mean[r]) * inv_std[r];
                            sum_gg += gg;
                            sum_ggx += gg * xh;
                        }
                        let nf = *cols as f64;
                        let (m_gg, m_ggx) = (sum_gg / nf, sum_ggx / nf);
                        for c in 0..*cols {
                            let idx = r * cols + c;
                            let gg = g[idx].to_f64() * gv[c].to_f64();
                            let xh = (xv[idx].to_f64() - mean[r]) * inv_std[r];
                            d[idx] += S::from_f64(inv_std[r] * (gg - m_gg - xh * m_ggx));
                        }
                    }
                });
            }
            Op::Softmax { x, rows, cols } => {
                let y = self.nodes[i].value.data();
                self.acc(grads, *x, |d| {
                    for r in 0..*rows {
                        let ys = &y[r * cols..(r + 1) * cols];
                        let gs = &g[r * cols..(r + 1) * cols];
                        let mut dot = 0.0f64;
                        for (&yv, &gv) in ys.iter().zip(gs) {
                            dot += yv.to_f64() * gv.to_f64();
                        }
                        let dot = S::from_f64(dot);
                        let ds = &mut d[r * cols..(r + 1) * cols];
                        for ((dv, &yv), &gv) in ds.iter_mut().zip(ys).zip(gs) {
                            *dv += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::SumAll(x) => {
                let gv = g[0];
                self.acc(grads, *x, |d| {
                    for dv in d.iter_mut() {
                        *dv += gv;
                    }
                });
            }
            Op::MeanAll(x) => {
                let n = self.value(*x).numel() as f64;
                let gv = S::from_f64(g[0].to_f64() / n);
                self.acc(grads, *x, |d| {
                    for dv in d.iter_mut() {
                        *dv += gv;
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let out_shape = self.nodes[i].value.shape();
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                let axis_total = out_shape[*axis];
                let mut offset = 0usize;
                for &inp in inputs {
                    let len = self.shape(inp)[*axis];
                    self.acc(grads, inp, |d| {
                        for o in 0..outer {
                            let src_base = (o * axis_total + offset) * inner;
                            let dst_base = o * len * inner;
                            for j in 0..len * inner {
                                d[dst_base + j] += g[src_base + j];
                            }
                        }
                    });
                    offset += len;
                }
            }
            Op::Narrow { x, axis, start } => {
                let sx = self.shape(*x).to_vec();
                let out_shape = self.nodes[i].value.shape().to_vec();
                let outer: usize = sx[..*axis].iter().product();
                let inner: usize = sx[*axis + 1..].iter().product();
                let len = out_shape[*axis];
                self.acc(grads, *x, |d| {
                    for o in 0..outer {
                        let dst_base = (o * sx[*axis] + start) * inner;
                        let src_base = o * len * inner;
                        for j in 0..len * inner {
                            d[dst_base + j] += g[src_base + j];
                        }
                    }
                });
            }
            Op::Reshape(x) => self.acc(grads, *x, |d| add_into(d, g)),
            Op::Permute { x, perm } => {
                let mut inv = vec![0usize; perm.len()];
                for (d, &p) in perm.iter().enumerate() {
                    inv[p] = d;
                }
                let out_shape = self.nodes[i].value.shape().to_vec();
                let back = permute_data(g, &out_shape, &inv);
                self.acc(grads, *x, |d| add_into(d, &back));
            }
            Op::RepeatAxis { x, axis } => {
                let out_shape = self.nodes[i].value.shape().to_vec();
                let times = out_shape[*axis];
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                self.acc(grads, *x, |d| {
                    for o in 0..outer {
                        for r in 0..times {
                            let src = (o * times + r) * inner;
                            for j in 0..inner {
                                d[o * inner + j] += g[src + j];
                            }
                        }
                    }
                });
            }
            Op::Upsample2x(x) => {
                let sx = self.shape(*x).to_vec();
                let (c, t, h, w) = (sx[0], sx[1], sx[2], sx[3]);
                let (oh, ow) = (2 * h, 2 * w);
                self.acc(grads, *x, |d| {
                    for ct in 0..c * t {
                        for y in 0..h {
                            for xx in 0..w {
                                let base = (ct * oh + 2 * y) * ow + 2 * xx;
                                let s = g[base] + g[base + 1] + g[base + ow] + g[base + ow + 1];
                                d[(ct * h + y) * w + xx] += s;
                            }
                        }
                    }
                });
            }
            Op::AddBias { x, bias, axis } => {
                self.acc(grads, *x, |d| add_into(d, g));
                let sx = self.shape(*x).to_vec();
                let inner: usize = sx[*axis + 1..].iter().product();
                let n_axis = sx[*axis];
                self.acc(grads, *bias, |d| {
                    for (idx, &gv) in g.iter().enumerate() {
                        d[(idx / inner) % n_axis] += gv;
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let d_model = self.shape(*table)[1];
                self.acc(grads, *table, |d| {
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d_model {
                            d[id * d_model + j] += g[r * d_model + j];
                        }
                    }
                });
            }
        }
    }
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn sigmoid_s<S: Scalar>(v: S) -> S {
    S::ONE / (S::ONE + (-v).exp())
}

fn permute_data<S: Scalar>(src: &[S], in_shape: &[usize], perm: &[usize]) -> Vec<S> {
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let in_strides = strides(in_shape);
    let out_strides = strides(&out_shape);
    let n = src.len();
    let mut out = vec![src[0]; n];
    // walk output linear indices, mapping each to its source index
    for (i, o) in out.iter_mut().enumerate() {
        let mut rem = i;
        let mut src_idx = 0usize;
        for (d, &os) in out_strides.iter().enumerate() {
            let coord = rem / os;
            rem %= os;
            src_idx += coord * in_strides[perm[d]];
        }
        *o = src[src_idx];
    }
    out
}
