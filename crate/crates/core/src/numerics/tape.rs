//! Reverse-mode differentiation over a recorded operation list.
//!
//! A [`Graph`] is built fresh for each forward evaluation. Leaves carry a
//! `requires_grad` flag; interior nodes require a gradient when any input
//! does, and [`Graph::backward`] only visits those. Frozen weights therefore
//! cost nothing in the backward pass beyond the activations they feed.

use super::ops::{
    attention_raw, check_attention_shapes, col2im3, conv_dims, gemm_nn, gemm_nt, gemm_tn, im2col3,
};
use super::tensor::compensated_sum;
use super::Tensor;
use crate::error::{dim_err, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Add(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    MatMul(Var, Var),
    /// `x[..., tail] + b[tail]`
    AddTrailing(Var, Var),
    /// `x[N×C×...] + b[C]`
    AddChannel(Var, Var),
    Conv3x3 {
        x: Var,
        w: Var,
        b: Var,
    },
    Permute(Var, Vec<usize>),
    Reshape(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        probs: Vec<f64>,
    },
    AvgPool2(Var),
    Upsample2(Var),
    /// Leading-axis prefix `[0, n)`.
    Head(Var),
    Mse(Var, Tensor),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that required one.
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when no path reached it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn accumulate(slot: &mut Option<Tensor>, shape: &[usize], f: impl FnOnce(&mut [f64])) {
    let t = slot.get_or_insert_with(|| Tensor::zeros(shape));
    f(t.data_mut());
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

fn permuted_shape(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    perm.iter().map(|&p| shape[p]).collect()
}

/// Writes `src` (shape `shape`) permuted by `perm` into `dst`; with `add`, accumulates.
fn permute_into(src: &[f64], shape: &[usize], perm: &[usize], dst: &mut [f64], add: bool) {
    let rank = shape.len();
    let mut src_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        src_strides[i] = src_strides[i + 1] * shape[i + 1];
    }
    let out_shape = permuted_shape(shape, perm);
    let strides: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for d in dst.iter_mut() {
        if add {
            *d += src[offset];
        } else {
            *d = src[offset];
        }
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            offset += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            offset -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
}

fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A differentiable input (trainable weight or probed activation).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(silu);
        let rg = self.rg(&[a]);
        self.push(value, Op::Silu(a), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = super::ops::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Adds `b` to every trailing block of `x` whose shape equals `b`'s.
    pub fn add_trailing(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xs, bs) = (self.value(x).shape(), self.value(b).shape());
        if bs.len() > xs.len() || xs[xs.len() - bs.len()..] != *bs {
            return dim_err(format!("add_trailing: {bs:?} is not a suffix of {xs:?}"));
        }
        let bd = self.value(b).data().to_vec();
        let mut value = self.value(x).clone();
        for chunk in value.data_mut().chunks_mut(bd.len()) {
            for (v, &bv) in chunk.iter_mut().zip(&bd) {
                *v += bv;
            }
        }
        let rg = self.rg(&[x, b]);
        Ok(self.push(value, Op::AddTrailing(x, b), rg))
    }

    /// Adds a per-channel vector `b[C]` to `x[N×C×...]`.
    pub fn add_channel(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xs, bs) = (self.value(x).shape(), self.value(b).shape());
        if xs.len() < 2 || bs.len() != 1 || bs[0] != xs[1] {
            return dim_err(format!("add_channel: {bs:?} vs {xs:?}"));
        }
        let c = xs[1];
        let inner: usize = xs[2..].iter().product();
        let bd = self.value(b).data().to_vec();
        let mut value = self.value(x).clone();
        for (i, chunk) in value.data_mut().chunks_mut(inner).enumerate() {
            let bv = bd[i % c];
            for v in chunk {
                *v += bv;
            }
        }
        let rg = self.rg(&[x, b]);
        Ok(self.push(value, Op::AddChannel(x, b), rg))
    }

    /// Batched 3×3 convolution, zero padding 1, over `x[N×Cin×H×W]`.
    pub fn conv3x3(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let value = super::ops::conv2d_3x3_batched(self.value(x), self.value(w), self.value(b))?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(value, Op::Conv3x3 { x, w, b }, rg))
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let src = self.value(x);
        let rank = src.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return dim_err(format!("invalid permutation {perm:?} for rank {rank}"));
        }
        let shape = permuted_shape(src.shape(), perm);
        let mut data = vec![0.0; src.len()];
        permute_into(src.data(), src.shape(), perm, &mut data, false);
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Permute(x, perm.to_vec()), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Batched `softmax(Q·Kᵀ/√d)·V` over all leading axes.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let (qs, ks, vs) = (
            self.value(q).shape().to_vec(),
            self.value(k).shape().to_vec(),
            self.value(v).shape().to_vec(),
        );
        check_attention_shapes(&qs, &ks, &vs)?;
        let r = qs.len();
        let batch: usize = qs[..r - 2].iter().product();
        let (lq, d, lk, dv) = (qs[r - 2], qs[r - 1], ks[r - 2], vs[r - 1]);
        let mut out = Vec::with_capacity(batch * lq * dv);
        let mut probs = Vec::with_capacity(batch * lq * lk);
        {
            let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
            for bi in 0..batch {
                let (o, p) = attention_raw(
                    &qd[bi * lq * d..(bi + 1) * lq * d],
                    &kd[bi * lk * d..(bi + 1) * lk * d],
                    &vd[bi * lk * dv..(bi + 1) * lk * dv],
                    lq,
                    lk,
                    d,
                    dv,
                );
                out.extend(o);
                probs.extend(p);
            }
        }
        let mut shape = qs[..r - 1].to_vec();
        shape.push(dv);
        let rg = self.rg(&[q, k, v]);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::Attention { q, k, v, probs },
            rg,
        ))
    }

    /// 2×2 mean pooling over the last two axes of `x[N×C×H×W]`.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let s = src.shape();
        if s.len() != 4 || !s[2].is_multiple_of(2) || !s[3].is_multiple_of(2) {
            return dim_err(format!("avg_pool2 needs even spatial extents, got {s:?}"));
        }
        let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
        let (ho, wo) = (h / 2, w / 2);
        let mut out = vec![0.0; nc * ho * wo];
        let d = src.data();
        for p in 0..nc {
            for y in 0..ho {
                for xx in 0..wo {
                    let base = p * h * w + 2 * y * w + 2 * xx;
                    out[p * ho * wo + y * wo + xx] =
                        0.25 * (d[base] + d[base + 1] + d[base + w] + d[base + w + 1]);
                }
            }
        }
        let shape = vec![s[0], s[1], ho, wo];
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::from_parts(shape, out), Op::AvgPool2(x), rg))
    }

    /// Nearest-neighbour 2× upsampling of `x[N×C×H×W]`.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let s = src.shape();
        if s.len() != 4 {
            return dim_err(format!("upsample2 needs rank 4, got {s:?}"));
        }
        let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
        let (ho, wo) = (2 * h, 2 * w);
        let mut out = vec![0.0; nc * ho * wo];
        let d = src.data();
        for p in 0..nc {
            for y in 0..ho {
                for xx in 0..wo {
                    out[p * ho * wo + y * wo + xx] = d[p * h * w + (y / 2) * w + xx / 2];
                }
            }
        }
        let shape = vec![s[0], s[1], ho, wo];
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Upsample2(x), rg))
    }

    /// First `n` entries along the leading axis.
    pub fn head(&mut self, x: Var, n: usize) -> Result<Var> {
        let src = self.value(x);
        let s = src.shape();
        if s.is_empty() || n == 0 || n > s[0] {
            return dim_err(format!("head({n}) of {s:?}"));
        }
        let inner: usize = s[1..].iter().product();
        let mut shape = s.to_vec();
        shape[0] = n;
        let value = Tensor::from_parts(shape, src.data()[..n * inner].to_vec());
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Head(x), rg))
    }

    /// Mean squared error against a constant target; a one-element tensor.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        p.expect_same_shape(target, "mse")?;
        let n = p.len() as f64;
        let loss = compensated_sum(p.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b))) / n;
        let rg = self.rg(&[pred]);
        Ok(self.push(
            Tensor::from_parts(vec![1], vec![loss]),
            Op::Mse(pred, target.clone()),
            rg,
        ))
    }

    /// Propagates d(root)/d(node) back through the graph. `root` must hold one element.
    pub fn backward(&self, root: Var) -> Result<Grads> {
        if self.value(root).len() != 1 {
            return dim_err(format!(
                "backward root must be scalar, got {:?}",
                self.value(root).shape()
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::ones(self.value(root).shape()));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        accumulate(&mut grads[v.0], g.shape(), |d| {
                            for (x, &y) in d.iter_mut().zip(gd) {
                                *x += y;
                            }
                        });
                    }
                }
            }
            Op::Scale(a, s) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.shape(), |d| {
                        for (x, &y) in d.iter_mut().zip(gd) {
                            *x += s * y;
                        }
                    });
                }
            }
            Op::Silu(a) => {
                if self.wants(*a) {
                    let xd = self.value(*a).data();
                    accumulate(&mut grads[a.0], g.shape(), |d| {
                        for ((x, &y), &xv) in d.iter_mut().zip(gd).zip(xd) {
                            *x += y * silu_grad(xv);
                        }
                    });
                }
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], av.shape(), |d| {
                        gemm_nt(gd, bv.data(), d, m, n, k);
                    });
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], bv.shape(), |d| {
                        gemm_tn(av.data(), gd, d, k, m, n);
                    });
                }
            }
            Op::AddTrailing(x, b) => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], g.shape(), |d| {
                        for (p, &y) in d.iter_mut().zip(gd) {
                            *p += y;
                        }
                    });
                }
                if self.wants(*b) {
                    let bs = self.value(*b).shape();
                    let bl = self.value(*b).len();
                    accumulate(&mut grads[b.0], bs, |d| {
                        for chunk in gd.chunks(bl) {
                            for (p, &y) in d.iter_mut().zip(chunk) {
                                *p += y;
                            }
                        }
                    });
                }
            }
            Op::AddChannel(x, b) => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], g.shape(), |d| {
                        for (p, &y) in d.iter_mut().zip(gd) {
                            *p += y;
                        }
                    });
                }
                if self.wants(*b) {
                    let xs = g.shape();
                    let c = xs[1];
                    let inner: usize = xs[2..].iter().product();
                    accumulate(&mut grads[b.0], &[c], |d| {
                        for (i, chunk) in gd.chunks(inner).enumerate() {
                            d[i % c] += chunk.iter().sum::<f64>();
                        }
                    });
                }
            }
            Op::Conv3x3 { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let dims = conv_dims(xv.shape(), wv.shape(), self.value(*b).shape())
                    .expect("conv shapes validated in forward");
                let hw = dims.h * dims.w;
                let k = dims.c_in * 9;
                let (want_x, want_w, want_b) = (self.wants(*x), self.wants(*w), self.wants(*b));
                if want_b {
                    accumulate(&mut grads[b.0], &[dims.c_out], |d| {
                        for img in 0..dims.n {
                            for (co, dv) in d.iter_mut().enumerate() {
                                let base = (img * dims.c_out + co) * hw;
                                *dv += gd[base..base + hw].iter().sum::<f64>();
                            }
                        }
                    });
                }
                if want_w {
                    let mut cols = vec![0.0; k * hw];
                    accumulate(&mut grads[w.0], wv.shape(), |d| {
                        for img in 0..dims.n {
                            im2col3(
                                &xv.data()[img * dims.c_in * hw..(img + 1) * dims.c_in * hw],
                                dims.c_in,
                                dims.h,
                                dims.w,
                                &mut cols,
                            );
                            let gy = &gd[img * dims.c_out * hw..(img + 1) * dims.c_out * hw];
                            gemm_nt(gy, &cols, d, dims.c_out, hw, k);
                        }
                    });
                }
                if want_x {
                    let mut dcols = vec![0.0; k * hw];
                    accumulate(&mut grads[x.0], xv.shape(), |d| {
                        for img in 0..dims.n {
                            dcols.fill(0.0);
                            let gy = &gd[img * dims.c_out * hw..(img + 1) * dims.c_out * hw];
                            gemm_tn(wv.data(), gy, &mut dcols, k, dims.c_out, hw);
                            col2im3(
                                &dcols,
                                dims.c_in,
                                dims.h,
                                dims.w,
                                &mut d[img * dims.c_in * hw..(img + 1) * dims.c_in * hw],
                            );
                        }
                    });
                }
            }
            Op::Permute(x, perm) => {
                if self.wants(*x) {
                    let inv = inverse_perm(perm);
                    let xs = self.value(*x).shape();
                    accumulate(&mut grads[x.0], xs, |d| {
                        permute_into(gd, g.shape(), &inv, d, true);
                    });
                }
            }
            Op::Reshape(x) => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], self.value(*x).shape(), |d| {
                        for (p, &y) in d.iter_mut().zip(gd) {
                            *p += y;
                        }
                    });
                }
            }
            Op::Attention { q, k, v, probs } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let qs = qv.shape();
                let r = qs.len();
                let batch: usize = qs[..r - 2].iter().product();
                let (lq, d, lk, dv) = (qs[r - 2], qs[r - 1], kv.shape()[r - 2], vv.shape()[r - 1]);
                let scale = 1.0 / (d as f64).sqrt();
                let mut dq = vec![0.0; qv.len()];
                let mut dk = vec![0.0; kv.len()];
                let mut dvv = vec![0.0; vv.len()];
                let mut ds = vec![0.0; lq * lk];
                for bi in 0..batch {
                    let p = &probs[bi * lq * lk..(bi + 1) * lq * lk];
                    let go = &gd[bi * lq * dv..(bi + 1) * lq * dv];
                    let vb = &vv.data()[bi * lk * dv..(bi + 1) * lk * dv];
                    gemm_tn(p, go, &mut dvv[bi * lk * dv..(bi + 1) * lk * dv], lk, lq, dv);
                    ds.fill(0.0);
                    gemm_nt(go, vb, &mut ds, lq, dv, lk);
                    for i in 0..lq {
                        let pr = &p[i * lk..(i + 1) * lk];
                        let dr = &mut ds[i * lk..(i + 1) * lk];
                        let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                        for (dv_, &pv) in dr.iter_mut().zip(pr) {
                            *dv_ = pv * (*dv_ - dot) * scale;
                        }
                    }
                    gemm_nn(
                        &ds,
                        &kv.data()[bi * lk * d..(bi + 1) * lk * d],
                        &mut dq[bi * lq * d..(bi + 1) * lq * d],
                        lq,
                        lk,
                        d,
                    );
                    gemm_tn(
                        &ds,
                        &qv.data()[bi * lq * d..(bi + 1) * lq * d],
                        &mut dk[bi * lk * d..(bi + 1) * lk * d],
                        lk,
                        lq,
                        d,
                    );
                }
                for (var, buf, shape) in [(q, dq, qs), (k, dk, kv.shape()), (v, dvv, vv.shape())] {
                    if self.wants(*var) {
                        accumulate(&mut grads[var.0], shape, |dst| {
                            for (a, b) in dst.iter_mut().zip(&buf) {
                                *a += b;
                            }
                        });
                    }
                }
            }
            Op::AvgPool2(x) => {
                if self.wants(*x) {
                    let xs = self.value(*x).shape();
                    let (nc, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
                    let (ho, wo) = (h / 2, w / 2);
                    accumulate(&mut grads[x.0], xs, |d| {
                        for p in 0..nc {
                            for y in 0..ho {
                                for xx in 0..wo {
                                    let gv = 0.25 * gd[p * ho * wo + y * wo + xx];
                                    let base = p * h * w + 2 * y * w + 2 * xx;
                                    d[base] += gv;
                                    d[base + 1] += gv;
                                    d[base + w] += gv;
                                    d[base + w + 1] += gv;
                                }
                            }
                        }
                    });
                }
            }
            Op::Upsample2(x) => {
                if self.wants(*x) {
                    let xs = self.value(*x).shape();
                    let (nc, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
                    let (ho, wo) = (2 * h, 2 * w);
                    accumulate(&mut grads[x.0], xs, |d| {
                        for p in 0..nc {
                            for y in 0..ho {
                                for xx in 0..wo {
                                    d[p * h * w + (y / 2) * w + xx / 2] +=
                                        gd[p * ho * wo + y * wo + xx];
                                }
                            }
                        }
                    });
                }
            }
            Op::Head(x) => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], self.value(*x).shape(), |d| {
                        for (p, &y) in d.iter_mut().zip(gd) {
                            *p += y;
                        }
                    });
                }
            }
            Op::Mse(pred, target) => {
                if self.wants(*pred) {
                    let pv = self.value(*pred);
                    let scale = 2.0 * gd[0] / pv.len() as f64;
                    accumulate(&mut grads[pred.0], pv.shape(), |d| {
                        for ((p, &a), &b) in d.iter_mut().zip(pv.data()).zip(target.data()) {
                            *p += scale * (a - b);
                        }
                    });
                }
            }
        }
    }
}
