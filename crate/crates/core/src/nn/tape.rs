//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value and whatever it
//! needs for the backward pass. Nodes record whether any input requires a
//! gradient, so frozen sub-networks cost nothing on the way back.

use super::kernels::{self, ConvGeom};
use super::{Scalar, Tensor};
use crate::imaging::GeoTransform;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    /// Statistics per (sample, channel) over the spatial plane.
    Instance,
    /// Statistics per channel over batch and spatial axes.
    Batch,
}

pub const NORM_EPS: f64 = 1e-5;

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    ReflectPad {
        x: Var,
        pad: usize,
    },
    Normalize {
        x: Var,
        kind: NormKind,
        inv_std: Vec<T>,
        mean: Vec<T>,
        var: Vec<T>,
    },
    ChannelAffine {
        x: Var,
        scale: Var,
        shift: Var,
    },
    Relu(Var),
    LeakyRelu(Var, T),
    Tanh(Var),
    Add(Var, Var),
    Affine {
        x: Var,
        mul: T,
    },
    Spatial {
        x: Var,
        t: GeoTransform,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    MeanAbsDiff(Var, Var),
    MeanSquaredTo {
        x: Var,
        target: T,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    WeightedSum(Vec<(Var, T)>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
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

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Batch mean and biased variance computed by a [`NormKind::Batch`] node.
    pub fn batch_stats(&self, v: Var) -> Option<(&[T], &[T])> {
        match &self.nodes[v.0].op {
            Op::Normalize {
                kind: NormKind::Batch,
                mean,
                var,
                ..
            } => Some((mean, var)),
            _ => None,
        }
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let (n, c, h, wd) = self.value(x).dims4();
        let (o, wc, kh, kw) = self.value(w).dims4();
        assert_eq!(c, wc, "conv2d channel mismatch");
        assert_eq!(kh, kw, "square kernels only");
        let g = ConvGeom::new(c, h, wd, kh, stride, pad);
        let mut out = Tensor::zeros([n, o, g.out_h, g.out_w]);
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bv = b.map(|b| self.value(b).data());
            let (in_per, out_per) = (c * h * wd, o * g.out_h * g.out_w);
            let mut cols = Vec::new();
            for s in 0..n {
                kernels::conv_forward_sample(
                    &xv[s * in_per..(s + 1) * in_per],
                    wv,
                    bv,
                    &g,
                    o,
                    &mut cols,
                    &mut out.data_mut()[s * out_per..(s + 1) * out_per],
                );
            }
        }
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        self.push(out, Op::Conv2d { x, w, b, stride, pad }, &inputs)
    }

    /// Transposed convolution with weights `[C_in, C_out, k, k]`; the output
    /// size is `(H − 1)·stride − 2·pad + k + output_padding`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        output_padding: usize,
    ) -> Var {
        let (n, cin, h, wd) = self.value(x).dims4();
        let (wcin, cout, k, k2) = self.value(w).dims4();
        assert_eq!(cin, wcin, "conv_transpose2d channel mismatch");
        assert_eq!(k, k2, "square kernels only");
        assert!(output_padding < stride, "output_padding must be < stride");
        let oh = (h - 1) * stride + k + output_padding - 2 * pad;
        let ow = (wd - 1) * stride + k + output_padding - 2 * pad;
        let g = ConvGeom::new(cout, oh, ow, k, stride, pad);
        debug_assert_eq!((g.out_h, g.out_w), (h, wd));
        let (r, p) = (g.col_rows(), g.col_cols());
        let mut out = Tensor::zeros([n, cout, oh, ow]);
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bv = b.map(|b| self.value(b).data());
            let mut cols = vec![T::zero(); r * p];
            let out_per = cout * oh * ow;
            for s in 0..n {
                let xs = &xv[s * cin * p..(s + 1) * cin * p];
                T::gemm(r, cin, p, T::one(), wv, (1, r), xs, (p, 1), T::zero(), &mut cols, (p, 1));
                let ys = &mut out.data_mut()[s * out_per..(s + 1) * out_per];
                kernels::col2im(&cols, &g, ys);
                if let Some(bv) = bv {
                    for (o, plane) in ys.chunks_exact_mut(oh * ow).enumerate() {
                        for v in plane {
                            *v += bv[o];
                        }
                    }
                }
            }
        }
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        self.push(out, Op::ConvTranspose2d { x, w, b, stride, pad }, &inputs)
    }

    pub fn reflect_pad(&mut self, x: Var, pad: usize) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert!(pad < h && pad < w, "reflection pad {pad} too large for {h}x{w}");
        let (oh, ow) = (h + 2 * pad, w + 2 * pad);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in xv.chunks_exact(h * w) {
            for i in 0..oh {
                let sy = reflect(i, pad, h);
                for j in 0..ow {
                    out.push(plane[sy * w + reflect(j, pad, w)]);
                }
            }
        }
        self.push(Tensor::new([n, c, oh, ow], out), Op::ReflectPad { x, pad }, &[x])
    }

    pub fn normalize(&mut self, x: Var, kind: NormKind) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let xv = self.value(x).data();
        let groups = match kind {
            NormKind::Instance => n * c,
            NormKind::Batch => c,
        };
        let count = T::lit((xv.len() / groups) as f64);
        let mut sum = vec![T::zero(); groups];
        let group_of = |idx: usize| match kind {
            NormKind::Instance => idx / hw,
            NormKind::Batch => (idx / hw) % c,
        };
        for (i, &v) in xv.iter().enumerate() {
            sum[group_of(i)] += v;
        }
        let mean: Vec<T> = sum.iter().map(|&s| s / count).collect();
        let mut sq = vec![T::zero(); groups];
        for (i, &v) in xv.iter().enumerate() {
            let g = group_of(i);
            let d = v - mean[g];
            sq[g] += d * d;
        }
        let var: Vec<T> = sq.iter().map(|&s| s / count).collect();
        let eps = T::lit(NORM_EPS);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let out: Vec<T> = xv
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let g = group_of(i);
                (v - mean[g]) * inv_std[g]
            })
            .collect();
        let shape = self.value(x).shape().to_vec();
        self.push(
            Tensor::new(shape, out),
            Op::Normalize {
                x,
                kind,
                inv_std,
                mean,
                var,
            },
            &[x],
        )
    }

    /// `y[n, c, ...] = x[n, c, ...] · scale[c] + shift[c]`.
    pub fn channel_affine(&mut self, x: Var, scale: Var, shift: Var) -> Var {
        let shape = self.value(x).shape().to_vec();
        let c = shape[1];
        let plane: usize = shape[2..].iter().product();
        assert_eq!(self.value(scale).len(), c, "scale length");
        assert_eq!(self.value(shift).len(), c, "shift length");
        let (sv, bv) = (self.value(scale).data(), self.value(shift).data());
        let out: Vec<T> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let ch = (i / plane) % c;
                v * sv[ch] + bv[ch]
            })
            .collect();
        self.push(Tensor::new(shape, out), Op::ChannelAffine { x, scale, shift }, &[x, scale, shift])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::lit(slope);
        let out = self.value(x).map(|v| if v > T::zero() { v } else { v * s });
        self.push(out, Op::LeakyRelu(x, s), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        self.push(out, Op::Tanh(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b), &[a, b])
    }

    /// Elementwise `mul · x + add`.
    pub fn affine(&mut self, x: Var, mul: f64, add: f64) -> Var {
        let (m, a) = (T::lit(mul), T::lit(add));
        let out = self.value(x).map(|v| m * v + a);
        self.push(out, Op::Affine { x, mul: m }, &[x])
    }

    /// Applies a pixel permutation to every plane of an `N×C×H×W` tensor.
    pub fn spatial(&mut self, x: Var, t: GeoTransform) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let (oh, ow) = t.output_dims(h, w);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(xv.len());
        for plane in xv.chunks_exact(h * w) {
            for i in 0..oh {
                for j in 0..ow {
                    let (sy, sx) = t.source_coords(h, w, i, j);
                    out.push(plane[sy * w + sx]);
                }
            }
        }
        self.push(Tensor::new([n, c, oh, ow], out), Op::Spatial { x, t }, &[x])
    }

    /// Inverted dropout with a caller-supplied keep mask.
    pub fn dropout(&mut self, x: Var, keep: &[bool], p: f64) -> Var {
        assert_eq!(keep.len(), self.value(x).len(), "dropout mask length");
        let scale = T::lit(1.0 / (1.0 - p));
        let mask: Vec<T> = keep.iter().map(|&k| if k { scale } else { T::zero() }).collect();
        let shape = self.value(x).shape().to_vec();
        let out = self.value(x).data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.push(Tensor::new(shape, out), Op::Dropout { x, mask }, &[x])
    }

    pub fn max_pool(&mut self, x: Var, kernel: usize, stride: usize, pad: usize) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let oh = (h + 2 * pad - kernel) / stride + 1;
        let ow = (w + 2 * pad - kernel) / stride + 1;
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for (pi, plane) in xv.chunks_exact(h * w).enumerate() {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut at = 0;
                    for ki in 0..kernel {
                        let y = (i * stride + ki) as isize - pad as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for kj in 0..kernel {
                            let xx = (j * stride + kj) as isize - pad as isize;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            let idx = y as usize * w + xx as usize;
                            if plane[idx] > best {
                                best = plane[idx];
                                at = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(pi * h * w + at);
                }
            }
        }
        self.push(Tensor::new([n, c, oh, ow], out), Op::MaxPool { x, argmax }, &[x])
    }

    /// `N×C×H×W → N×C`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let inv = T::lit(1.0 / (h * w) as f64);
        let out: Vec<T> = self
            .value(x)
            .data()
            .chunks_exact(h * w)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        self.push(Tensor::new([n, c], out), Op::GlobalAvgPool(x), &[x])
    }

    /// `x: N×I`, `w: O×I`, `b: O` → `N×O`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (n, i) = self.value(x).dims2();
        let (o, wi) = self.value(w).dims2();
        assert_eq!(i, wi, "linear input mismatch");
        let mut out = Tensor::zeros([n, o]);
        T::gemm(
            n,
            i,
            o,
            T::one(),
            self.value(x).data(),
            (i, 1),
            self.value(w).data(),
            (1, i),
            T::zero(),
            out.data_mut(),
            (o, 1),
        );
        if let Some(b) = b {
            let bv = self.value(b).data().to_vec();
            for row in out.data_mut().chunks_exact_mut(o) {
                for (v, &bb) in row.iter_mut().zip(&bv) {
                    *v += bb;
                }
            }
        }
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        self.push(out, Op::Linear { x, w, b }, &inputs)
    }

    /// `mean |a − b|`.
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "l1 shape mismatch");
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let s: T = av.iter().zip(bv).map(|(&x, &y)| (x - y).abs()).sum();
        let out = Tensor::scalar(s / T::lit(av.len() as f64));
        self.push(out, Op::MeanAbsDiff(a, b), &[a, b])
    }

    /// `mean (x − target)²`.
    pub fn mean_squared_to(&mut self, x: Var, target: f64) -> Var {
        let t = T::lit(target);
        let xv = self.value(x).data();
        let s: T = xv.iter().map(|&v| (v - t) * (v - t)).sum();
        let out = Tensor::scalar(s / T::lit(xv.len() as f64));
        self.push(out, Op::MeanSquaredTo { x, target: t }, &[x])
    }

    /// Mean cross-entropy of row-wise softmax against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let (n, k) = self.value(logits).dims2();
        assert_eq!(labels.len(), n, "one label per row");
        let probs = softmax_rows(self.value(logits).data(), k);
        let mut loss = T::zero();
        for (row, &l) in labels.iter().enumerate() {
            assert!(l < k, "label {l} out of range");
            loss -= probs[row * k + l].max(T::min_positive_value()).ln();
        }
        let out = Tensor::scalar(loss / T::lit(n as f64));
        self.push(
            out,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// `Σ wᵢ · sᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let terms: Vec<(Var, T)> = terms.iter().map(|&(v, w)| (v, T::lit(w))).collect();
        let mut total = T::zero();
        for &(v, w) in &terms {
            total += self.value(v).item() * w;
        }
        let inputs: Vec<Var> = terms.iter().map(|t| t.0).collect();
        self.push(Tensor::scalar(total), Op::WeightedSum(terms), &inputs)
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(self.value(root).len(), 1, "backward() needs a scalar root");
        self.backward_from(root, Tensor::full(self.shape(root).to_vec(), T::one()))
    }

    /// Backpropagates an explicit upstream gradient for `root`.
    pub fn backward_from(&self, root: Var, seed: Tensor<T>) -> Gradients<T> {
        assert_eq!(seed.shape(), self.shape(root), "seed shape mismatch");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            &Op::Conv2d { x, w, b, stride, pad } => {
                let xt = self.value(x);
                let wt = self.value(w);
                let (n, c, h, wd) = xt.dims4();
                let o = wt.shape()[0];
                let g_geom = ConvGeom::new(c, h, wd, wt.shape()[2], stride, pad);
                let (in_per, out_per) = (c * h * wd, o * g_geom.col_cols());
                let mut cols = Vec::new();
                if self.requires_grad(w) {
                    let mut dw = Tensor::zeros(wt.shape().to_vec());
                    for s in 0..n {
                        kernels::conv_weight_grad_sample(
                            &xt.data()[s * in_per..(s + 1) * in_per],
                            &gd[s * out_per..(s + 1) * out_per],
                            &g_geom,
                            o,
                            &mut cols,
                            dw.data_mut(),
                        );
                    }
                    self.accumulate(grads, w, dw);
                }
                if self.requires_grad(x) {
                    let mut dx = Tensor::zeros(xt.shape().to_vec());
                    for s in 0..n {
                        kernels::conv_input_grad_sample(
                            wt.data(),
                            &gd[s * out_per..(s + 1) * out_per],
                            &g_geom,
                            o,
                            &mut cols,
                            &mut dx.data_mut()[s * in_per..(s + 1) * in_per],
                        );
                    }
                    self.accumulate(grads, x, dx);
                }
                if let Some(b) = b {
                    self.accumulate(grads, b, channel_sums(gd, o, g_geom.col_cols()));
                }
            }
            &Op::ConvTranspose2d { x, w, b, stride, pad } => {
                let xt = self.value(x);
                let wt = self.value(w);
                let (n, cin, h, wd) = xt.dims4();
                let (_, cout, oh, ow) = node.value.dims4();
                let geom = ConvGeom::new(cout, oh, ow, wt.shape()[2], stride, pad);
                let (r, p) = (geom.col_rows(), geom.col_cols());
                debug_assert_eq!(p, h * wd);
                let out_per = cout * oh * ow;
                let mut dcols = vec![T::zero(); r * p];
                let mut dx = self.requires_grad(x).then(|| Tensor::zeros(xt.shape().to_vec()));
                let mut dw = self.requires_grad(w).then(|| Tensor::zeros(wt.shape().to_vec()));
                for s in 0..n {
                    kernels::im2col(&gd[s * out_per..(s + 1) * out_per], &geom, &mut dcols);
                    if let Some(dx) = dx.as_mut() {
                        T::gemm(
                            cin,
                            r,
                            p,
                            T::one(),
                            wt.data(),
                            (r, 1),
                            &dcols,
                            (p, 1),
                            T::zero(),
                            &mut dx.data_mut()[s * cin * p..(s + 1) * cin * p],
                            (p, 1),
                        );
                    }
                    if let Some(dw) = dw.as_mut() {
                        T::gemm(
                            cin,
                            p,
                            r,
                            T::one(),
                            &xt.data()[s * cin * p..(s + 1) * cin * p],
                            (p, 1),
                            &dcols,
                            (1, p),
                            T::one(),
                            dw.data_mut(),
                            (r, 1),
                        );
                    }
                }
                if let Some(dx) = dx {
                    self.accumulate(grads, x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, w, dw);
                }
                if let Some(b) = b {
                    self.accumulate(grads, b, channel_sums(gd, cout, oh * ow));
                }
            }
            &Op::ReflectPad { x, pad } => {
                let (n, c, h, w) = self.value(x).dims4();
                let (oh, ow) = (h + 2 * pad, w + 2 * pad);
                let mut dx = Tensor::zeros([n, c, h, w]);
                for (dst, src) in dx.data_mut().chunks_exact_mut(h * w).zip(gd.chunks_exact(oh * ow)) {
                    for i in 0..oh {
                        let sy = reflect(i, pad, h);
                        for j in 0..ow {
                            dst[sy * w + reflect(j, pad, w)] += src[i * ow + j];
                        }
                    }
                }
                self.accumulate(grads, x, dx);
            }
            Op::Normalize { x, kind, inv_std, .. } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let hw = h * w;
                let y = node.value.data();
                let groups = inv_std.len();
                let group_of = |idx: usize| match kind {
                    NormKind::Instance => idx / hw,
                    NormKind::Batch => (idx / hw) % c,
                };
                let count = T::lit((n * c * hw / groups) as f64);
                let mut mean_g = vec![T::zero(); groups];
                let mut mean_gy = vec![T::zero(); groups];
                for i in 0..gd.len() {
                    let k = group_of(i);
                    mean_g[k] += gd[i];
                    mean_gy[k] += gd[i] * y[i];
                }
                for k in 0..groups {
                    mean_g[k] /= count;
                    mean_gy[k] /= count;
                }
                let dx: Vec<T> = (0..gd.len())
                    .map(|i| {
                        let k = group_of(i);
                        inv_std[k] * (gd[i] - mean_g[k] - y[i] * mean_gy[k])
                    })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(node.value.shape().to_vec(), dx));
            }
            &Op::ChannelAffine { x, scale, shift } => {
                let shape = node.value.shape();
                let c = shape[1];
                let plane: usize = shape[2..].iter().product();
                let sv = self.value(scale).data();
                let xv = self.value(x).data();
                if self.requires_grad(x) {
                    let dx = gd.iter().enumerate().map(|(i, &d)| d * sv[(i / plane) % c]).collect();
                    self.accumulate(grads, x, Tensor::new(shape.to_vec(), dx));
                }
                if self.requires_grad(scale) || self.requires_grad(shift) {
                    let mut ds = vec![T::zero(); c];
                    let mut db = vec![T::zero(); c];
                    for (i, &d) in gd.iter().enumerate() {
                        let ch = (i / plane) % c;
                        ds[ch] += d * xv[i];
                        db[ch] += d;
                    }
                    self.accumulate(grads, scale, Tensor::new([c], ds));
                    self.accumulate(grads, shift, Tensor::new([c], db));
                }
            }
            &Op::Relu(x) => {
                let y = node.value.data();
                let dx = gd.iter().zip(y).map(|(&d, &v)| if v > T::zero() { d } else { T::zero() }).collect();
                self.accumulate(grads, x, Tensor::new(node.value.shape().to_vec(), dx));
            }
            &Op::LeakyRelu(x, s) => {
                let xv = self.value(x).data();
                let dx = gd.iter().zip(xv).map(|(&d, &v)| if v > T::zero() { d } else { d * s }).collect();
                self.accumulate(grads, x, Tensor::new(node.value.shape().to_vec(), dx));
            }
            &Op::Tanh(x) => {
                let y = node.value.data();
                let dx = gd.iter().zip(y).map(|(&d, &v)| d * (T::one() - v * v)).collect();
                self.accumulate(grads, x, Tensor::new(node.value.shape().to_vec(), dx));
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            &Op::Affine { x, mul } => {
                self.accumulate(grads, x, g.map(|d| d * mul));
            }
            &Op::Spatial { x, t } => {
                let (n, c, h, w) = self.value(x).dims4();
                let (oh, ow) = t.output_dims(h, w);
                let mut dx = Tensor::zeros([n, c, h, w]);
                for (dst, src) in dx.data_mut().chunks_exact_mut(h * w).zip(gd.chunks_exact(oh * ow)) {
                    for i in 0..oh {
                        for j in 0..ow {
                            let (sy, sx) = t.source_coords(h, w, i, j);
                            dst[sy * w + sx] += src[i * ow + j];
                        }
                    }
                }
                self.accumulate(grads, x, dx);
            }
            Op::Dropout { x, mask } => {
                let dx = gd.iter().zip(mask).map(|(&d, &m)| d * m).collect();
                self.accumulate(grads, *x, Tensor::new(node.value.shape().to_vec(), dx));
            }
            Op::MaxPool { x, argmax } => {
                let mut dx = Tensor::zeros(self.value(*x).shape().to_vec());
                for (&d, &at) in gd.iter().zip(argmax) {
                    dx.data_mut()[at] += d;
                }
                self.accumulate(grads, *x, dx);
            }
            &Op::GlobalAvgPool(x) => {
                let (n, c, h, w) = self.value(x).dims4();
                let inv = T::lit(1.0 / (h * w) as f64);
                let mut dx = Vec::with_capacity(n * c * h * w);
                for &d in gd {
                    dx.extend(std::iter::repeat_n(d * inv, h * w));
                }
                self.accumulate(grads, x, Tensor::new([n, c, h, w], dx));
            }
            &Op::Linear { x, w, b } => {
                let (n, i) = self.value(x).dims2();
                let (o, _) = self.value(w).dims2();
                if self.requires_grad(x) {
                    let mut dx = Tensor::zeros([n, i]);
                    T::gemm(n, o, i, T::one(), gd, (o, 1), self.value(w).data(), (i, 1), T::zero(), dx.data_mut(), (i, 1));
                    self.accumulate(grads, x, dx);
                }
                if self.requires_grad(w) {
                    let mut dw = Tensor::zeros([o, i]);
                    T::gemm(o, n, i, T::one(), gd, (1, o), self.value(x).data(), (i, 1), T::zero(), dw.data_mut(), (i, 1));
                    self.accumulate(grads, w, dw);
                }
                if let Some(b) = b {
                    let mut db = vec![T::zero(); o];
                    for row in gd.chunks_exact(o) {
                        for (acc, &d) in db.iter_mut().zip(row) {
                            *acc += d;
                        }
                    }
                    self.accumulate(grads, b, Tensor::new([o], db));
                }
            }
            &Op::MeanAbsDiff(a, b) => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                let scale = gd[0] / T::lit(av.len() as f64);
                let da: Vec<T> = av
                    .iter()
                    .zip(bv)
                    .map(|(&x, &y)| {
                        if x > y {
                            scale
                        } else if x < y {
                            -scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                let shape = self.shape(a).to_vec();
                if self.requires_grad(b) {
                    self.accumulate(grads, b, Tensor::new(shape.clone(), da.iter().map(|&v| -v).collect()));
                }
                self.accumulate(grads, a, Tensor::new(shape, da));
            }
            &Op::MeanSquaredTo { x, target } => {
                let xv = self.value(x);
                let scale = gd[0] * T::lit(2.0 / xv.len() as f64);
                self.accumulate(grads, x, xv.map(|v| (v - target) * scale));
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let (n, k) = self.value(*logits).dims2();
                let scale = gd[0] / T::lit(n as f64);
                let mut d = probs.clone();
                for (row, &l) in labels.iter().enumerate() {
                    d[row * k + l] -= T::one();
                }
                for v in &mut d {
                    *v *= scale;
                }
                self.accumulate(grads, *logits, Tensor::new([n, k], d));
            }
            Op::WeightedSum(terms) => {
                for &(v, w) in terms {
                    let shape = self.shape(v).to_vec();
                    self.accumulate(grads, v, Tensor::full(shape, gd[0] * w));
                }
            }
        }
    }
}

#[inline]
fn reflect(i: usize, pad: usize, n: usize) -> usize {
    let k = i as isize - pad as isize;
    let r = if k < 0 {
        -k
    } else if k >= n as isize {
        2 * (n as isize - 1) - k
    } else {
        k
    };
    r as usize
}

fn channel_sums<T: Scalar>(gd: &[T], channels: usize, plane: usize) -> Tensor<T> {
    let mut db = vec![T::zero(); channels];
    for (i, chunk) in gd.chunks_exact(plane).enumerate() {
        db[i % channels] += chunk.iter().copied().sum::<T>();
    }
    Tensor::new([channels], db)
}

/// Numerically stable row-wise softmax of a `rows × k` buffer.
pub fn softmax_rows<T: Scalar>(logits: &[T], k: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
        let z: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / z));
    }
    out
}
