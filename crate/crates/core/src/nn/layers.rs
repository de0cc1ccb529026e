//! Parameterized building blocks. Each layer only stores [`ParamId`]s; the
//! weights live in a [`ParamStore`] and are placed on a tape per step.

use rand::Rng;

use super::tape::{NormKind, Tape, Var, NORM_EPS};
use super::{Bound, Init, ParamId, ParamStore, Scalar, Tensor};

/// Per-forward-pass state: whether batch statistics are used, and where
/// batch-norm layers report the statistics they computed.
#[derive(Debug, Default)]
pub struct ForwardCtx {
    pub training: bool,
    pub bn_records: Vec<BnRecord>,
}

impl ForwardCtx {
    pub fn train() -> Self {
        Self {
            training: true,
            bn_records: Vec::new(),
        }
    }

    pub fn eval() -> Self {
        Self::default()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BnRecord {
    running_mean: ParamId,
    running_var: ParamId,
    norm: Var,
    count: usize,
    momentum: f64,
}

/// Folds batch statistics recorded during a training forward pass into the
/// running estimates (unbiased variance, exponential moving average).
pub fn apply_bn_records<T: Scalar>(store: &mut ParamStore<T>, tape: &Tape<T>, records: &[BnRecord]) {
    for r in records {
        let (mean, var) = tape.batch_stats(r.norm).expect("batch-norm node");
        let (mean, var) = (mean.to_vec(), var.to_vec());
        let m = T::lit(r.momentum);
        let unbias = T::lit(r.count as f64 / (r.count.max(2) - 1) as f64);
        for (rm, &bm) in store.get_mut(r.running_mean).data_mut().iter_mut().zip(&mean) {
            *rm = (T::one() - m) * *rm + m * bm;
        }
        for (rv, &bv) in store.get_mut(r.running_var).data_mut().iter_mut().zip(&var) {
            *rv = (T::one() - m) * *rv + m * bv * unbias;
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        init: Init,
    ) -> Self {
        let weight = store.add_param(format!("{name}.weight"), &[out_ch, in_ch, kernel, kernel], init, rng);
        let bias = bias.then(|| store.add_param(format!("{name}.bias"), &[out_ch], Init::Zeros, rng));
        Self {
            weight,
            bias,
            stride,
            pad,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound<T>, x: Var) -> Var {
        tape.conv2d(x, p.var(self.weight), self.bias.map(|b| p.var(b)), self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
    pub output_padding: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        output_padding: usize,
        bias: bool,
        init: Init,
    ) -> Self {
        let weight = store.add_param(format!("{name}.weight"), &[in_ch, out_ch, kernel, kernel], init, rng);
        let bias = bias.then(|| store.add_param(format!("{name}.bias"), &[out_ch], Init::Zeros, rng));
        Self {
            weight,
            bias,
            stride,
            pad,
            output_padding,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound<T>, x: Var) -> Var {
        tape.conv_transpose2d(
            x,
            p.var(self.weight),
            self.bias.map(|b| p.var(b)),
            self.stride,
            self.pad,
            self.output_padding,
        )
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    /// Weights and bias uniform in `±1/sqrt(in)`.
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut impl Rng, name: &str, input: usize, output: usize) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = store.add_param(format!("{name}.weight"), &[output, input], Init::Uniform { bound }, rng);
        let bias = store.add_param(format!("{name}.bias"), &[output], Init::Uniform { bound }, rng);
        Self { weight, bias }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound<T>, x: Var) -> Var {
        tape.linear(x, p.var(self.weight), Some(p.var(self.bias)))
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
}

impl BatchNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut impl Rng, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add_param(format!("{name}.gamma"), &[channels], Init::Ones, rng),
            beta: store.add_param(format!("{name}.beta"), &[channels], Init::Zeros, rng),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros([channels])),
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::full([channels], T::one())),
            momentum: 0.1,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound<T>, x: Var, ctx: &mut ForwardCtx) -> Var {
        if ctx.training {
            let (n, _, h, w) = tape.value(x).dims4();
            let norm = tape.normalize(x, NormKind::Batch);
            ctx.bn_records.push(BnRecord {
                running_mean: self.running_mean,
                running_var: self.running_var,
                norm,
                count: n * h * w,
                momentum: self.momentum,
            });
            tape.channel_affine(norm, p.var(self.gamma), p.var(self.beta))
        } else {
            // Running statistics fold into one per-channel affine map whose
            // coefficients are constants on the tape.
            let eps = T::lit(NORM_EPS);
            let (g, b) = (p.value(self.gamma).data(), p.value(self.beta).data());
            let (rm, rv) = (p.value(self.running_mean).data(), p.value(self.running_var).data());
            let scale: Vec<T> = g.iter().zip(rv).map(|(&g, &v)| g / (v + eps).sqrt()).collect();
            let shift: Vec<T> = b.iter().zip(rm).zip(&scale).map(|((&b, &m), &s)| b - m * s).collect();
            let c = scale.len();
            let sv = tape.constant(Tensor::new([c], scale));
            let bv = tape.constant(Tensor::new([c], shift));
            tape.channel_affine(x, sv, bv)
        }
    }
}
