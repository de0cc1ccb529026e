//! Encoder / residual-block / decoder generator and patch discriminator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imaging::ImageTensor;
use crate::nn::{batch_to_images, images_to_batch, Bound, Conv2d, ConvTranspose2d, Init, NormKind, ParamStore, Scalar, Tape, Var};

const INIT: Init = Init::Normal { std: 0.02 };
const DROPOUT_P: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorArch {
    /// Channels after the stem; doubled by each downsampling.
    pub ngf: usize,
    pub n_downsample: usize,
    pub n_blocks: usize,
    /// Kernel of the stem and head convolutions.
    pub outer_kernel: usize,
}

impl GeneratorArch {
    pub fn desk() -> Self {
        Self {
            ngf: 8,
            n_downsample: 2,
            n_blocks: 3,
            outer_kernel: 7,
        }
    }

    pub fn paper() -> Self {
        Self {
            ngf: 64,
            n_downsample: 2,
            n_blocks: 9,
            outer_kernel: 7,
        }
    }

    /// Under 500 parameters, for finite-difference checks.
    pub fn micro() -> Self {
        Self {
            ngf: 1,
            n_downsample: 1,
            n_blocks: 2,
            outer_kernel: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorArch {
    pub ndf: usize,
    /// Number of stride-2 convolutions.
    pub n_layers: usize,
}

impl DiscriminatorArch {
    pub fn desk() -> Self {
        Self { ndf: 16, n_layers: 2 }
    }

    pub fn paper() -> Self {
        Self { ndf: 64, n_layers: 3 }
    }

    pub fn micro() -> Self {
        Self { ndf: 2, n_layers: 1 }
    }
}

/// Maps `[-1, 1]` images to `[-1, 1]` images of the same size (tanh output).
#[derive(Clone, Debug)]
pub struct Generator<T: Scalar> {
    arch: GeneratorArch,
    pub store: ParamStore<T>,
    stem: Conv2d,
    down: Vec<Conv2d>,
    blocks: Vec<(Conv2d, Conv2d)>,
    up: Vec<ConvTranspose2d>,
    head: Conv2d,
}

impl<T: Scalar> Generator<T> {
    pub fn new(arch: GeneratorArch, rng: &mut impl Rng) -> Self {
        assert!(arch.ngf >= 1 && arch.outer_kernel % 2 == 1, "invalid generator arch");
        let mut s = ParamStore::new();
        let k = arch.outer_kernel;
        let stem = Conv2d::new(&mut s, rng, "stem", 3, arch.ngf, k, 1, 0, false, INIT);
        let mut ch = arch.ngf;
        let down = (0..arch.n_downsample)
            .map(|i| {
                let c = Conv2d::new(&mut s, rng, &format!("down{i}"), ch, ch * 2, 3, 2, 1, false, INIT);
                ch *= 2;
                c
            })
            .collect();
        let blocks = (0..arch.n_blocks)
            .map(|i| {
                (
                    Conv2d::new(&mut s, rng, &format!("block{i}.a"), ch, ch, 3, 1, 0, false, INIT),
                    Conv2d::new(&mut s, rng, &format!("block{i}.b"), ch, ch, 3, 1, 0, false, INIT),
                )
            })
            .collect();
        let up = (0..arch.n_downsample)
            .map(|i| {
                let c = ConvTranspose2d::new(&mut s, rng, &format!("up{i}"), ch, ch / 2, 3, 2, 1, 1, false, INIT);
                ch /= 2;
                c
            })
            .collect();
        let head = Conv2d::new(&mut s, rng, "head", ch, 3, k, 1, 0, true, INIT);
        Self {
            arch,
            store: s,
            stem,
            down,
            blocks,
            up,
            head,
        }
    }

    /// Rebuilds the layout for `arch` and fills it from `store`.
    pub fn from_store(arch: GeneratorArch, store: &ParamStore<T>) -> Result<Self, String> {
        let mut g = Self::new(arch, &mut ChaCha8Rng::seed_from_u64(0));
        let missing = g.store.load_matching(store)?;
        if !missing.is_empty() {
            return Err(format!("missing generator tensors: {}", missing.join(", ")));
        }
        Ok(g)
    }

    pub fn arch(&self) -> &GeneratorArch {
        &self.arch
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_parameters()
    }

    /// Input must be at least `2^n_downsample`-divisible. With `dropout`,
    /// each residual block drops half its hidden units.
    pub fn forward(&self, tape: &mut Tape<T>, p: &Bound<T>, x: Var, mut dropout: Option<&mut ChaCha8Rng>) -> Var {
        let pad = self.arch.outer_kernel / 2;
        let mut h = tape.reflect_pad(x, pad);
        h = self.stem.forward(tape, p, h);
        h = tape.normalize(h, NormKind::Instance);
        h = tape.relu(h);
        for d in &self.down {
            h = d.forward(tape, p, h);
            h = tape.normalize(h, NormKind::Instance);
            h = tape.relu(h);
        }
        for (a, b) in &self.blocks {
            let mut r = tape.reflect_pad(h, 1);
            r = a.forward(tape, p, r);
            r = tape.normalize(r, NormKind::Instance);
            r = tape.relu(r);
            if let Some(rng) = dropout.as_deref_mut() {
                let keep: Vec<bool> = (0..tape.value(r).len()).map(|_| rng.random::<f64>() >= DROPOUT_P).collect();
                r = tape.dropout(r, &keep, DROPOUT_P);
            }
            r = tape.reflect_pad(r, 1);
            r = b.forward(tape, p, r);
            r = tape.normalize(r, NormKind::Instance);
            h = tape.add(h, r);
        }
        for u in &self.up {
            h = u.forward(tape, p, h);
            h = tape.normalize(h, NormKind::Instance);
            h = tape.relu(h);
        }
        h = tape.reflect_pad(h, pad);
        h = self.head.forward(tape, p, h);
        tape.tanh(h)
    }

    /// Inference on `[0, 1]` images, `batch` at a time.
    pub fn translate(&self, images: &[ImageTensor], batch: usize) -> Vec<ImageTensor> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(batch.max(1)) {
            let refs: Vec<&ImageTensor> = chunk.iter().collect();
            let mut tape = Tape::new();
            let p = self.store.bind(&mut tape, false);
            let x = tape.constant(images_to_batch(&refs));
            let x = tape.affine(x, 2.0, -1.0);
            let y = self.forward(&mut tape, &p, x, None);
            let y = tape.affine(y, 0.5, 0.5);
            out.extend(batch_to_images(tape.value(y)));
        }
        out
    }
}

/// Maps `[-1, 1]` images to a grid of real-valued patch scores.
#[derive(Clone, Debug)]
pub struct Discriminator<T: Scalar> {
    arch: DiscriminatorArch,
    pub store: ParamStore<T>,
    layers: Vec<Conv2d>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(arch: DiscriminatorArch, rng: &mut impl Rng) -> Self {
        assert!(arch.ndf >= 1 && arch.n_layers >= 1, "invalid discriminator arch");
        let mut s = ParamStore::new();
        let mut layers = vec![Conv2d::new(&mut s, rng, "conv0", 3, arch.ndf, 4, 2, 1, true, INIT)];
        let mut ch = arch.ndf;
        for i in 1..arch.n_layers {
            let next = arch.ndf * (1 << i.min(3));
            layers.push(Conv2d::new(&mut s, rng, &format!("conv{i}"), ch, next, 4, 2, 1, false, INIT));
            ch = next;
        }
        let next = arch.ndf * (1 << arch.n_layers.min(3));
        layers.push(Conv2d::new(&mut s, rng, &format!("conv{}", arch.n_layers), ch, next, 4, 1, 1, false, INIT));
        layers.push(Conv2d::new(&mut s, rng, "score", next, 1, 4, 1, 1, true, INIT));
        Self { arch, store: s, layers }
    }

    pub fn arch(&self) -> &DiscriminatorArch {
        &self.arch
    }

    pub fn forward(&self, tape: &mut Tape<T>, p: &Bound<T>, x: Var) -> Var {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, p, h);
            if i == last {
                break;
            }
            if i > 0 {
                h = tape.normalize(h, NormKind::Instance);
            }
            h = tape.leaky_relu(h, 0.2);
        }
        h
    }
}
