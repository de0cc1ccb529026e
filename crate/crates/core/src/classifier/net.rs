use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{BatchNorm2d, Bound, Conv2d, ForwardCtx, Init, Linear, ParamStore, Scalar, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    /// 50-layer bottleneck network, initialized from a weight archive.
    Residual50Pretrained,
    /// Nine-convolution basic-block network trained from scratch.
    ResidualSmallScratch,
}

impl Backbone {
    pub fn name(self) -> &'static str {
        match self {
            Backbone::Residual50Pretrained => "residual50_pretrained",
            Backbone::ResidualSmallScratch => "residual_small_scratch",
        }
    }
}

impl std::str::FromStr for Backbone {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "residual50_pretrained" => Ok(Backbone::Residual50Pretrained),
            "residual_small_scratch" => Ok(Backbone::ResidualSmallScratch),
            other => Err(format!("unknown backbone '{other}'")),
        }
    }
}

#[derive(Clone, Debug)]
struct ConvBn {
    conv: Conv2d,
    bn: BatchNorm2d,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    fn new<T: Scalar>(s: &mut ParamStore<T>, rng: &mut impl Rng, name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Self {
        let init = Init::Kaiming { fan: cout * k * k };
        Self {
            conv: Conv2d::new(s, rng, &format!("{name}.conv"), cin, cout, k, stride, pad, false, init),
            bn: BatchNorm2d::new(s, rng, &format!("{name}.bn"), cout),
        }
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound<T>, x: Var, ctx: &mut ForwardCtx) -> Var {
        let h = self.conv.forward(tape, p, x);
        self.bn.forward(tape, p, h, ctx)
    }
}

#[derive(Clone, Debug)]
struct Block {
    /// Two 3x3 layers (basic) or 1x1, 3x3, 1x1 (bottleneck).
    layers: Vec<ConvBn>,
    shortcut: Option<ConvBn>,
}

impl Block {
    fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound<T>, x: Var, ctx: &mut ForwardCtx) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(tape, p, h, ctx);
            if i < last {
                h = tape.relu(h);
            }
        }
        let skip = match &self.shortcut {
            Some(s) => s.forward(tape, p, x, ctx),
            None => x,
        };
        let sum = tape.add(h, skip);
        tape.relu(sum)
    }
}

/// Residual image classifier with batch normalization and a two-class head.
#[derive(Clone, Debug)]
pub struct ResidualNet<T: Scalar> {
    backbone: Backbone,
    pub store: ParamStore<T>,
    stem: ConvBn,
    max_pool: bool,
    blocks: Vec<Block>,
    fc: Linear,
}

pub struct NetOutput {
    pub logits: Var,
    /// Output of the last convolutional block.
    pub features: Var,
}

impl<T: Scalar> ResidualNet<T> {
    pub fn new(backbone: Backbone, rng: &mut impl Rng) -> Self {
        let mut s = ParamStore::new();
        let mut blocks = Vec::new();
        let (stem, max_pool, out_ch) = match backbone {
            Backbone::ResidualSmallScratch => {
                let stem = ConvBn::new(&mut s, rng, "stem", 3, 16, 3, 2, 1);
                let mut cin = 16;
                for (i, &(width, stride)) in [(16, 1), (32, 2), (64, 1)].iter().enumerate() {
                    let name = format!("stage{i}.0");
                    let shortcut = (stride != 1 || cin != width).then(|| ConvBn::new(&mut s, rng, &format!("{name}.down"), cin, width, 1, stride, 0));
                    let layers = vec![
                        ConvBn::new(&mut s, rng, &format!("{name}.a"), cin, width, 3, stride, 1),
                        ConvBn::new(&mut s, rng, &format!("{name}.b"), width, width, 3, 1, 1),
                    ];
                    blocks.push(Block { layers, shortcut });
                    cin = width;
                }
                (stem, false, cin)
            }
            Backbone::Residual50Pretrained => {
                let stem = ConvBn::new(&mut s, rng, "stem", 3, 64, 7, 2, 3);
                let mut cin = 64;
                for (i, &(n, width, stride)) in [(3, 64, 1), (4, 128, 2), (6, 256, 2), (3, 512, 2)].iter().enumerate() {
                    for b in 0..n {
                        let name = format!("stage{i}.{b}");
                        let st = if b == 0 { stride } else { 1 };
                        let out = width * 4;
                        let shortcut = (b == 0).then(|| ConvBn::new(&mut s, rng, &format!("{name}.down"), cin, out, 1, st, 0));
                        let layers = vec![
                            ConvBn::new(&mut s, rng, &format!("{name}.a"), cin, width, 1, 1, 0),
                            ConvBn::new(&mut s, rng, &format!("{name}.b"), width, width, 3, st, 1),
                            ConvBn::new(&mut s, rng, &format!("{name}.c"), width, out, 1, 1, 0),
                        ];
                        blocks.push(Block { layers, shortcut });
                        cin = out;
                    }
                }
                (stem, true, cin)
            }
        };
        let fc = Linear::new(&mut s, rng, "fc", out_ch, 2);
        Self {
            backbone,
            store: s,
            stem,
            max_pool,
            blocks,
            fc,
        }
    }

    pub fn backbone(&self) -> Backbone {
        self.backbone
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_parameters()
    }

    pub fn num_conv_layers(&self) -> usize {
        1 + self
            .blocks
            .iter()
            .map(|b| b.layers.len() + b.shortcut.is_some() as usize)
            .sum::<usize>()
    }

    /// Names of the classification head's tensors.
    pub fn head_names() -> [&'static str; 2] {
        ["fc.weight", "fc.bias"]
    }

    pub fn forward(&self, tape: &mut Tape<T>, p: &Bound<T>, x: Var, ctx: &mut ForwardCtx) -> NetOutput {
        let mut h = self.stem.forward(tape, p, x, ctx);
        h = tape.relu(h);
        if self.max_pool {
            h = tape.max_pool(h, 3, 2, 1);
        }
        for b in &self.blocks {
            h = b.forward(tape, p, h, ctx);
        }
        let features = h;
        let pooled = tape.global_avg_pool(h);
        let logits = self.fc.forward(tape, p, pooled);
        NetOutput { logits, features }
    }
}
