//! Geometry-consistent unpaired translation from flat renders to the
//! pseudo-real style: one generator, a least-squares patch discriminator,
//! and an L1 penalty on `G(t(x))` versus `t(G(x))`.

mod nets;
mod train;

use serde::{Deserialize, Serialize};

use crate::checkpoint::CheckpointError;
use crate::imaging::{apply_transform, GeoTransform, ImageTensor, ImagingError};

pub use nets::{Discriminator, DiscriminatorArch, Generator, GeneratorArch};
pub use train::{
    convert, generator_objective, load_generator, save_generator, train, write_loss_log, ConversionRecord, EpochLosses, ObjectiveParts,
    TrainOutcome, TrainState, GENERATOR_KIND,
};

#[derive(Debug, thiserror::Error)]
pub enum GcganError {
    #[error("invalid translator config: {0}")]
    InvalidConfig(String),
    #[error("epoch {epoch} outside schedule of {total} epochs")]
    EpochOutOfRange { epoch: usize, total: usize },
    #[error("{0} set is empty")]
    EmptyManifest(&'static str),
    #[error("image {id} is {got:?}, expected {expected}x{expected}x3")]
    SizeMismatch {
        id: String,
        expected: usize,
        got: (usize, usize, usize),
    },
    #[error("generator weights unavailable: {0}")]
    MissingWeights(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcganConfig {
    pub gc_transform: GeoTransform,
    pub lambda_gc: f64,
    /// Relative weight of the identity term; its L1 weight is
    /// `lambda_idt * l1_base_weight`.
    pub lambda_idt: f64,
    /// Base weight of L1 terms in the translator convention the loss weights
    /// come from.
    pub l1_base_weight: f64,
    pub dropout_enabled: bool,
    pub input_size: usize,
    pub batch_size: usize,
    pub epochs_flat: usize,
    pub epochs_decay: usize,
    pub base_lr: f64,
    pub seed: u64,
    pub generator: GeneratorArch,
    pub discriminator: DiscriminatorArch,
    /// Share of each image set held out for best-epoch selection.
    pub holdout_fraction: f64,
    /// First (0-based) epoch eligible as the returned model.
    pub select_from_epoch: usize,
}

impl Default for GcganConfig {
    fn default() -> Self {
        Self {
            gc_transform: GeoTransform::Vflip,
            lambda_gc: 20.0,
            lambda_idt: 0.5,
            l1_base_weight: 10.0,
            dropout_enabled: false,
            input_size: 200,
            batch_size: 12,
            epochs_flat: 400,
            epochs_decay: 200,
            base_lr: 2e-4,
            seed: 0,
            generator: GeneratorArch::paper(),
            discriminator: DiscriminatorArch::paper(),
            holdout_fraction: 0.1,
            select_from_epoch: 200,
        }
    }
}

impl GcganConfig {
    pub fn desk() -> Self {
        Self {
            input_size: 64,
            batch_size: 4,
            epochs_flat: 30,
            epochs_decay: 30,
            generator: GeneratorArch::desk(),
            discriminator: DiscriminatorArch::desk(),
            select_from_epoch: 30,
            ..Self::default()
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_flat + self.epochs_decay
    }

    pub fn validate(&self) -> Result<(), GcganError> {
        let bad = |m: &str| Err(GcganError::InvalidConfig(m.into()));
        if self.gc_transform == GeoTransform::Identity {
            return bad("gc_transform must not be identity");
        }
        if [self.lambda_gc, self.lambda_idt, self.l1_base_weight].iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("loss weights must be finite and non-negative");
        }
        if self.total_epochs() == 0 {
            return bad("epochs_flat and epochs_decay are both 0");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        let stride = 1usize << self.generator.n_downsample;
        if self.input_size < ImageTensor::MIN_SIDE || self.input_size % stride != 0 {
            return bad("input_size must be at least 8 and divisible by the generator stride");
        }
        if !(0.0..0.5).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must be in [0, 0.5)");
        }
        if self.select_from_epoch >= self.total_epochs() {
            return bad("select_from_epoch must fall inside the schedule");
        }
        Ok(())
    }
}

/// Learning rate for 0-based `epoch`: flat, then linear decay reaching 0 at
/// the last epoch.
pub fn lr_at(epoch: usize, cfg: &GcganConfig) -> Result<f64, GcganError> {
    let total = cfg.total_epochs();
    if epoch >= total {
        return Err(GcganError::EpochOutOfRange { epoch, total });
    }
    if epoch < cfg.epochs_flat {
        return Ok(cfg.base_lr);
    }
    let progress = (epoch - cfg.epochs_flat + 1) as f64 / cfg.epochs_decay as f64;
    Ok(cfg.base_lr * (1.0 - progress))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdversarialRole {
    Generator,
    Discriminator,
}

/// Least-squares adversarial loss over patch scores. The generator role
/// ignores `real`.
pub fn adversarial_loss(real: &[f64], fake: &[f64], role: AdversarialRole) -> f64 {
    let mean_sq = |s: &[f64], target: f64| s.iter().map(|v| (v - target).powi(2)).sum::<f64>() / s.len().max(1) as f64;
    match role {
        AdversarialRole::Generator => mean_sq(fake, 1.0),
        AdversarialRole::Discriminator => {
            assert_eq!(real.len(), fake.len(), "score arrays differ in size");
            mean_sq(real, 1.0) + mean_sq(fake, 0.0)
        }
    }
}

fn mean_l1(a: &ImageTensor, b: &ImageTensor) -> f64 {
    assert_eq!(a.dims(), b.dims(), "image sizes differ");
    let n = a.pixels().len() as f64;
    a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs()).sum::<f64>() / n
}

/// Mean of `|G(t(x)) - t(G(x))|` over the batch and every pixel value.
pub fn geometry_consistency_loss(g: impl Fn(&ImageTensor) -> ImageTensor, x: &[ImageTensor], t: GeoTransform) -> f64 {
    let total: f64 = x
        .iter()
        .map(|img| mean_l1(&g(&apply_transform(img, t)), &apply_transform(&g(img), t)))
        .sum();
    total / x.len().max(1) as f64
}

/// Mean of `|G(y) - y|` over the batch and every pixel value.
pub fn identity_mapping_loss(g: impl Fn(&ImageTensor) -> ImageTensor, y: &[ImageTensor]) -> f64 {
    y.iter().map(|img| mean_l1(&g(img), img)).sum::<f64>() / y.len().max(1) as f64
}

#[cfg(test)]
mod tests;
