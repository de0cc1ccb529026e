//! Gradient-weighted class activation maps over a classifier's last
//! convolutional layer, heat overlays, and saliency mass inside a region.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Classifier, ClassifierError};
use crate::imaging::{resize_plane, ImageTensor, ImagingError, Label};
use crate::nn::{images_to_batch, Tape, Tensor, Var};
use crate::scenegen::LeverMask;

#[cfg(test)]
mod tests;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("model has no convolutional layer to explain")]
    NoConvLayer,
    #[error("size mismatch: expected {expected_h}x{expected_w}, got {got_h}x{got_w}")]
    SizeMismatch {
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },
    #[error("overlay alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Nodes of one forward pass that Grad-CAM needs.
pub struct Tapped {
    /// Class scores, shape `[1, classes]`.
    pub logits: Var,
    /// Activations of the last convolutional layer, shape `[1, C, h, w]`.
    pub last_conv: Option<Var>,
}

/// A model that can record its forward pass on a tape.
pub trait ConvModel {
    /// Converts an image into the network input (resizing, channel checks).
    fn prepare(&self, image_id: &str, img: &ImageTensor) -> Result<ImageTensor, ExplainError>;
    /// Inference-mode forward pass of a `[1, 3, H, W]` input.
    fn forward_tapped(&self, tape: &mut Tape<f32>, x: Var) -> Tapped;
}

impl ConvModel for Classifier {
    fn prepare(&self, image_id: &str, img: &ImageTensor) -> Result<ImageTensor, ExplainError> {
        Ok(Classifier::prepare(self, image_id, img)?)
    }

    fn forward_tapped(&self, tape: &mut Tape<f32>, x: Var) -> Tapped {
        let o = self.forward_eval(tape, x);
        Tapped {
            logits: o.logits,
            last_conv: Some(o.features),
        }
    }
}

/// Per-channel activations `A^k` and score gradients `dS/dA^k`, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvEvidence {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub activations: Vec<f64>,
    pub gradients: Vec<f64>,
}

impl ConvEvidence {
    /// `relu(sum_k alpha_k A^k)` with `alpha_k` the spatial mean of the
    /// gradient of channel `k`. Returned at the activation resolution.
    pub fn raw_map(&self) -> Vec<f64> {
        let plane = self.height * self.width;
        let mut map = vec![0.0; plane];
        for k in 0..self.channels {
            let g = &self.gradients[k * plane..(k + 1) * plane];
            let alpha = g.iter().sum::<f64>() / plane as f64;
            for (m, a) in map.iter_mut().zip(&self.activations[k * plane..(k + 1) * plane]) {
                *m += alpha * a;
            }
        }
        map.iter().map(|v| v.max(0.0)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    /// Row-major values in [0, 1].
    pub values: Vec<f64>,
    pub source_image_id: String,
    pub target_class: Label,
}

impl SaliencyMap {
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Upsamples a raw map bilinearly to `height x width` and scales its
    /// maximum to one. A map with no positive value stays all zero.
    pub fn from_raw(
        evidence: &ConvEvidence,
        height: usize,
        width: usize,
        source_image_id: impl Into<String>,
        target_class: Label,
    ) -> Self {
        let raw = evidence.raw_map();
        let mut values = resize_plane(&raw, evidence.height, evidence.width, height, width);
        let peak = values.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            for v in &mut values {
                *v = (*v / peak).clamp(0.0, 1.0);
            }
        } else {
            values.iter_mut().for_each(|v| *v = 0.0);
        }
        Self {
            height,
            width,
            values,
            source_image_id: source_image_id.into(),
            target_class,
        }
    }
}

/// Activations and gradients of the class-`target` score at the last
/// convolutional layer, for a single image.
pub fn conv_evidence<M: ConvModel>(
    model: &M,
    image_id: &str,
    img: &ImageTensor,
    target: Label,
) -> Result<ConvEvidence, ExplainError> {
    let prepared = model.prepare(image_id, img)?;
    let mut tape = Tape::<f32>::new();
    let x = tape.leaf(images_to_batch(&[&prepared]), true);
    let out = model.forward_tapped(&mut tape, x);
    let feat = out.last_conv.ok_or(ExplainError::NoConvLayer)?;
    let (_, classes) = tape.value(out.logits).dims2();
    let mut seed = Tensor::zeros(vec![1, classes]);
    seed.data_mut()[target.index()] = 1.0;
    let grads = tape.backward_from(out.logits, seed);
    let (_, channels, height, width) = tape.value(feat).dims4();
    let activations = tape.value(feat).to_f64_vec();
    let gradients = grads
        .get(feat)
        .map(|g| g.to_f64_vec())
        .unwrap_or_else(|| vec![0.0; activations.len()]);
    Ok(ConvEvidence {
        channels,
        height,
        width,
        activations,
        gradients,
    })
}

/// Grad-CAM of `target` for `img`, sized like `img`.
pub fn gradcam<M: ConvModel>(model: &M, image_id: &str, img: &ImageTensor, target: Label) -> Result<SaliencyMap, ExplainError> {
    let ev = conv_evidence(model, image_id, img, target)?;
    Ok(SaliencyMap::from_raw(&ev, img.height(), img.width(), image_id, target))
}

/// Jet colour map: dark blue at 0, green at 0.5, dark red at 1.
pub fn heat_color(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    let ramp = |centre: f64| (1.5 - (4.0 * v - centre).abs()).clamp(0.0, 1.0);
    [ramp(3.0), ramp(2.0), ramp(1.0)]
}

/// Alpha-blends the colour-mapped saliency onto an RGB copy of `img`.
pub fn overlay(img: &ImageTensor, map: &SaliencyMap, alpha: f64) -> Result<ImageTensor, ExplainError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ExplainError::InvalidAlpha(alpha));
    }
    if (img.height(), img.width()) != (map.height, map.width) {
        return Err(ExplainError::SizeMismatch {
            expected_h: img.height(),
            expected_w: img.width(),
            got_h: map.height,
            got_w: map.width,
        });
    }
    let rgb = img.to_rgb();
    let px = rgb.pixels();
    Ok(ImageTensor::from_fn(img.height(), img.width(), 3, |y, x, c| {
        let heat = heat_color(map.get(y, x))[c];
        ((1.0 - alpha) * px[(y * img.width() + x) * 3 + c] + alpha * heat).clamp(0.0, 1.0)
    })?)
}

/// Share of the saliency mass that falls inside `mask`; zero for an empty map.
pub fn focus_fraction(map: &SaliencyMap, mask: &LeverMask) -> Result<f64, ExplainError> {
    if (mask.height(), mask.width()) != (map.height, map.width) {
        return Err(ExplainError::SizeMismatch {
            expected_h: map.height,
            expected_w: map.width,
            got_h: mask.height(),
            got_w: mask.width(),
        });
    }
    let total: f64 = map.values.iter().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let inside: f64 = map.values.iter().zip(mask.data()).filter(|(_, &m)| m).map(|(v, _)| v).sum();
    Ok((inside / total).clamp(0.0, 1.0))
}
