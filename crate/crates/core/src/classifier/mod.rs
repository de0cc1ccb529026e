//! Two-class residual anomaly detector: training with momentum SGD on
//! cross-entropy, scoring, and ROC / confusion evaluation.

mod metrics;
mod model;
mod net;

use serde::{Deserialize, Serialize};

use crate::checkpoint::CheckpointError;
use crate::imaging::{ImageTensor, ImagingError, Label};

pub use metrics::{evaluate, roc_auc, Confusion, EvalMetrics, ScoreHistograms, ScoreRow, HISTOGRAM_BINS};
pub use model::{train, Classifier, CLASSIFIER_KIND};
pub use net::{Backbone, NetOutput, ResidualNet};

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("pretrained weights unavailable: {0}")]
    PretrainedUnavailable(String),
    #[error("training set holds only {0:?} images")]
    SingleClass(Label),
    #[error("empty image set")]
    Empty,
    #[error("image {id} has {channels} channels, expected 3")]
    ChannelCount { id: String, channels: usize },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub input_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub backbone: Backbone,
    pub seed: u64,
    /// Weight archive for `residual50_pretrained`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained_weights: Option<String>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            input_size: 224,
            learning_rate: 1.0e-5,
            momentum: 0.9,
            batch_size: 32,
            epochs: 50,
            backbone: Backbone::Residual50Pretrained,
            seed: 0,
            pretrained_weights: None,
        }
    }
}

impl ClassifierConfig {
    pub fn desk() -> Self {
        Self {
            input_size: 64,
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 10,
            backbone: Backbone::ResidualSmallScratch,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if self.input_size < ImageTensor::MIN_SIDE {
            return bad("input_size below 8");
        }
        Ok(())
    }
}

/// Two-class probabilities; class 1 is the anomaly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    pub p_anomaly: f64,
    pub p_normal: f64,
}

impl AnomalyScore {
    pub fn from_logits(normal: f64, anomaly: f64) -> Self {
        let m = normal.max(anomaly);
        let (en, ea) = ((normal - m).exp(), (anomaly - m).exp());
        let p_anomaly = ea / (en + ea);
        Self {
            p_anomaly,
            p_normal: 1.0 - p_anomaly,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LabeledImage {
    pub image_id: String,
    pub image: ImageTensor,
    pub label: Label,
}
