//! Building blocks for training an image anomaly detector from rendered
//! anomalies: a procedural scene renderer, a geometry-consistent image
//! translator, residual classifiers, and Grad-CAM saliency.

pub mod checkpoint;
pub mod classifier;
pub mod explain;
pub mod gcgan;
pub mod imaging;
pub mod nn;
pub mod scenegen;
pub mod seeds;

pub use classifier::{AnomalyScore, Backbone, Classifier, ClassifierConfig, EvalMetrics};
pub use explain::SaliencyMap;
pub use gcgan::{GcganConfig, Generator};
pub use imaging::{DatasetManifest, Domain, GeoTransform, ImageTensor, Label, ManifestEntry, Split};
pub use scenegen::{AngleSampler, LabelRule, LeverMask, SceneGeometry, SceneSpec, Style};
