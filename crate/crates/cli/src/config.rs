use std::path::{Path, PathBuf};

use anopipe_core::{seeds, AngleSampler, ClassifierConfig, GcganConfig, LabelRule, SceneGeometry};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::Precondition;

pub const OUTPUT_ROOT_ENV: &str = "ANOPIPE_OUTPUT_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Preset {
    PaperFaithful,
    DeskScale,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::PaperFaithful => "paper_faithful",
            Preset::DeskScale => "desk_scale",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSettings {
    /// Rendered images are square with this side.
    pub image_size: usize,
    pub geometry: SceneGeometry,
    pub rule: LabelRule,
    pub normal_angles: AngleSampler,
    pub anomaly_angles: AngleSampler,
}

/// Image counts per pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSizes {
    pub normal_train: usize,
    pub normal_test: usize,
    pub cg_anomaly: usize,
    /// Translated anomalies produced by `convert`.
    pub converted_anomaly: usize,
    /// Held-out anomalies for evaluation; stands in for real anomaly photos.
    pub anomaly_test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSettings {
    /// Anomaly test images explained per detector.
    pub images: usize,
    pub overlay_alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub preset: Preset,
    pub seed: u64,
    pub output_root: PathBuf,
    pub scene: SceneSettings,
    pub sizes: DatasetSizes,
    pub gcgan: GcganConfig,
    pub classifier: ClassifierConfig,
    pub explain: ExplainSettings,
}

impl PipelineConfig {
    /// Sets the root seed and the stage seeds derived from it. The `seed`
    /// fields of the translator and classifier sections are always derived.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        // TOML integers are signed 64-bit.
        self.gcgan.seed = seeds::named(seed, "train-gcgan") >> 1;
        self.classifier.seed = seeds::named(seed, "train-detector") >> 1;
        self
    }

    pub fn preset(preset: Preset) -> Self {
        let scene = SceneSettings {
            image_size: 64,
            geometry: SceneGeometry::default(),
            rule: LabelRule::default(),
            normal_angles: AngleSampler::Uniform { min: -5.0, max: 5.0 },
            anomaly_angles: AngleSampler::Uniform { min: -180.0, max: 180.0 },
        };
        let cfg = match preset {
            Preset::DeskScale => Self {
                preset,
                seed: 0,
                output_root: PathBuf::from("runs/desk_scale"),
                scene,
                sizes: DatasetSizes {
                    normal_train: 200,
                    normal_test: 200,
                    cg_anomaly: 200,
                    converted_anomaly: 200,
                    anomaly_test: 200,
                },
                gcgan: GcganConfig::desk(),
                classifier: ClassifierConfig::desk(),
                explain: ExplainSettings {
                    images: 24,
                    overlay_alpha: 0.5,
                },
            },
            Preset::PaperFaithful => Self {
                preset,
                seed: 0,
                output_root: PathBuf::from("runs/paper_faithful"),
                scene: SceneSettings {
                    image_size: GcganConfig::default().input_size,
                    ..scene
                },
                sizes: DatasetSizes {
                    normal_train: 600,
                    normal_test: 600,
                    cg_anomaly: 600,
                    converted_anomaly: 600,
                    anomaly_test: 600,
                },
                gcgan: GcganConfig::default(),
                classifier: ClassifierConfig {
                    pretrained_weights: Some("weights/residual50_imagenet.ckpt".into()),
                    ..ClassifierConfig::default()
                },
                explain: ExplainSettings {
                    images: 24,
                    overlay_alpha: 0.5,
                },
            },
        };
        cfg.with_seed(0)
    }

    /// Resolves a configuration: preset defaults (from `--preset`, else the
    /// file's `preset` key, else desk scale), overlaid by the file, then
    /// `--seed`, then the output-root environment variable.
    pub fn resolve(file: Option<&Path>, preset: Option<Preset>, seed: Option<u64>) -> Result<Self> {
        let user: toml::Table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Precondition(format!("cannot read config {}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| Precondition(format!("config {}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        let file_preset = match user.get("preset") {
            Some(v) => Some(
                Preset::deserialize(v.clone()).map_err(|e| Precondition(format!("config preset: {e}")))?,
            ),
            None => None,
        };
        let preset = preset.or(file_preset).unwrap_or(Preset::DeskScale);
        let mut merged = toml::Table::try_from(Self::preset(preset)).context("serializing preset")?;
        merge(&mut merged, user);
        merged.insert("preset".into(), toml::Value::String(preset.name().into()));
        let mut cfg: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| Precondition(format!("config: {e}")))?;
        let root_seed = seed.unwrap_or(cfg.seed);
        if root_seed > i64::MAX as u64 {
            return Err(Precondition(format!("seed {root_seed} exceeds {}", i64::MAX)).into());
        }
        cfg = cfg.with_seed(root_seed);
        if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()) {
            cfg.output_root = PathBuf::from(root);
        }
        cfg.validate().map_err(|e| Precondition(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.gcgan.validate()?;
        self.classifier.validate()?;
        self.scene.geometry.validate()?;
        let s = &self.sizes;
        if [s.normal_train, s.normal_test, s.cg_anomaly, s.converted_anomaly, s.anomaly_test].contains(&0) {
            bail!("every dataset size must be positive");
        }
        if self.scene.image_size < anopipe_core::ImageTensor::MIN_SIDE {
            bail!("scene.image_size must be at least {}", anopipe_core::ImageTensor::MIN_SIDE);
        }
        if !(0.0..=1.0).contains(&self.explain.overlay_alpha) {
            bail!("explain.overlay_alpha must be in [0, 1]");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
