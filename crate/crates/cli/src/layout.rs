use std::path::{Path, PathBuf};

use anopipe_core::{Domain, Split};
use anyhow::{bail, Result};

pub const POOL_NORMAL_TRAIN: &str = "pseudoreal_normal_train";
pub const POOL_NORMAL_TEST: &str = "pseudoreal_normal_test";
pub const POOL_CG_ANOMALY: &str = "cg_anomaly";
pub const POOL_ANOMALY_TEST: &str = "pseudoreal_anomaly_test";
pub const CONVERTED_PREFIX: &str = "converted_anomaly";

/// File locations under one output root.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn rel<'a>(&self, path: &'a Path) -> &'a Path {
        path.strip_prefix(&self.root).unwrap_or(path)
    }

    pub fn pools(&self) -> PathBuf {
        self.root.join("pools")
    }

    pub fn pool(&self, name: &str) -> PathBuf {
        self.pools().join(name)
    }

    pub fn pool_images(&self, name: &str) -> PathBuf {
        self.pool(name).join("images")
    }

    pub fn pool_masks(&self, name: &str) -> PathBuf {
        self.pool(name).join("masks")
    }

    pub fn pool_manifest(&self, name: &str) -> PathBuf {
        self.pool(name).join("manifest.csv")
    }

    pub fn pool_scenes(&self, name: &str) -> PathBuf {
        self.pool(name).join("scenes.csv")
    }

    pub fn gcgan(&self) -> PathBuf {
        self.root.join("gcgan")
    }

    pub fn generator(&self) -> PathBuf {
        self.gcgan().join("generator.ckpt")
    }

    pub fn converted(&self) -> PathBuf {
        self.root.join("converted")
    }

    pub fn converted_images(&self) -> PathBuf {
        self.converted().join("images")
    }

    pub fn converted_manifest(&self) -> PathBuf {
        self.converted().join("manifest.csv")
    }

    pub fn converted_stats(&self) -> PathBuf {
        self.converted().join("stats.json")
    }

    pub fn datasets(&self) -> PathBuf {
        self.root.join("datasets")
    }

    pub fn train_manifest(&self, variant: &str) -> PathBuf {
        self.datasets().join(format!("{variant}_train.csv"))
    }

    pub fn test_manifest(&self) -> PathBuf {
        self.datasets().join("test.csv")
    }

    pub fn detector(&self, variant: &str) -> PathBuf {
        self.root.join("detectors").join(variant)
    }

    pub fn detector_model(&self, variant: &str) -> PathBuf {
        self.detector(variant).join("model.ckpt")
    }

    pub fn evaluation(&self) -> PathBuf {
        self.root.join("evaluation")
    }

    pub fn metrics(&self) -> PathBuf {
        self.evaluation().join("metrics.json")
    }

    pub fn explain(&self) -> PathBuf {
        self.root.join("explain")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report").join("report.html")
    }

    /// Directory holding the image files of a manifest entry.
    pub fn image_dir(&self, domain: Domain, split: Split) -> Result<PathBuf> {
        Ok(match (domain, split) {
            (Domain::PseudorealNormal, Split::Train) => self.pool_images(POOL_NORMAL_TRAIN),
            (Domain::PseudorealNormal, Split::Test) => self.pool_images(POOL_NORMAL_TEST),
            (Domain::CgAnomaly, _) => self.pool_images(POOL_CG_ANOMALY),
            (Domain::PseudorealAnomaly, _) => self.pool_images(POOL_ANOMALY_TEST),
            (Domain::ConvertedAnomaly, _) => self.converted_images(),
            (Domain::RealNormal, _) => bail!("this pipeline produces no {} images", domain),
        })
    }

    pub fn image_path(&self, id: &str, domain: Domain, split: Split) -> Result<PathBuf> {
        Ok(self.image_dir(domain, split)?.join(format!("{id}.png")))
    }
}
