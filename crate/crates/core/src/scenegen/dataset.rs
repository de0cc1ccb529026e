use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{render, wrap_degrees, LabelRule, SceneError, SceneGeometry, SceneSpec, Style};
use crate::imaging::{save_image, save_mask, DatasetManifest, Domain, Label, ManifestEntry, Split};
use crate::seeds;

/// Points at which a sampler's support is probed for consistency with a domain.
const SUPPORT_PROBES: usize = 36_001;
const MAX_REJECTIONS: usize = 100_000;

/// Distribution of absolute lever angles in degrees. Draws that violate the
/// domain's label are rejected, so a normal pool from `Uniform {-180, 180}`
/// is uniform within the threshold and an anomaly pool uniform outside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngleSampler {
    Fixed { angle: f64 },
    Uniform { min: f64, max: f64 },
}

impl AngleSampler {
    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            AngleSampler::Fixed { angle } => angle,
            AngleSampler::Uniform { min, max } => rng.random_range(min..max),
        }
    }

    fn check(&self, want: Label, ref_angle: f64, rule: &LabelRule) -> Result<(), String> {
        let ok = |a: f64| (rule.is_anomaly(a, ref_angle)) == (want == Label::Anomaly);
        match *self {
            AngleSampler::Fixed { angle } => {
                if !angle.is_finite() {
                    return Err("non-finite angle".into());
                }
                if !ok(angle) {
                    return Err(format!("fixed angle {angle} has the wrong label"));
                }
            }
            AngleSampler::Uniform { min, max } => {
                if !(min.is_finite() && max.is_finite() && min < max && max - min <= 360.0) {
                    return Err(format!("bad range [{min}, {max})"));
                }
                let hit = (0..SUPPORT_PROBES)
                    .map(|k| min + (max - min) * (k as f64 + 0.5) / SUPPORT_PROBES as f64)
                    .any(ok);
                if !hit {
                    return Err(format!("range [{min}, {max}) holds no angle with that label"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    /// Image-id prefix; ids are `<name>_<index:04>`.
    pub name: String,
    pub n: usize,
    pub domain: Domain,
    pub split: Split,
    pub sampler: AngleSampler,
    pub seed: u64,
    pub size: (usize, usize),
    pub geometry: SceneGeometry,
    pub rule: LabelRule,
}

/// One row of a pool's scene table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub image_id: String,
    pub lever_angle: f64,
    pub ref_angle: f64,
    pub style: Style,
    pub seed: u64,
}

pub struct GeneratedPool {
    pub manifest: DatasetManifest,
    pub scenes: Vec<SceneRecord>,
}

fn style_for(domain: Domain) -> Result<Style, SceneError> {
    match domain {
        Domain::CgAnomaly => Ok(Style::CgFlat),
        Domain::PseudorealNormal | Domain::PseudorealAnomaly => Ok(Style::PseudoReal),
        other => Err(SceneError::NotRenderable(other.name().into())),
    }
}

/// Renders `pool.n` scenes into `images_dir` (and their lever masks into
/// `masks_dir`). Item `k` depends only on `(pool.seed, k)`.
pub fn sample_dataset(pool: &PoolSpec, images_dir: &Path, masks_dir: &Path) -> Result<GeneratedPool, SceneError> {
    if pool.n == 0 {
        return Err(SceneError::EmptyPool);
    }
    let style = style_for(pool.domain)?;
    pool.geometry.validate()?;
    let want = pool.domain.label();
    pool.sampler
        .check(want, pool.geometry.ref_angle, &pool.rule)
        .map_err(|reason| SceneError::InconsistentSampler {
            domain: pool.domain.name().into(),
            reason,
        })?;

    let mut entries = Vec::with_capacity(pool.n);
    let mut scenes = Vec::with_capacity(pool.n);
    for k in 0..pool.n {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(pool.seed, k as u64));
        let mut angle = None;
        for _ in 0..MAX_REJECTIONS {
            let a = wrap_degrees(pool.sampler.draw(&mut rng));
            if (pool.rule.is_anomaly(a, pool.geometry.ref_angle)) == (want == Label::Anomaly) {
                angle = Some(a);
                break;
            }
        }
        let angle = angle.ok_or_else(|| SceneError::InconsistentSampler {
            domain: pool.domain.name().into(),
            reason: "acceptance rate too low".into(),
        })?;
        let spec = SceneSpec::new(pool.geometry.clone(), angle, style, rng.random())?;
        debug_assert_eq!(pool.rule.label(&spec), want);
        let out = render(&spec, pool.size)?;
        let id = format!("{}_{:04}", pool.name, k);
        save_image(&out.image, images_dir.join(format!("{id}.png")))?;
        save_mask(out.mask.data(), out.mask.height(), out.mask.width(), masks_dir.join(format!("{id}.png")))?;
        scenes.push(SceneRecord {
            image_id: id.clone(),
            lever_angle: spec.lever_angle(),
            ref_angle: spec.ref_angle(),
            style,
            seed: spec.seed(),
        });
        entries.push(ManifestEntry::new(id, pool.domain, pool.split));
    }
    Ok(GeneratedPool {
        manifest: DatasetManifest::new(entries)?,
        scenes,
    })
}

pub fn write_scenes_csv(scenes: &[SceneRecord], path: &Path) -> Result<(), SceneError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| SceneError::Table(e.to_string()))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| SceneError::Table(e.to_string()))?;
    for s in scenes {
        w.serialize(s).map_err(|e| SceneError::Table(e.to_string()))?;
    }
    w.flush().map_err(|e| SceneError::Table(e.to_string()))
}

pub fn read_scenes_csv(path: &Path) -> Result<Vec<SceneRecord>, SceneError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| SceneError::Table(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<SceneRecord>, _>>()
        .map_err(|e| SceneError::Table(format!("{}: {e}", path.display())))
}
