//! Procedural piping-cock scenes: flat "CG" renders and textured pseudo-real
//! stand-ins for inspection photographs, both with exact lever geometry.

mod dataset;
mod estimate;
mod noise;
mod render;

use serde::{Deserialize, Serialize};

use crate::imaging::ImagingError;

pub use dataset::{read_scenes_csv, sample_dataset, write_scenes_csv, AngleSampler, GeneratedPool, PoolSpec, SceneRecord};
pub use estimate::{axial_distance, estimate_lever_angle};
pub use noise::{fractal, perlin};
pub use render::{render, LeverMask, Rendered};

/// Side of the square canvas on which scene geometry is expressed. Renders
/// at other sizes scale every coordinate by `size / CANONICAL_SIDE`.
pub const CANONICAL_SIDE: f64 = 200.0;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("lever reaches {reach:.1} px from the pivot but only {room:.1} px fit in the canvas")]
    LeverOutOfCanvas { reach: f64, room: f64 },
    #[error("render size {0}x{1} is below the 8 px minimum")]
    InvalidSize(usize, usize),
    #[error("angle sampler cannot produce {domain} angles: {reason}")]
    InconsistentSampler { domain: String, reason: String },
    #[error("domain {0} is not rendered procedurally")]
    NotRenderable(String),
    #[error("pool size must be at least 1")]
    EmptyPool,
    #[error("no lever detected: {0}")]
    NoLeverDetected(String),
    #[error("scene table error: {0}")]
    Table(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    CgFlat,
    PseudoReal,
}

impl Style {
    pub fn name(self) -> &'static str {
        match self {
            Style::CgFlat => "cg_flat",
            Style::PseudoReal => "pseudo_real",
        }
    }
}

/// Wraps degrees into `[-180, 180)`.
pub fn wrap_degrees(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        -180.0
    } else {
        w
    }
}

/// Smallest rotation between two directed angles, in `[0, 180]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    wrap_degrees(a - b).abs()
}

/// Scene layout in canonical pixels. The lever pivots about the plate centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGeometry {
    pub ref_angle: f64,
    pub pipe_width: f64,
    /// `(x, y, w, h)`.
    pub plate_rect: [f64; 4],
    pub lever_length: f64,
    pub lever_width: f64,
}

impl Default for SceneGeometry {
    fn default() -> Self {
        Self {
            ref_angle: 0.0,
            pipe_width: 40.0,
            plate_rect: [62.0, 62.0, 76.0, 76.0],
            lever_length: 62.0,
            lever_width: 14.0,
        }
    }
}

impl SceneGeometry {
    pub fn pivot(&self) -> (f64, f64) {
        let [x, y, w, h] = self.plate_rect;
        (x + w / 2.0, y + h / 2.0)
    }

    pub fn hub_radius(&self) -> f64 {
        0.9 * self.lever_width
    }

    /// Distance from the pivot to the far corners of the lever.
    pub fn lever_reach(&self) -> f64 {
        self.lever_length.hypot(self.lever_width / 2.0)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let [x, y, w, h] = self.plate_rect;
        let values = [self.ref_angle, self.pipe_width, x, y, w, h, self.lever_length, self.lever_width];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SceneError::InvalidSpec("non-finite geometry".into()));
        }
        if self.pipe_width <= 0.0 || self.lever_length <= 0.0 || self.lever_width <= 0.0 || w <= 0.0 || h <= 0.0 {
            return Err(SceneError::InvalidSpec("sizes must be positive".into()));
        }
        if x < 0.0 || y < 0.0 || x + w > CANONICAL_SIDE || y + h > CANONICAL_SIDE {
            return Err(SceneError::InvalidSpec(format!("plate {:?} leaves the canvas", self.plate_rect)));
        }
        let (px, py) = self.pivot();
        if self.pipe_width / 2.0 > py.min(CANONICAL_SIDE - py) {
            return Err(SceneError::InvalidSpec("pipe leaves the canvas".into()));
        }
        let room = px.min(py).min(CANONICAL_SIDE - px).min(CANONICAL_SIDE - py);
        let reach = self.lever_reach();
        if reach > room {
            return Err(SceneError::LeverOutOfCanvas { reach, room });
        }
        Ok(())
    }
}

/// A validated scene. The lever points along `(cos θ, -sin θ)` in image
/// coordinates, so positive angles turn it counter-clockwise on screen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    geometry: SceneGeometry,
    lever_angle: f64,
    style: Style,
    seed: u64,
}

impl SceneSpec {
    pub fn new(geometry: SceneGeometry, lever_angle: f64, style: Style, seed: u64) -> Result<Self, SceneError> {
        geometry.validate()?;
        if !lever_angle.is_finite() {
            return Err(SceneError::InvalidSpec("non-finite lever angle".into()));
        }
        Ok(Self {
            geometry,
            lever_angle: wrap_degrees(lever_angle),
            style,
            seed,
        })
    }

    pub fn geometry(&self) -> &SceneGeometry {
        &self.geometry
    }

    pub fn lever_angle(&self) -> f64 {
        self.lever_angle
    }

    pub fn ref_angle(&self) -> f64 {
        self.geometry.ref_angle
    }

    pub fn style(&self) -> Style {
        self.style
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_style(&self, style: Style) -> Self {
        Self { style, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRule {
    pub anomaly_threshold: f64,
}

impl Default for LabelRule {
    fn default() -> Self {
        Self { anomaly_threshold: 15.0 }
    }
}

impl LabelRule {
    pub fn is_anomaly(&self, lever_angle: f64, ref_angle: f64) -> bool {
        angular_distance(lever_angle, ref_angle) > self.anomaly_threshold
    }

    pub fn label(&self, spec: &SceneSpec) -> crate::imaging::Label {
        if self.is_anomaly(spec.lever_angle(), spec.ref_angle()) {
            crate::imaging::Label::Anomaly
        } else {
            crate::imaging::Label::Normal
        }
    }
}
