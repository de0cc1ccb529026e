use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::noise::{fractal, grain};
use super::{SceneError, SceneSpec, Style, CANONICAL_SIDE};
use crate::imaging::ImageTensor;
use crate::seeds;

/// Per-axis supersampling used for coverage.
const SUBSAMPLES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeverMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl LeverMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), height * width, "mask buffer length");
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn area_fraction(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }
}

pub struct Rendered {
    pub image: ImageTensor,
    pub mask: LeverMask,
}

struct Palette {
    background: [f64; 3],
    pipe: [f64; 3],
    plate: [f64; 3],
    hub: [f64; 3],
    lever: [f64; 3],
}

const CG_PALETTE: Palette = Palette {
    background: [0.82, 0.84, 0.88],
    pipe: [0.56, 0.59, 0.63],
    plate: [0.36, 0.39, 0.46],
    hub: [0.15, 0.15, 0.18],
    lever: [0.90, 0.12, 0.10],
};

const PSEUDO_PALETTE: Palette = Palette {
    background: [0.36, 0.33, 0.29],
    pipe: [0.52, 0.48, 0.42],
    plate: [0.43, 0.41, 0.37],
    hub: [0.20, 0.18, 0.16],
    lever: [0.74, 0.25, 0.14],
};

/// Photographic variation drawn once per scene from its seed.
struct Look {
    light_dir: (f64, f64),
    light_gain: f64,
    exposure: f64,
    tint: [f64; 3],
    clutter: Vec<([f64; 4], f64)>,
    noise_seed: u64,
}

impl Look {
    fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, 0x4C4F_4F4B));
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let light_gain = rng.random_range(0.15..0.35);
        let exposure = rng.random_range(0.88..1.12);
        let tint = [
            rng.random_range(0.96..1.04),
            rng.random_range(0.96..1.04),
            rng.random_range(0.96..1.04),
        ];
        let n = rng.random_range(3..=6);
        let clutter = (0..n)
            .map(|_| {
                let w = rng.random_range(15.0..60.0);
                let h = rng.random_range(15.0..60.0);
                let x = rng.random_range(-10.0..CANONICAL_SIDE - w + 10.0);
                let y = rng.random_range(-10.0..CANONICAL_SIDE - h + 10.0);
                ([x, y, w, h], rng.random_range(-0.08..0.08))
            })
            .collect();
        Self {
            light_dir: (phi.cos(), phi.sin()),
            light_gain,
            exposure,
            tint,
            clutter,
            noise_seed: rng.random(),
        }
    }
}

/// Renders the scene at `(height, width)`. Geometry is scaled from the
/// canonical canvas, so changing the style never moves any part.
pub fn render(spec: &SceneSpec, size: (usize, usize)) -> Result<Rendered, SceneError> {
    let (height, width) = size;
    if height < ImageTensor::MIN_SIDE || width < ImageTensor::MIN_SIDE {
        return Err(SceneError::InvalidSize(height, width));
    }
    let g = spec.geometry();
    let (px, py) = g.pivot();
    let theta = spec.lever_angle().to_radians();
    let dir = (theta.cos(), -theta.sin());
    let half_pipe = g.pipe_width / 2.0;
    let [rx, ry, rw, rh] = g.plate_rect;
    let hub_r2 = g.hub_radius() * g.hub_radius();
    let half_lever = g.lever_width / 2.0;
    let sx = CANONICAL_SIDE / width as f64;
    let sy = CANONICAL_SIDE / height as f64;

    let (palette, look) = match spec.style() {
        Style::CgFlat => (&CG_PALETTE, None),
        Style::PseudoReal => (&PSEUDO_PALETTE, Some(Look::sample(spec.seed()))),
    };

    let mut pixels = Vec::with_capacity(height * width * 3);
    let mut mask = Vec::with_capacity(height * width);
    let inv = 1.0 / (SUBSAMPLES * SUBSAMPLES) as f64;
    for i in 0..height {
        for j in 0..width {
            // Coverage of each part by supersampling.
            let mut cov = [0usize; 4];
            for a in 0..SUBSAMPLES {
                let v = (i as f64 + (a as f64 + 0.5) / SUBSAMPLES as f64) * sy;
                for b in 0..SUBSAMPLES {
                    let u = (j as f64 + (b as f64 + 0.5) / SUBSAMPLES as f64) * sx;
                    let (dx, dy) = (u - px, v - py);
                    cov[0] += ((v - py).abs() <= half_pipe) as usize;
                    cov[1] += (u >= rx && u <= rx + rw && v >= ry && v <= ry + rh) as usize;
                    cov[2] += (dx * dx + dy * dy <= hub_r2) as usize;
                    let along = dx * dir.0 + dy * dir.1;
                    let across = -dx * dir.1 + dy * dir.0;
                    cov[3] += (along >= 0.0 && along <= g.lever_length && across.abs() <= half_lever) as usize;
                }
            }
            let cov = cov.map(|c| c as f64 * inv);
            let (uc, vc) = ((j as f64 + 0.5) * sx, (i as f64 + 0.5) * sy);

            let mut bg = palette.background;
            let mut pipe = palette.pipe;
            let mut lever = palette.lever;
            if let Some(look) = &look {
                for (r, off) in &look.clutter {
                    if uc >= r[0] && uc <= r[0] + r[2] && vc >= r[1] && vc <= r[1] + r[3] {
                        bg = bg.map(|c| c + off);
                    }
                }
                let s = ((vc - py) / half_pipe).clamp(-1.0, 1.0);
                let shade = 0.8 + 0.3 * (1.0 - s * s).sqrt();
                pipe = pipe.map(|c| c * shade);
                let (dx, dy) = (uc - px, vc - py);
                let t = ((-dx * dir.1 + dy * dir.0) / half_lever).clamp(-1.0, 1.0);
                let shade = 0.85 + 0.2 * (1.0 - t * t).sqrt();
                lever = lever.map(|c| c * shade);
            }
            let mut c = bg;
            for (k, part) in [pipe, palette.plate, palette.hub, lever].iter().enumerate() {
                if cov[k] == 1.0 {
                    c = *part;
                } else {
                    for ch in 0..3 {
                        c[ch] += cov[k] * (part[ch] - c[ch]);
                    }
                }
            }
            if let Some(look) = &look {
                let ramp = ((uc - 100.0) * look.light_dir.0 + (vc - 100.0) * look.light_dir.1) / 100.0;
                let light = look.exposure * (1.0 + look.light_gain * ramp);
                let tex = 0.09 * fractal(look.noise_seed, uc / 22.0, vc / 22.0, 3);
                for ch in 0..3 {
                    let grain = 0.035 * grain(look.noise_seed, j, i, ch);
                    c[ch] = c[ch] * light * look.tint[ch] + tex + grain;
                }
            }
            pixels.extend_from_slice(&c);
            mask.push(cov[3] >= 0.5);
        }
    }
    let image = ImageTensor::from_clamped(height, width, 3, &pixels)?;
    Ok(Rendered {
        image,
        mask: LeverMask::new(height, width, mask),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::SceneGeometry;

    fn spec(angle: f64, style: Style) -> SceneSpec {
        SceneSpec::new(SceneGeometry::default(), angle, style, 42).unwrap()
    }

    #[test]
    fn deterministic_and_style_independent_geometry() {
        for style in [Style::CgFlat, Style::PseudoReal] {
            let a = render(&spec(33.0, style), (64, 64)).unwrap();
            let b = render(&spec(33.0, style), (64, 64)).unwrap();
            assert_eq!(a.image, b.image);
            assert_eq!(a.mask, b.mask);
        }
        let cg = render(&spec(-71.0, Style::CgFlat), (64, 64)).unwrap();
        let pr = render(&spec(-71.0, Style::PseudoReal), (64, 64)).unwrap();
        assert_eq!(cg.mask, pr.mask);
        assert!(cg.image.max_abs_diff(&pr.image).unwrap() > 0.1);
    }

    #[test]
    fn cg_flat_uses_constant_part_colors() {
        let r = render(&spec(10.0, Style::CgFlat), (64, 64)).unwrap();
        // Corner pixel is pure background; pixel (29, 44) lies 40 canonical px
        // along the lever axis at 10 degrees, fully inside the lever.
        let bg: Vec<f64> = (0..3).map(|c| r.image.get(0, 0, c)).collect();
        assert_eq!(bg, CG_PALETTE.background.to_vec());
        assert_eq!(r.image.get(0, 63, 0), bg[0]);
        let (y, x) = (29, 44);
        assert!(r.mask.get(y, x));
        let lever: Vec<f64> = (0..3).map(|c| r.image.get(y, x, c)).collect();
        assert_eq!(lever, CG_PALETTE.lever.to_vec());
    }

    #[test]
    fn quarter_turn_rotates_mask_about_pivot() {
        // Rasterization oracle: at 200x200 the pivot (100, 100) is a pixel
        // corner, so rotating pixel centres by 90 degrees maps the grid onto
        // itself. Pixel (i, j) of the 90 degree mask corresponds to the
        // centre offset (dx, dy) = (j + 0.5 - 100, i + 0.5 - 100); undoing a
        // counter-clockwise screen rotation sends it to (-dy, dx).
        let m0 = render(&spec(0.0, Style::CgFlat), (200, 200)).unwrap().mask;
        let m90 = render(&spec(90.0, Style::CgFlat), (200, 200)).unwrap().mask;
        assert!(m0.count() > 500);
        let mut mismatches = 0;
        for i in 0..200 {
            for j in 0..200 {
                let dx = j as f64 + 0.5 - 100.0;
                let dy = i as f64 + 0.5 - 100.0;
                let (sx, sy) = (-dy, dx);
                let (sj, si) = ((sx + 100.0 - 0.5) as usize, (sy + 100.0 - 0.5) as usize);
                if m90.get(i, j) != m0.get(si, sj) {
                    mismatches += 1;
                }
            }
        }
        assert!(mismatches <= m0.count() / 100, "{mismatches} mismatched pixels");
        assert_eq!(m0.count(), m90.count());
    }

    #[test]
    fn rejects_tiny_sizes() {
        assert!(matches!(render(&spec(0.0, Style::CgFlat), (4, 64)), Err(SceneError::InvalidSize(4, 64))));
    }
}
