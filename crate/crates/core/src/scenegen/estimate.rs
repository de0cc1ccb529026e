//! Lever orientation from pixels: redness threshold, largest 8-connected
//! component, then the principal axis of the redness-weighted region.

use super::SceneError;
use crate::imaging::ImageTensor;

/// Lower bound on the redness threshold, `r - max(g, b)`.
const MIN_REDNESS: f64 = 0.12;
/// Pixels must reach this fraction of the image's peak redness.
const RELATIVE_REDNESS: f64 = 0.5;
const MIN_COMPONENT: usize = 4;

/// Distance between two undirected orientations, in `[0, 90]`.
pub fn axial_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Orientation of the lever's principal axis in degrees, in `[0, 180)`,
/// measured counter-clockwise from the image's +x axis.
pub fn estimate_lever_angle(img: &ImageTensor) -> Result<f64, SceneError> {
    let (h, w, c) = img.dims();
    if c != 3 {
        return Err(SceneError::NoLeverDetected("image has no colour channels".into()));
    }
    let px = img.pixels();
    let redness: Vec<f64> = px.chunks_exact(3).map(|p| p[0] - p[1].max(p[2])).collect();
    let peak = redness.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let thr = MIN_REDNESS.max(RELATIVE_REDNESS * peak);
    if peak < thr {
        return Err(SceneError::NoLeverDetected(format!("peak redness {peak:.3} below {thr:.3}")));
    }
    let on: Vec<bool> = redness.iter().map(|&r| r >= thr).collect();

    let mut label = vec![usize::MAX; h * w];
    let mut best: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !on[start] || label[start] != usize::MAX {
            continue;
        }
        let mut comp = Vec::new();
        label[start] = start;
        stack.push(start);
        while let Some(p) = stack.pop() {
            comp.push(p);
            let (y, x) = ((p / w) as isize, (p % w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if on[q] && label[q] == usize::MAX {
                        label[q] = start;
                        stack.push(q);
                    }
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    if best.len() < MIN_COMPONENT {
        return Err(SceneError::NoLeverDetected(format!("largest red region has {} px", best.len())));
    }

    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for &p in &best {
        let wt = redness[p];
        sw += wt;
        sx += wt * (p % w) as f64;
        sy += wt * (p / w) as f64;
    }
    let (cx, cy) = (sx / sw, sy / sw);
    let (mut m20, mut m02, mut m11) = (0.0, 0.0, 0.0);
    for &p in &best {
        let wt = redness[p];
        let dx = (p % w) as f64 - cx;
        // Flip y so angles are counter-clockwise on screen.
        let dy = cy - (p / w) as f64;
        m20 += wt * dx * dx;
        m02 += wt * dy * dy;
        m11 += wt * dx * dy;
    }
    if m20 + m02 <= 0.0 {
        return Err(SceneError::NoLeverDetected("degenerate region".into()));
    }
    let theta = 0.5 * (2.0 * m11).atan2(m20 - m02);
    Ok(theta.to_degrees().rem_euclid(180.0) % 180.0)
}
