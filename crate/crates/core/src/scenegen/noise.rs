//! Seeded gradient noise for the pseudo-real texture.

use crate::seeds::mix64;

fn lattice_hash(seed: u64, ix: i64, iy: i64) -> u64 {
    mix64(seed ^ mix64((ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)))
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn gradient(seed: u64, ix: i64, iy: i64) -> (f64, f64) {
    let a = unit(lattice_hash(seed, ix, iy)) * std::f64::consts::TAU;
    (a.cos(), a.sin())
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Perlin gradient noise, roughly in `[-0.71, 0.71]`, zero on lattice points.
pub fn perlin(seed: u64, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (ix, iy) = (x0 as i64, y0 as i64);
    let dot = |cx: i64, cy: i64, dx: f64, dy: f64| {
        let (gx, gy) = gradient(seed, cx, cy);
        gx * dx + gy * dy
    };
    let n00 = dot(ix, iy, fx, fy);
    let n10 = dot(ix + 1, iy, fx - 1.0, fy);
    let n01 = dot(ix, iy + 1, fx, fy - 1.0);
    let n11 = dot(ix + 1, iy + 1, fx - 1.0, fy - 1.0);
    let (u, v) = (fade(fx), fade(fy));
    let a = n00 + u * (n10 - n00);
    let b = n01 + u * (n11 - n01);
    a + v * (b - a)
}

/// Sum of `octaves` Perlin layers with halving amplitude, scaled to about `[-1, 1]`.
pub fn fractal(seed: u64, x: f64, y: f64, octaves: u32) -> f64 {
    let mut total = 0.0;
    let mut norm = 0.0;
    let mut amp = 1.0;
    let mut freq = 1.0;
    for o in 0..octaves {
        total += amp * perlin(seed.wrapping_add(o as u64), x * freq, y * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    (total / norm * 1.4).clamp(-1.0, 1.0)
}

/// Uniform value in `[-1, 1]` attached to an integer cell.
pub fn grain(seed: u64, x: usize, y: usize, c: usize) -> f64 {
    let h = lattice_hash(seed ^ (c as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93), x as i64, y as i64);
    unit(h) * 2.0 - 1.0
}
