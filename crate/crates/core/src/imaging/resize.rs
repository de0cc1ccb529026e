use super::{clamp_unit, ImageTensor, ImagingError};

/// Bilinear resize with corner-aligned sampling: output pixel `i` samples the
/// input at `i * (in - 1) / (out - 1)`, so the four corner pixels map exactly
/// onto the input corners. No antialiasing prefilter is applied.
///
/// Resizing to the input size returns a bit-identical copy.
pub fn resize(img: &ImageTensor, out_h: usize, out_w: usize) -> Result<ImageTensor, ImagingError> {
    if out_h < ImageTensor::MIN_SIDE || out_w < ImageTensor::MIN_SIDE {
        return Err(ImagingError::InvalidTargetSize {
            height: out_h,
            width: out_w,
        });
    }
    let (h, w, c) = img.dims();
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let src = img.pixels();
    let ys = sample_positions(h, out_h);
    let xs = sample_positions(w, out_w);
    let mut pixels = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let at = |y: usize, x: usize| src[(y * w + x) * c + ch];
                let top = (1.0 - fx) * at(y0, x0) + fx * at(y0, x1);
                let bottom = (1.0 - fx) * at(y1, x0) + fx * at(y1, x1);
                pixels.push(clamp_unit((1.0 - fy) * top + fy * bottom));
            }
        }
    }
    ImageTensor::new(out_h, out_w, c, pixels)
}

/// Same sampling convention as [`resize`] on a single unconstrained plane.
/// Used to upsample coarse activation maps, so any size ≥ 1 is accepted.
pub fn resize_plane(values: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(values.len(), h * w, "plane length mismatch");
    assert!(h > 0 && w > 0 && out_h > 0 && out_w > 0, "empty plane");
    let ys = sample_positions(h, out_h);
    let xs = sample_positions(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let at = |y: usize, x: usize| values[y * w + x];
            let top = (1.0 - fx) * at(y0, x0) + fx * at(y0, x1);
            let bottom = (1.0 - fx) * at(y1, x0) + fx * at(y1, x1);
            out.push((1.0 - fy) * top + fy * bottom);
        }
    }
    out
}

fn sample_positions(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    (0..output)
        .map(|i| {
            let pos = if output == 1 || input == 1 {
                0.0
            } else {
                (i * (input - 1)) as f64 / (output - 1) as f64
            };
            let i0 = (pos.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Scalar bilinear formula, written independently of the row/column
    /// tables used above.
    fn bilinear_oracle(grid: &[[f64; 2]; 2], y: f64, x: f64) -> f64 {
        grid[0][0] * (1.0 - y) * (1.0 - x)
            + grid[0][1] * (1.0 - y) * x
            + grid[1][0] * y * (1.0 - x)
            + grid[1][1] * y * x
    }

    #[test]
    fn constant_stays_constant() {
        let img = ImageTensor::filled(10, 13, 3, 0.5).unwrap();
        for (h, w) in [(8, 8), (31, 17), (224, 224)] {
            let out = resize(&img, h, w).unwrap();
            assert!(out.pixels().iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn identity_resize() {
        let img = ImageTensor::from_fn(12, 9, 3, |y, x, c| ((y * 7 + x * 3 + c) % 11) as f64 / 10.0).unwrap();
        let out = resize(&img, 12, 9).unwrap();
        assert!(img.max_abs_diff(&out).unwrap() <= 1e-6);
        assert_eq!(out, img);
    }

    #[test]
    fn checkerboard_plane_matches_oracle() {
        let grid = [[0.0, 1.0], [1.0, 0.0]];
        let flat = [0.0, 1.0, 1.0, 0.0];
        let out = resize_plane(&flat, 2, 2, 4, 4);
        for i in 0..4 {
            for j in 0..4 {
                let expected = bilinear_oracle(&grid, i as f64 / 3.0, j as f64 / 3.0);
                assert!((out[i * 4 + j] - expected).abs() < 1e-12, "({i},{j})");
            }
        }
        // Center pixels of the 4×4 output, by hand: (1/3, 1/3) → 4/9.
        assert!((out[5] - 4.0 / 9.0).abs() < 1e-12);
        assert!((out[6] - 5.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn checkerboard_image_block_matches_oracle() {
        // The checkerboard scaled into an 8×8 image of 4×4 blocks, resized to
        // 16×16; every output pixel is checked against the scalar formula
        // applied to its four neighbors.
        let img = ImageTensor::from_fn(8, 8, 1, |y, x, _| (((y / 4) + (x / 4)) % 2) as f64).unwrap();
        let out = resize(&img, 16, 16).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let py = i as f64 * 7.0 / 15.0;
                let px = j as f64 * 7.0 / 15.0;
                let (y0, x0) = (py.floor() as usize, px.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(7), (x0 + 1).min(7));
                let g = [[img.get(y0, x0, 0), img.get(y0, x1, 0)], [img.get(y1, x0, 0), img.get(y1, x1, 0)]];
                let expected = bilinear_oracle(&g, py - y0 as f64, px - x0 as f64);
                assert!((out.get(i, j, 0) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_target() {
        let img = ImageTensor::filled(8, 8, 1, 0.0).unwrap();
        assert!(matches!(resize(&img, 0, 8), Err(ImagingError::InvalidTargetSize { .. })));
        assert!(matches!(resize(&img, 8, 7), Err(ImagingError::InvalidTargetSize { .. })));
    }

    proptest! {
        #[test]
        fn output_stays_within_input_range(
            px in proptest::collection::vec(0.0f64..=1.0, 100),
            oh in 8usize..40, ow in 8usize..40,
        ) {
            let img = ImageTensor::new(10, 10, 1, px).unwrap();
            let (lo, hi) = img.min_max();
            let out = resize(&img, oh, ow).unwrap();
            let (olo, ohi) = out.min_max();
            prop_assert!(olo >= lo - 1e-9 && ohi <= hi + 1e-9);
        }
    }
}
