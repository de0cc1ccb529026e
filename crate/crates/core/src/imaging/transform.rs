use serde::{Deserialize, Serialize};

use super::ImageTensor;

/// The six exact pixel permutations of a rectangular grid that the
/// translation model may be asked to commute with.
///
/// Rotations are counter-clockwise. `Rot90` and `Rot270` swap height and
/// width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoTransform {
    Identity,
    Vflip,
    Hflip,
    Rot90,
    Rot180,
    Rot270,
}

impl GeoTransform {
    pub const ALL: [GeoTransform; 6] = [
        GeoTransform::Identity,
        GeoTransform::Vflip,
        GeoTransform::Hflip,
        GeoTransform::Rot90,
        GeoTransform::Rot180,
        GeoTransform::Rot270,
    ];

    pub fn inverse(self) -> Self {
        match self {
            GeoTransform::Rot90 => GeoTransform::Rot270,
            GeoTransform::Rot270 => GeoTransform::Rot90,
            other => other,
        }
    }

    pub fn swaps_axes(self) -> bool {
        matches!(self, GeoTransform::Rot90 | GeoTransform::Rot270)
    }

    /// Output `(height, width)` for an input of `(height, width)`.
    pub fn output_dims(self, height: usize, width: usize) -> (usize, usize) {
        if self.swaps_axes() {
            (width, height)
        } else {
            (height, width)
        }
    }

    /// Input coordinate read by output pixel `(row, col)`, where `height` and
    /// `width` are the *input* dimensions.
    #[inline]
    pub fn source_coords(self, height: usize, width: usize, row: usize, col: usize) -> (usize, usize) {
        match self {
            GeoTransform::Identity => (row, col),
            GeoTransform::Vflip => (height - 1 - row, col),
            GeoTransform::Hflip => (row, width - 1 - col),
            GeoTransform::Rot90 => (col, width - 1 - row),
            GeoTransform::Rot180 => (height - 1 - row, width - 1 - col),
            GeoTransform::Rot270 => (height - 1 - col, row),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GeoTransform::Identity => "identity",
            GeoTransform::Vflip => "vflip",
            GeoTransform::Hflip => "hflip",
            GeoTransform::Rot90 => "rot90",
            GeoTransform::Rot180 => "rot180",
            GeoTransform::Rot270 => "rot270",
        }
    }
}

impl std::fmt::Display for GeoTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GeoTransform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GeoTransform::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown transform '{s}'"))
    }
}

/// Lossless permutation of pixels; channel vectors move as a unit.
pub fn apply_transform(img: &ImageTensor, t: GeoTransform) -> ImageTensor {
    if t == GeoTransform::Identity {
        return img.clone();
    }
    let (h, w, c) = img.dims();
    let (oh, ow) = t.output_dims(h, w);
    let src = img.pixels();
    let mut pixels = Vec::with_capacity(src.len());
    for row in 0..oh {
        for col in 0..ow {
            let (sy, sx) = t.source_coords(h, w, row, col);
            let base = (sy * w + sx) * c;
            pixels.extend_from_slice(&src[base..base + c]);
        }
    }
    ImageTensor::new(oh, ow, c, pixels).expect("permutation preserves validity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn index_image(h: usize, w: usize) -> ImageTensor {
        let n = (h * w) as f64;
        ImageTensor::from_fn(h, w, 1, |y, x, _| (y * w + x) as f64 / n).unwrap()
    }

    /// Rotates coordinates explicitly: a counter-clockwise quarter turn sends
    /// input pixel (y, x) of an h×w grid to (w-1-x, y).
    fn rot90_oracle(img: &ImageTensor) -> ImageTensor {
        let (h, w, _) = img.dims();
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let (ny, nx) = (w - 1 - x, y);
                out[ny * h + nx] = img.get(y, x, 0);
            }
        }
        ImageTensor::new(w, h, 1, out).unwrap()
    }

    #[test]
    fn vflip_of_a_column() {
        // 2×1 is below the minimum side, so embed the column in an 8×8 image
        // and check the two rows that matter.
        let img = ImageTensor::from_fn(8, 8, 1, |y, _, _| match y {
            0 => 0.1,
            7 => 0.9,
            _ => 0.5,
        })
        .unwrap();
        let out = apply_transform(&img, GeoTransform::Vflip);
        assert_eq!(out.get(0, 3, 0), 0.9);
        assert_eq!(out.get(7, 3, 0), 0.1);
    }

    #[test]
    fn identity_is_bit_identical() {
        let img = index_image(9, 11);
        assert_eq!(apply_transform(&img, GeoTransform::Identity), img);
    }

    #[test]
    fn rot90_twice_equals_rot180() {
        // 3×5 is too small for ImageTensor; scale the shape up while keeping
        // it non-square and odd-sized.
        let img = index_image(9, 15);
        let twice = apply_transform(&apply_transform(&img, GeoTransform::Rot90), GeoTransform::Rot90);
        assert_eq!(twice, apply_transform(&img, GeoTransform::Rot180));
        assert_eq!(apply_transform(&img, GeoTransform::Rot90), rot90_oracle(&img));
        assert_eq!(
            apply_transform(&img, GeoTransform::Rot270),
            rot90_oracle(&rot90_oracle(&rot90_oracle(&img)))
        );
    }

    #[test]
    fn parse_names() {
        for t in GeoTransform::ALL {
            assert_eq!(t.name().parse::<GeoTransform>().unwrap(), t);
        }
        assert!("shear".parse::<GeoTransform>().is_err());
    }

    fn arb_image() -> impl Strategy<Value = ImageTensor> {
        (8usize..14, 8usize..14, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(h, w, c)| {
            proptest::collection::vec(0.0f64..=1.0, h * w * c)
                .prop_map(move |px| ImageTensor::new(h, w, c, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn inverse_restores_bit_exactly(img in arb_image(), idx in 0usize..6) {
            let t = GeoTransform::ALL[idx];
            let back = apply_transform(&apply_transform(&img, t), t.inverse());
            prop_assert_eq!(back, img);
        }

        #[test]
        fn flips_are_involutions_and_rot90_has_order_four(img in arb_image()) {
            for t in [GeoTransform::Vflip, GeoTransform::Hflip] {
                prop_assert_eq!(apply_transform(&apply_transform(&img, t), t), img.clone());
            }
            let mut r = img.clone();
            for _ in 0..4 {
                r = apply_transform(&r, GeoTransform::Rot90);
            }
            prop_assert_eq!(r, img);
        }
    }
}
