//! Image representation and the exact, lossless operations the rest of the
//! pipeline is built on.
//!
//! Pixels are stored as `f64` in `[0, 1]`, row-major `H × W × C`. Quantization
//! to 8 bits only happens in [`io`].

mod histogram;
pub mod io;
mod manifest;
mod resize;
mod transform;

pub use histogram::{histogram_distance, ChannelHistograms, DEFAULT_HISTOGRAM_BINS};
pub use io::{load_image, save_image, save_mask};
pub use manifest::{DatasetManifest, Domain, Label, ManifestEntry, Split};
pub use resize::{resize, resize_plane};
pub use transform::{apply_transform, GeoTransform};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("image dimensions {height}x{width}x{channels} are invalid (sides must be >= 8, channels 1 or 3)")]
    InvalidDimensions {
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("pixel buffer has {got} values, expected {expected}")]
    BufferLength { expected: usize, got: usize },
    #[error("pixel value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("target size {height}x{width} is invalid (both sides must be >= 8)")]
    InvalidTargetSize { height: usize, width: usize },
    #[error("histogram needs at least 2 bins, got {0}")]
    InvalidBins(usize),
    #[error("histogram reference built from an empty image set")]
    EmptyReference,
    #[error("histograms are incompatible: {0}")]
    HistogramMismatch(String),
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported bit depth {depth} in {path} (only 8-bit PNG is supported)")]
    UnsupportedBitDepth { path: PathBuf, depth: u8 },
    #[error("unsupported color type {color} in {path} (only grayscale and RGB are supported)")]
    UnsupportedColorType { path: PathBuf, color: String },
    #[error("corrupt PNG stream in {path}: {reason}")]
    CorruptStream { path: PathBuf, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("PNG encoding failed for {path}: {reason}")]
    Encode { path: PathBuf, reason: String },
    #[error("manifest error: {0}")]
    Manifest(String),
}

/// `H × W × C` image with every value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageTensor {
    pub const MIN_SIDE: usize = 8;

    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        pixels: Vec<f64>,
    ) -> Result<Self, ImagingError> {
        check_dims(height, width, channels)?;
        let expected = height * width * channels;
        if pixels.len() != expected {
            return Err(ImagingError::BufferLength {
                expected,
                got: pixels.len(),
            });
        }
        if let Some((index, &value)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImagingError::ValueOutOfRange { index, value });
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    /// Builds an image from a generator, clamping every value into `[0, 1]`.
    /// NaN maps to 0.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, ImagingError> {
        check_dims(height, width, channels)?;
        let mut pixels = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(clamp_unit(f(y, x, c)));
                }
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(
        height: usize,
        width: usize,
        channels: usize,
        value: f64,
    ) -> Result<Self, ImagingError> {
        Self::from_fn(height, width, channels, |_, _, _| value)
    }

    /// Clamps arbitrary values into range instead of rejecting them.
    pub fn from_clamped(
        height: usize,
        width: usize,
        channels: usize,
        values: &[f64],
    ) -> Result<Self, ImagingError> {
        let expected = height * width * channels;
        if values.len() != expected {
            return Err(ImagingError::BufferLength {
                expected,
                got: values.len(),
            });
        }
        Self::from_fn(height, width, channels, |y, x, c| {
            values[(y * width + x) * channels + c]
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Applies `f` to every value and clamps the result into range.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            pixels: self.pixels.iter().map(|&v| clamp_unit(f(v))).collect(),
            ..*self
        }
    }

    /// Replicates a single channel into RGB; RGB input is returned as is.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            channels: 3,
            pixels,
            ..*self
        }
    }

    /// Rec. 601 luma; grayscale input is returned as is.
    pub fn to_gray(&self) -> Self {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|p| clamp_unit(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]))
            .collect();
        Self {
            channels: 1,
            pixels,
            ..*self
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        if self.dims() != other.dims() {
            return None;
        }
        Some(
            self.pixels
                .iter()
                .zip(&other.pixels)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

fn check_dims(height: usize, width: usize, channels: usize) -> Result<(), ImagingError> {
    if height < ImageTensor::MIN_SIDE
        || width < ImageTensor::MIN_SIDE
        || !(channels == 1 || channels == 3)
    {
        return Err(ImagingError::InvalidDimensions {
            height,
            width,
            channels,
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_and_out_of_range() {
        assert!(matches!(
            ImageTensor::new(4, 8, 1, vec![0.0; 32]),
            Err(ImagingError::InvalidDimensions { .. })
        ));
        assert!(matches!(
            ImageTensor::new(8, 8, 2, vec![0.0; 128]),
            Err(ImagingError::InvalidDimensions { .. })
        ));
        let mut px = vec![0.5; 64];
        px[10] = 1.5;
        assert!(matches!(
            ImageTensor::new(8, 8, 1, px),
            Err(ImagingError::ValueOutOfRange { index: 10, .. })
        ));
        assert!(matches!(
            ImageTensor::new(8, 8, 1, vec![0.0; 63]),
            Err(ImagingError::BufferLength { .. })
        ));
    }

    #[test]
    fn from_fn_clamps() {
        let img = ImageTensor::from_fn(8, 8, 3, |y, _, _| y as f64 - 2.0).unwrap();
        let (lo, hi) = img.min_max();
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn gray_rgb_round_trip() {
        let g = ImageTensor::from_fn(8, 9, 1, |y, x, _| (y + x) as f64 / 20.0).unwrap();
        let back = g.to_rgb().to_gray();
        assert!(g.max_abs_diff(&back).unwrap() < 1e-12);
    }
}
