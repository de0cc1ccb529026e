use super::{ImageTensor, ImagingError};

pub const DEFAULT_HISTOGRAM_BINS: usize = 32;

/// Normalized per-channel histograms over `[0, 1]` with equal-width bins.
/// Value `v` falls into bin `min(floor(v * bins), bins - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelHistograms {
    bins: usize,
    channels: Vec<Vec<f64>>,
}

impl ChannelHistograms {
    pub fn of_image(img: &ImageTensor, bins: usize) -> Result<Self, ImagingError> {
        Self::of_images(std::slice::from_ref(img), bins)
    }

    /// Pools counts over every image in the set, then normalizes.
    pub fn of_images(images: &[ImageTensor], bins: usize) -> Result<Self, ImagingError> {
        if bins < 2 {
            return Err(ImagingError::InvalidBins(bins));
        }
        let first = images.first().ok_or(ImagingError::EmptyReference)?;
        let nc = first.channels();
        let mut counts = vec![vec![0u64; bins]; nc];
        for img in images {
            if img.channels() != nc {
                return Err(ImagingError::HistogramMismatch(format!(
                    "image set mixes {} and {} channels",
                    nc,
                    img.channels()
                )));
            }
            for px in img.pixels().chunks_exact(nc) {
                for (c, &v) in px.iter().enumerate() {
                    let b = ((v * bins as f64).floor() as usize).min(bins - 1);
                    counts[c][b] += 1;
                }
            }
        }
        let channels = counts
            .into_iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.into_iter().map(|n| n as f64 / total as f64).collect()
            })
            .collect();
        Ok(Self { bins, channels })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Mean over channels of `½ Σ (p − q)² / (p + q)`, skipping empty bin
    /// pairs. Symmetric, in `[0, 1]`, zero iff the histograms are equal.
    pub fn chi_square(&self, other: &Self) -> Result<f64, ImagingError> {
        if self.bins != other.bins || self.channels.len() != other.channels.len() {
            return Err(ImagingError::HistogramMismatch(format!(
                "{}×{} bins vs {}×{} bins",
                self.channels.len(),
                self.bins,
                other.channels.len(),
                other.bins
            )));
        }
        let total: f64 = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(p, q)| {
                0.5 * p
                    .iter()
                    .zip(q)
                    .filter(|(a, b)| **a + **b > 0.0)
                    .map(|(a, b)| (a - b) * (a - b) / (a + b))
                    .sum::<f64>()
            })
            .sum();
        Ok(total / self.channels.len() as f64)
    }
}

/// Chi-square distance between one image's histograms and reference set
/// statistics, using the reference's bin count.
pub fn histogram_distance(a: &ImageTensor, reference: &ChannelHistograms) -> Result<f64, ImagingError> {
    ChannelHistograms::of_image(a, reference.bins())?.chi_square(reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(seed: usize) -> ImageTensor {
        ImageTensor::from_fn(8, 8, 3, |y, x, c| ((y * 8 + x + seed * 5 + c * 3) % 17) as f64 / 16.0).unwrap()
    }

    #[test]
    fn self_distance_is_zero() {
        let a = ramp(0);
        let h = ChannelHistograms::of_image(&a, DEFAULT_HISTOGRAM_BINS).unwrap();
        assert_eq!(histogram_distance(&a, &h).unwrap(), 0.0);
    }

    #[test]
    fn symmetric() {
        let (a, b) = (ramp(1), ramp(4));
        let ha = ChannelHistograms::of_image(&a, 32).unwrap();
        let hb = ChannelHistograms::of_image(&b, 32).unwrap();
        assert_eq!(histogram_distance(&a, &hb).unwrap(), histogram_distance(&b, &ha).unwrap());
        assert!(histogram_distance(&a, &hb).unwrap() > 0.0);
    }

    #[test]
    fn black_vs_white_two_bins_is_maximal() {
        // p = (1, 0), q = (0, 1): ½ (1²/1 + 1²/1) = 1 per channel.
        let black = ImageTensor::filled(8, 8, 3, 0.0).unwrap();
        let white = ImageTensor::filled(8, 8, 3, 1.0).unwrap();
        let hw = ChannelHistograms::of_image(&white, 2).unwrap();
        assert_eq!(histogram_distance(&black, &hw).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        let a = ramp(0);
        assert!(matches!(ChannelHistograms::of_image(&a, 1), Err(ImagingError::InvalidBins(1))));
        assert!(matches!(ChannelHistograms::of_images(&[], 8), Err(ImagingError::EmptyReference)));
        let h8 = ChannelHistograms::of_image(&a, 8).unwrap();
        let h4 = ChannelHistograms::of_image(&a, 4).unwrap();
        assert!(h8.chi_square(&h4).is_err());
        let gray = a.to_gray();
        assert!(histogram_distance(&gray, &h8).is_err());
    }
}
