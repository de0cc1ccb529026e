//! A small CPU autodiff engine: dense tensors, a reverse-mode tape, the
//! convolutional layers the translator and detector need, and optimizers.

mod kernels;
mod layers;
mod optim;
mod params;
mod tape;
mod tensor;

pub use layers::{apply_bn_records, BatchNorm2d, BnRecord, Conv2d, ConvTranspose2d, ForwardCtx, Linear};
pub use optim::{Adam, SgdMomentum};
pub use params::{Bound, Init, ParamId, ParamStore};
pub use tape::{softmax_rows, Gradients, NormKind, Tape, Var, NORM_EPS};
pub use tensor::{Scalar, Tensor};

use crate::imaging::ImageTensor;

/// Stacks images into an `N×C×H×W` batch. All images must share dimensions.
pub fn images_to_batch<T: Scalar>(images: &[&ImageTensor]) -> Tensor<T> {
    let first = images.first().expect("empty batch");
    let (h, w, c) = first.dims();
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        assert_eq!(img.dims(), (h, w, c), "batch images must share dimensions");
        let px = img.pixels();
        for ch in 0..c {
            data.extend((0..h * w).map(|i| T::lit(px[i * c + ch])));
        }
    }
    Tensor::new([images.len(), c, h, w], data)
}

/// Splits an `N×C×H×W` batch back into images, clamping into `[0, 1]`.
pub fn batch_to_images<T: Scalar>(batch: &Tensor<T>) -> Vec<ImageTensor> {
    let (n, c, h, w) = batch.dims4();
    let data = batch.data();
    (0..n)
        .map(|s| {
            let base = s * c * h * w;
            ImageTensor::from_fn(h, w, c, |y, x, ch| data[base + (ch * h + y) * w + x].as_f64())
                .expect("batch dimensions are valid image dimensions")
        })
        .collect()
}

#[cfg(test)]
mod gradcheck;
