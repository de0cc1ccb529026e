//! Per-sample convolution kernels (im2col + GEMM). All buffers are
//! `C × H × W` row-major slices of a single sample.

use super::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(channels: usize, height: usize, width: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        assert!(
            height + 2 * pad >= kernel && width + 2 * pad >= kernel,
            "kernel {kernel} larger than padded input {height}x{width}+{pad}"
        );
        Self {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_h: (height + 2 * pad - kernel) / stride + 1,
            out_w: (width + 2 * pad - kernel) / stride + 1,
        }
    }

    /// Rows of the column matrix: `C·k·k`.
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Columns of the column matrix: `out_h·out_w`.
    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Output indices `[lo, hi)` along one axis whose input tap
/// `t·stride + k − pad` is in bounds.
fn tap_range(input: usize, output: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if input + pad > k { output.min((input + pad - k - 1) / stride + 1) } else { 0 };
    (lo, hi.max(lo))
}

pub(crate) fn im2col<T: Scalar>(img: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad);
    let ncols = g.col_cols();
    debug_assert_eq!(cols.len(), g.col_rows() * ncols);
    for c in 0..g.channels {
        let plane = &img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            let (i0, i1) = tap_range(g.height, g.out_h, ki, s, p);
            for kj in 0..k {
                let (j0, j1) = tap_range(g.width, g.out_w, kj, s, p);
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oi in 0..g.out_h {
                    let line = &mut dst[oi * g.out_w..(oi + 1) * g.out_w];
                    if oi < i0 || oi >= i1 {
                        line.fill(T::zero());
                        continue;
                    }
                    let y = oi * s + ki - p;
                    let src = &plane[y * g.width..(y + 1) * g.width];
                    line[..j0].fill(T::zero());
                    line[j1..].fill(T::zero());
                    if j0 < j1 {
                        let x0 = j0 * s + kj - p;
                        if s == 1 {
                            line[j0..j1].copy_from_slice(&src[x0..x0 + (j1 - j0)]);
                        } else {
                            for (t, v) in line[j0..j1].iter_mut().enumerate() {
                                *v = src[x0 + t * s];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `img`.
pub(crate) fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, img: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad);
    let ncols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            let (i0, i1) = tap_range(g.height, g.out_h, ki, s, p);
            for kj in 0..k {
                let (j0, j1) = tap_range(g.width, g.out_w, kj, s, p);
                if j0 >= j1 {
                    continue;
                }
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oi in i0..i1 {
                    let y = oi * s + ki - p;
                    let dst = &mut plane[y * g.width..(y + 1) * g.width];
                    let line = &src[oi * g.out_w + j0..oi * g.out_w + j1];
                    let x0 = j0 * s + kj - p;
                    if s == 1 {
                        for (d, &v) in dst[x0..x0 + line.len()].iter_mut().zip(line) {
                            *d += v;
                        }
                    } else {
                        for (t, &v) in line.iter().enumerate() {
                            dst[x0 + t * s] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Small-channel stride-1 convolutions are memory bound under im2col; a
/// direct row-wise loop is several times faster there.
fn use_direct(g: &ConvGeom, out_channels: usize) -> bool {
    g.stride == 1 && g.channels * out_channels <= 64
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = acc.iter().fold(T::zero(), |s, &v| s + v);
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Calls `f(weight index, output offset, input offset, run length)` for
/// every contiguous row segment of a stride-1 convolution.
fn for_each_tap(g: &ConvGeom, out_channels: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    let k = g.kernel;
    for o in 0..out_channels {
        for c in 0..g.channels {
            for ki in 0..k {
                let (i0, i1) = tap_range(g.height, g.out_h, ki, 1, g.pad);
                for kj in 0..k {
                    let (j0, j1) = tap_range(g.width, g.out_w, kj, 1, g.pad);
                    if j0 >= j1 {
                        continue;
                    }
                    let widx = ((o * g.channels + c) * k + ki) * k + kj;
                    for i in i0..i1 {
                        let sy = i + ki - g.pad;
                        let out_at = (o * g.out_h + i) * g.out_w + j0;
                        let in_at = (c * g.height + sy) * g.width + j0 + kj - g.pad;
                        f(widx, out_at, in_at, j1 - j0);
                    }
                }
            }
        }
    }
}

fn direct_forward<T: Scalar>(x: &[T], w: &[T], g: &ConvGeom, out_channels: usize, out: &mut [T]) {
    out.fill(T::zero());
    for_each_tap(g, out_channels, |widx, oa, ia, len| {
        let wv = w[widx];
        for (a, &b) in out[oa..oa + len].iter_mut().zip(&x[ia..ia + len]) {
            *a += wv * b;
        }
    });
}

fn direct_weight_grad<T: Scalar>(x: &[T], dy: &[T], g: &ConvGeom, out_channels: usize, dw: &mut [T]) {
    for_each_tap(g, out_channels, |widx, oa, ia, len| {
        dw[widx] += dot(&dy[oa..oa + len], &x[ia..ia + len]);
    });
}

fn direct_input_grad<T: Scalar>(w: &[T], dy: &[T], g: &ConvGeom, out_channels: usize, dx: &mut [T]) {
    for_each_tap(g, out_channels, |widx, oa, ia, len| {
        let wv = w[widx];
        for (a, &b) in dx[ia..ia + len].iter_mut().zip(&dy[oa..oa + len]) {
            *a += wv * b;
        }
    });
}

pub(crate) fn conv_forward_sample<T: Scalar>(
    x: &[T],
    w: &[T],
    bias: Option<&[T]>,
    g: &ConvGeom,
    out_channels: usize,
    cols: &mut Vec<T>,
    out: &mut [T],
) {
    let (r, p) = (g.col_rows(), g.col_cols());
    if use_direct(g, out_channels) {
        direct_forward(x, w, g, out_channels, out);
    } else {
        cols.resize(r * p, T::zero());
        im2col(x, g, cols);
        T::gemm(out_channels, r, p, T::one(), w, (r, 1), cols, (p, 1), T::zero(), out, (p, 1));
    }
    if let Some(b) = bias {
        for (o, row) in out.chunks_exact_mut(p).enumerate() {
            for v in row {
                *v += b[o];
            }
        }
    }
}

/// Accumulates `dw += dy · colsᵀ` for one sample.
pub(crate) fn conv_weight_grad_sample<T: Scalar>(
    x: &[T],
    dy: &[T],
    g: &ConvGeom,
    out_channels: usize,
    cols: &mut Vec<T>,
    dw: &mut [T],
) {
    if use_direct(g, out_channels) {
        return direct_weight_grad(x, dy, g, out_channels, dw);
    }
    let (r, p) = (g.col_rows(), g.col_cols());
    cols.resize(r * p, T::zero());
    im2col(x, g, cols);
    T::gemm(out_channels, p, r, T::one(), dy, (p, 1), cols, (1, p), T::one(), dw, (r, 1));
}

/// Accumulates `dx += col2im(wᵀ · dy)` for one sample.
pub(crate) fn conv_input_grad_sample<T: Scalar>(
    w: &[T],
    dy: &[T],
    g: &ConvGeom,
    out_channels: usize,
    cols: &mut Vec<T>,
    dx: &mut [T],
) {
    if use_direct(g, out_channels) {
        return direct_input_grad(w, dy, g, out_channels, dx);
    }
    let (r, p) = (g.col_rows(), g.col_cols());
    cols.resize(r * p, T::zero());
    T::gemm(r, out_channels, p, T::one(), w, (1, r), dy, (p, 1), T::zero(), cols, (p, 1));
    col2im(cols, g, dx);
}
