//! Layer kernels. Convolution stacks keep activations in `[C, N, H, W]`
//! order so a whole batch convolves as one matrix product against an
//! im2col buffer.

use ndarray::{Array2, ArrayView2, Axis};

use super::params::Real;

/// Activation block in `[C, N, H, W]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Planes<T> {
    pub channels: usize,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Planes<T> {
    pub fn zeros(channels: usize, batch: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            batch,
            height,
            width,
            data: vec![T::zero(); channels * batch * height * width],
        }
    }

    /// Flatten to `[N, C*H*W]` (per-item channel-major order).
    pub fn to_rows(&self) -> Array2<T> {
        let plane = self.height * self.width;
        let d = self.channels * plane;
        let mut out = Array2::zeros((self.batch, d));
        let dst = out.as_slice_mut().expect("standard layout");
        for c in 0..self.channels {
            for n in 0..self.batch {
                let src = &self.data[(c * self.batch + n) * plane..][..plane];
                dst[n * d + c * plane..][..plane].copy_from_slice(src);
            }
        }
        out
    }

    /// Inverse of [`Planes::to_rows`].
    pub fn from_rows(rows: ArrayView2<'_, T>, channels: usize, height: usize, width: usize) -> Self {
        let batch = rows.nrows();
        let plane = height * width;
        let mut out = Self::zeros(channels, batch, height, width);
        for (n, row) in rows.outer_iter().enumerate() {
            for c in 0..channels {
                let dst = &mut out.data[(c * batch + n) * plane..][..plane];
                for (k, v) in dst.iter_mut().enumerate() {
                    *v = row[c * plane + k];
                }
            }
        }
        out
    }
}

/// Geometry of a valid (unpadded, stride 1) square convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl ConvShape {
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

/// Forward results kept for the backward pass.
pub struct ConvCache<T> {
    col: Array2<T>,
    in_height: usize,
    in_width: usize,
    batch: usize,
}

fn im2col<T: Real>(input: &Planes<T>, k: usize) -> Array2<T> {
    let (oh, ow) = (input.height - k + 1, input.width - k + 1);
    let np = input.batch * oh * ow;
    let rows = input.channels * k * k;
    let mut col = Array2::zeros((rows, np));
    let dst = col.as_slice_mut().expect("standard layout");
    let plane = input.height * input.width;
    for c in 0..input.channels {
        for ky in 0..k {
            for kx in 0..k {
                let r = (c * k + ky) * k + kx;
                let row = &mut dst[r * np..(r + 1) * np];
                for n in 0..input.batch {
                    let src = &input.data[(c * input.batch + n) * plane..][..plane];
                    for oy in 0..oh {
                        let s = (oy + ky) * input.width + kx;
                        row[(n * oh + oy) * ow..][..ow].copy_from_slice(&src[s..s + ow]);
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Real>(
    dcol: ArrayView2<'_, T>,
    shape: ConvShape,
    batch: usize,
    height: usize,
    width: usize,
) -> Planes<T> {
    let k = shape.kernel;
    let (oh, ow) = (height - k + 1, width - k + 1);
    let np = batch * oh * ow;
    let mut out = Planes::zeros(shape.in_channels, batch, height, width);
    let plane = height * width;
    let src = dcol.as_slice().expect("standard layout");
    for c in 0..shape.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let r = (c * k + ky) * k + kx;
                let row = &src[r * np..(r + 1) * np];
                for n in 0..batch {
                    let dst = &mut out.data[(c * batch + n) * plane..][..plane];
                    for oy in 0..oh {
                        let d = (oy + ky) * width + kx;
                        let s = &row[(n * oh + oy) * ow..][..ow];
                        for (o, v) in dst[d..d + ow].iter_mut().zip(s) {
                            *o += *v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Valid convolution. `weight` is `[F, C*k*k]` row-major, `bias` is `[F]`.
pub fn conv_forward<T: Real>(
    input: &Planes<T>,
    shape: ConvShape,
    weight: &[T],
    bias: &[T],
) -> (Planes<T>, ConvCache<T>) {
    let k = shape.kernel;
    let (oh, ow) = (input.height - k + 1, input.width - k + 1);
    let col = im2col(input, k);
    let w = ArrayView2::from_shape((shape.out_channels, shape.patch_len()), weight)
        .expect("conv weight shape");
    let mut out = w.dot(&col);
    for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(bias) {
        row.mapv_inplace(|v| v + b);
    }
    let planes = Planes {
        channels: shape.out_channels,
        batch: input.batch,
        height: oh,
        width: ow,
        data: out.into_raw_vec_and_offset().0,
    };
    let cache = ConvCache {
        col,
        in_height: input.height,
        in_width: input.width,
        batch: input.batch,
    };
    (planes, cache)
}

/// Returns `(dweight, dbias, dinput)`; `dinput` only when requested.
pub fn conv_backward<T: Real>(
    dout: &Planes<T>,
    cache: &ConvCache<T>,
    shape: ConvShape,
    weight: &[T],
    need_input_grad: bool,
) -> (Vec<T>, Vec<T>, Option<Planes<T>>) {
    let np = dout.batch * dout.height * dout.width;
    let dy = ArrayView2::from_shape((shape.out_channels, np), &dout.data).expect("dout shape");
    let dw = dy.dot(&cache.col.t());
    let db: Vec<T> = dy.axis_iter(Axis(0)).map(|r| r.sum()).collect();
    let dinput = need_input_grad.then(|| {
        let w = ArrayView2::from_shape((shape.out_channels, shape.patch_len()), weight)
            .expect("conv weight shape");
        let dcol = w.t().dot(&dy);
        col2im(dcol.view(), shape, cache.batch, cache.in_height, cache.in_width)
    });
    (dw.into_raw_vec_and_offset().0, db, dinput)
}

/// 2x2 max pooling with stride 2 (trailing odd row/column dropped).
pub fn maxpool_forward<T: Real>(input: &Planes<T>) -> (Planes<T>, Vec<u32>) {
    let (oh, ow) = (input.height / 2, input.width / 2);
    let planes = input.channels * input.batch;
    let mut out = Planes::zeros(input.channels, input.batch, oh, ow);
    let mut argmax = vec![0u32; out.data.len()];
    let ip = input.height * input.width;
    for p in 0..planes {
        let src = &input.data[p * ip..(p + 1) * ip];
        for oy in 0..oh {
            for ox in 0..ow {
                let base = 2 * oy * input.width + 2 * ox;
                let mut best = base;
                for off in [1, input.width, input.width + 1] {
                    if src[base + off] > src[best] {
                        best = base + off;
                    }
                }
                let o = p * oh * ow + oy * ow + ox;
                out.data[o] = src[best];
                argmax[o] = (p * ip + best) as u32;
            }
        }
    }
    (out, argmax)
}

pub fn maxpool_backward<T: Real>(
    dout: &Planes<T>,
    argmax: &[u32],
    in_height: usize,
    in_width: usize,
) -> Planes<T> {
    let mut din = Planes::zeros(dout.channels, dout.batch, in_height, in_width);
    for (g, &i) in dout.data.iter().zip(argmax) {
        din.data[i as usize] += *g;
    }
    din
}

/// `x [N, in] -> x W^T + b`, with `W` stored `[out, in]`.
pub fn linear_forward<T: Real>(x: ArrayView2<'_, T>, weight: &[T], bias: &[T]) -> Array2<T> {
    let w = ArrayView2::from_shape((bias.len(), x.ncols()), weight).expect("linear weight shape");
    let mut y = x.dot(&w.t());
    for mut row in y.outer_iter_mut() {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    y
}

/// Returns `(dweight, dbias, dinput)`.
pub fn linear_backward<T: Real>(
    dy: ArrayView2<'_, T>,
    x: ArrayView2<'_, T>,
    weight: &[T],
    need_input_grad: bool,
) -> (Vec<T>, Vec<T>, Option<Array2<T>>) {
    let w = ArrayView2::from_shape((dy.ncols(), x.ncols()), weight).expect("linear weight shape");
    let dw = dy.t().dot(&x);
    let db = dy.sum_axis(Axis(0)).to_vec();
    let dx = need_input_grad.then(|| dy.dot(&w));
    (dw.as_standard_layout().to_owned().into_raw_vec_and_offset().0, db, dx)
}

pub fn relu_inplace<T: Real>(x: &mut Array2<T>) {
    x.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

/// Zero the gradient where the forward output was not positive.
pub fn relu_backward_inplace<T: Real>(dy: &mut Array2<T>, activated: &Array2<T>) {
    ndarray::Zip::from(dy).and(activated).for_each(|g, &a| {
        if a <= T::zero() {
            *g = T::zero();
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planes(c: usize, n: usize, h: usize, w: usize, f: impl Fn(usize) -> f64) -> Planes<f64> {
        Planes {
            channels: c,
            batch: n,
            height: h,
            width: w,
            data: (0..c * n * h * w).map(f).collect(),
        }
    }

    // direct convolution: independent of the im2col path
    fn naive_conv(input: &Planes<f64>, shape: ConvShape, w: &[f64], b: &[f64]) -> Vec<f64> {
        let k = shape.kernel;
        let (oh, ow) = (input.height - k + 1, input.width - k + 1);
        let mut out = vec![0.0; shape.out_channels * input.batch * oh * ow];
        for f in 0..shape.out_channels {
            for n in 0..input.batch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = b[f];
                        for c in 0..shape.in_channels {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let wi = ((f * shape.in_channels + c) * k + ky) * k + kx;
                                    let ii = ((c * input.batch + n) * input.height + oy + ky)
                                        * input.width
                                        + ox
                                        + kx;
                                    s += w[wi] * input.data[ii];
                                }
                            }
                        }
                        out[((f * input.batch + n) * oh + oy) * ow + ox] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loop() {
        let input = planes(2, 3, 6, 5, |i| ((i * 37) % 11) as f64 / 11.0 - 0.4);
        let shape = ConvShape {
            in_channels: 2,
            out_channels: 4,
            kernel: 3,
        };
        let w: Vec<f64> = (0..4 * 18).map(|i| ((i * 13) % 7) as f64 / 7.0 - 0.5).collect();
        let b = vec![0.1, -0.2, 0.3, 0.0];
        let (out, _) = conv_forward(&input, shape, &w, &b);
        let expect = naive_conv(&input, shape, &w, &b);
        for (a, e) in out.data.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_round_trip() {
        let p = planes(3, 2, 2, 2, |i| i as f64);
        let rows = p.to_rows();
        assert_eq!(rows.row(1)[0], p.data[4]);
        assert_eq!(Planes::from_rows(rows.view(), 3, 2, 2), p);
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let p = planes(1, 1, 2, 2, |i| [0.1, 0.9, 0.3, 0.2][i]);
        let (out, arg) = maxpool_forward(&p);
        assert_eq!(out.data, vec![0.9]);
        let d = maxpool_backward(&Planes { data: vec![2.0], ..out }, &arg, 2, 2);
        assert_eq!(d.data, vec![0.0, 2.0, 0.0, 0.0]);
    }
}
