//! 2-D convolution with explicit gradients (im2col + GEMM).

use ndarray::{Array1, Array2, Array3, Array4};

use super::Scalar;

/// A 2-D convolution layer over `(channels, height, width)` tensors.
///
/// `pad` is symmetric zero padding; output size per axis is
/// `(len + 2*pad - k) / stride + 1`. With `pad = 0, stride = 1` this is a
/// "valid" convolution, which is what keeps the position decoder's output
/// size law exact.
#[derive(Debug, Clone)]
pub struct Conv2d<F> {
    /// `(c_out, c_in, kh, kw)`.
    pub weight: Array4<F>,
    pub bias: Array1<F>,
    pub stride: usize,
    pub pad: usize,
}

/// Gradient accumulator matching a [`Conv2d`]'s parameters.
#[derive(Debug, Clone)]
pub struct Conv2dGrads<F> {
    pub weight: Array4<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Conv2d<F> {
    pub fn new(weight: Array4<F>, bias: Array1<F>, stride: usize, pad: usize) -> Self {
        assert_eq!(weight.dim().0, bias.len(), "bias length must match c_out");
        assert!(stride >= 1);
        Self { weight, bias, stride, pad }
    }

    pub fn c_in(&self) -> usize {
        self.weight.dim().1
    }

    pub fn c_out(&self) -> usize {
        self.weight.dim().0
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.dim().2, self.weight.dim().3)
    }

    /// Output spatial size for a given input size.
    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let (kh, kw) = self.kernel();
        let oh = (h + 2 * self.pad).saturating_sub(kh) / self.stride + 1;
        let ow = (w + 2 * self.pad).saturating_sub(kw) / self.stride + 1;
        (oh, ow)
    }

    pub fn zero_grads(&self) -> Conv2dGrads<F> {
        Conv2dGrads {
            weight: Array4::zeros(self.weight.dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }

    pub fn forward(&self, x: &Array3<F>) -> Array3<F> {
        let (c_in, h, w) = x.dim();
        assert_eq!(c_in, self.c_in(), "conv input channel mismatch");
        let (kh, kw) = self.kernel();
        assert!(
            h + 2 * self.pad >= kh && w + 2 * self.pad >= kw,
            "conv input {}x{} smaller than kernel {}x{}",
            h,
            w,
            kh,
            kw
        );
        let (oh, ow) = self.out_size(h, w);
        let cols = im2col(x, kh, kw, self.stride, self.pad, oh, ow);
        let wmat = self
            .weight
            .view()
            .into_shape_with_order((self.c_out(), c_in * kh * kw))
            .expect("weight is contiguous");
        let mut y2 = wmat.dot(&cols);
        for (mut row, &b) in y2.rows_mut().into_iter().zip(self.bias.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        y2.into_shape_with_order((self.c_out(), oh, ow)).expect("gemm output is contiguous")
    }

    /// Backpropagate through the layer: accumulates parameter gradients into
    /// `grads` and returns the gradient with respect to the input.
    pub fn backward(&self, x: &Array3<F>, gy: &Array3<F>, grads: &mut Conv2dGrads<F>) -> Array3<F> {
        let (c_in, h, w) = x.dim();
        let (kh, kw) = self.kernel();
        let (c_out, oh, ow) = gy.dim();
        assert_eq!(c_out, self.c_out());
        debug_assert_eq!((oh, ow), self.out_size(h, w));

        let gy2 = gy.view().into_shape_with_order((c_out, oh * ow)).expect("gy is contiguous");

        for (gb, row) in grads.bias.iter_mut().zip(gy2.rows()) {
            *gb += row.sum();
        }

        let cols = im2col(x, kh, kw, self.stride, self.pad, oh, ow);
        let gw = gy2.dot(&cols.t());
        let mut gw_acc = grads
            .weight
            .view_mut()
            .into_shape_with_order((c_out, c_in * kh * kw))
            .expect("weight grads contiguous");
        gw_acc += &gw;

        let wmat = self
            .weight
            .view()
            .into_shape_with_order((c_out, c_in * kh * kw))
            .expect("weight is contiguous");
        let gcols = wmat.t().dot(&gy2);
        col2im(&gcols, (c_in, h, w), kh, kw, self.stride, self.pad, oh, ow)
    }

    /// Like [`Conv2d::backward`] but skips the input-gradient GEMM; for the
    /// first layer of a network whose input is data, that GEMM is wasted work.
    pub fn backward_params_only(&self, x: &Array3<F>, gy: &Array3<F>, grads: &mut Conv2dGrads<F>) {
        let (c_in, h, w) = x.dim();
        let (kh, kw) = self.kernel();
        let (c_out, oh, ow) = gy.dim();
        assert_eq!(c_out, self.c_out());
        debug_assert_eq!((oh, ow), self.out_size(h, w));
        let gy2 = gy.view().into_shape_with_order((c_out, oh * ow)).expect("gy is contiguous");
        for (gb, row) in grads.bias.iter_mut().zip(gy2.rows()) {
            *gb += row.sum();
        }
        let cols = im2col(x, kh, kw, self.stride, self.pad, oh, ow);
        let gw = gy2.dot(&cols.t());
        let mut gw_acc = grads
            .weight
            .view_mut()
            .into_shape_with_order((c_out, c_in * kh * kw))
            .expect("weight grads contiguous");
        gw_acc += &gw;
    }
}

/// Unfold image patches into a `(c_in * kh * kw, oh * ow)` matrix.
fn im2col<F: Scalar>(
    x: &Array3<F>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array2<F> {
    let (c_in, h, w) = x.dim();
    let mut cols = Array2::<F>::zeros((c_in * kh * kw, oh * ow));
    let xs = x.as_slice().expect("input is contiguous");
    let cs = cols.as_slice_mut().expect("cols is contiguous");

    for c in 0..c_in {
        for di in 0..kh {
            for dj in 0..kw {
                let row = (c * kh + di) * kw + dj;
                let row_base = row * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * stride + di) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_base = (c * h + iy as usize) * w;
                    let dst_base = row_base + oy * ow;
                    if stride == 1 {
                        // ix = ox + dj - pad; copy the contiguous valid run.
                        let off = dj as isize - pad as isize;
                        let ox_lo = (-off).max(0) as usize;
                        let ox_hi = ow.min((w as isize - off).max(0) as usize);
                        if ox_lo < ox_hi {
                            let src_lo = (ox_lo as isize + off) as usize;
                            cs[dst_base + ox_lo..dst_base + ox_hi].copy_from_slice(
                                &xs[src_base + src_lo..src_base + src_lo + (ox_hi - ox_lo)],
                            );
                        }
                    } else {
                        for ox in 0..ow {
                            let ix = (ox * stride + dj) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                cs[dst_base + ox] = xs[src_base + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Fold a column-gradient matrix back onto the input (adjoint of [`im2col`]).
fn col2im<F: Scalar>(
    gcols: &Array2<F>,
    x_dim: (usize, usize, usize),
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Array3<F> {
    let (c_in, h, w) = x_dim;
    let mut gx = Array3::<F>::zeros(x_dim);
    let gs = gcols.as_slice().expect("gcols is contiguous");
    let out = gx.as_slice_mut().expect("gx is contiguous");

    for c in 0..c_in {
        for di in 0..kh {
            for dj in 0..kw {
                let row = (c * kh + di) * kw + dj;
                let row_base = row * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * stride + di) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_base = (c * h + iy as usize) * w;
                    let src_base = row_base + oy * ow;
                    if stride == 1 {
                        let off = dj as isize - pad as isize;
                        let ox_lo = (-off).max(0) as usize;
                        let ox_hi = ow.min((w as isize - off).max(0) as usize);
                        for ox in ox_lo..ox_hi {
                            out[dst_base + (ox as isize + off) as usize] += gs[src_base + ox];
                        }
                    } else {
                        for ox in 0..ow {
                            let ix = (ox * stride + dj) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                out[dst_base + ix as usize] += gs[src_base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}
