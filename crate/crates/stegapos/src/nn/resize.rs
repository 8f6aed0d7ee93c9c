//! Antialiased bilinear resampling, usable as a differentiable layer.
//!
//! This is the single resampler used everywhere in the crate (dataset
//! preparation, decimation augmentation, benchmark synthesis), because the
//! decoder's decimation equivariance is sensitive to the resampling kernel.
//!
//! Resampling is separable. Each 1-D pass is a sparse linear map built from
//! a triangle kernel whose support is widened by `1/scale` when minifying
//! (standard antialiased "bilinear"). Because the op is linear, the backward
//! pass is exactly the transpose of the forward weights.

use ndarray::Array3;

use super::Scalar;

/// Per-output-index taps of a 1-D resampling pass.
#[derive(Debug, Clone)]
pub struct ResampleAxis {
    pub in_len: usize,
    pub out_len: usize,
    /// `(first input index, tap weights)` per output index; weights sum to 1.
    pub taps: Vec<(usize, Vec<f64>)>,
}

impl ResampleAxis {
    pub fn new(in_len: usize, out_len: usize) -> Self {
        assert!(in_len >= 1 && out_len >= 1);
        let ratio = out_len as f64 / in_len as f64;
        // Kernel scale: shrink the triangle when magnifying is not needed;
        // widen its support by 1/ratio when minifying.
        let kscale = ratio.min(1.0);
        let support = 1.0 / kscale;
        let mut taps = Vec::with_capacity(out_len);
        for o in 0..out_len {
            // Center of output sample `o` in input coordinates.
            let x = (o as f64 + 0.5) / ratio - 0.5;
            let lo = ((x - support).ceil() as isize).max(0) as usize;
            let hi = ((x + support).floor() as isize).min(in_len as isize - 1) as usize;
            let mut ws = Vec::with_capacity(hi - lo + 1);
            let mut total = 0.0;
            for i in lo..=hi {
                let t = ((i as f64 - x) * kscale).abs();
                let w = if t < 1.0 { 1.0 - t } else { 0.0 };
                ws.push(w);
                total += w;
            }
            // Normalize; `total` is positive because the nearest sample always
            // falls inside the triangle support.
            for w in &mut ws {
                *w /= total;
            }
            taps.push((lo, ws));
        }
        Self { in_len, out_len, taps }
    }

    /// True when the pass is an exact identity (same length).
    pub fn is_identity(&self) -> bool {
        self.in_len == self.out_len
    }
}

/// A separable 2-D resampling plan for `(c, h, w)` tensors.
#[derive(Debug, Clone)]
pub struct ResizePlan {
    pub rows: ResampleAxis,
    pub cols: ResampleAxis,
}

impl ResizePlan {
    pub fn new(in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Self {
        Self { rows: ResampleAxis::new(in_h, out_h), cols: ResampleAxis::new(in_w, out_w) }
    }

    pub fn out_dim(&self, c: usize) -> (usize, usize, usize) {
        (c, self.rows.out_len, self.cols.out_len)
    }

    pub fn apply<F: Scalar>(&self, x: &Array3<F>) -> Array3<F> {
        if self.rows.is_identity() && self.cols.is_identity() {
            return x.clone();
        }
        let (c, h, w) = x.dim();
        assert_eq!(h, self.rows.in_len, "resize plan height mismatch");
        assert_eq!(w, self.cols.in_len, "resize plan width mismatch");
        let (oh, ow) = (self.rows.out_len, self.cols.out_len);

        // Rows pass: (c, h, w) -> (c, oh, w).
        let mut tmp = Array3::<F>::zeros((c, oh, w));
        for ci in 0..c {
            for (o, (lo, ws)) in self.rows.taps.iter().enumerate() {
                for (k, &wv) in ws.iter().enumerate() {
                    let wv = F::c(wv);
                    let src = x.slice(ndarray::s![ci, lo + k, ..]);
                    let mut dst = tmp.slice_mut(ndarray::s![ci, o, ..]);
                    dst.zip_mut_with(&src, |d, &s| *d += s * wv);
                }
            }
        }
        // Cols pass: (c, oh, w) -> (c, oh, ow).
        let mut y = Array3::<F>::zeros((c, oh, ow));
        for ci in 0..c {
            for i in 0..oh {
                for (o, (lo, ws)) in self.cols.taps.iter().enumerate() {
                    let mut acc = F::zero();
                    for (k, &wv) in ws.iter().enumerate() {
                        acc += tmp[[ci, i, lo + k]] * F::c(wv);
                    }
                    y[[ci, i, o]] = acc;
                }
            }
        }
        y
    }

    /// Transpose of [`ResizePlan::apply`]: scatter an output-space gradient
    /// back to input space.
    pub fn backward<F: Scalar>(&self, gy: &Array3<F>) -> Array3<F> {
        if self.rows.is_identity() && self.cols.is_identity() {
            return gy.clone();
        }
        let (c, oh, ow) = gy.dim();
        assert_eq!(oh, self.rows.out_len);
        assert_eq!(ow, self.cols.out_len);
        let (h, w) = (self.rows.in_len, self.cols.in_len);

        // Transpose cols pass: (c, oh, ow) -> (c, oh, w).
        let mut tmp = Array3::<F>::zeros((c, oh, w));
        for ci in 0..c {
            for i in 0..oh {
                for (o, (lo, ws)) in self.cols.taps.iter().enumerate() {
                    let g = gy[[ci, i, o]];
                    for (k, &wv) in ws.iter().enumerate() {
                        tmp[[ci, i, lo + k]] += g * F::c(wv);
                    }
                }
            }
        }
        // Transpose rows pass: (c, oh, w) -> (c, h, w).
        let mut gx = Array3::<F>::zeros((c, h, w));
        for ci in 0..c {
            for (o, (lo, ws)) in self.rows.taps.iter().enumerate() {
                for (k, &wv) in ws.iter().enumerate() {
                    let wv = F::c(wv);
                    let src = tmp.slice(ndarray::s![ci, o, ..]);
                    let mut dst = gx.slice_mut(ndarray::s![ci, lo + k, ..]);
                    dst.zip_mut_with(&src, |d, &s| *d += s * wv);
                }
            }
        }
        gx
    }
}

/// Resize an image tensor to `out_h x out_w` with the crate-wide resampler.
pub fn resize<F: Scalar>(x: &Array3<F>, out_h: usize, out_w: usize) -> Array3<F> {
    ResizePlan::new(x.dim().1, x.dim().2, out_h, out_w).apply(x)
}
