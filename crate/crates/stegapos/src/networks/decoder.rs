//! Position decoder: a stride-1, no-padding CNN whose receptive field `R`
//! fixes the output-size law `(N, M) -> (N - R + 1, M - R + 1)`.
//!
//! The stack is `(R - 2) / 2` valid 3x3 convolutions followed by one valid
//! 2x2 head (so `R = 1 + 2 * (R-2)/2 + 1` exactly; `R` must be even). The
//! head's two channels pass through a bounded affine-tanh activation mapping
//! into the nominal coordinate range widened by a margin, so estimates near
//! image edges do not saturate the gradient.

use ndarray::Array3;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::PositionalField;
use crate::nn::conv::{Conv2d, Conv2dGrads};
use crate::nn::init::{he_conv, small_conv};
use crate::nn::ops::{relu, relu_backward};
use crate::nn::{join_name, Params, ParamsMut, Scalar};

#[derive(Debug, Clone)]
pub struct DecoderModel<F> {
    convs: Vec<Conv2d<F>>,
    head: Conv2d<F>,
    pub channels: usize,
    /// Canonical encode size; fixes the output coordinate range.
    pub canonical_w: usize,
    pub canonical_h: usize,
    /// Output range margin as a fraction of the canonical extent.
    pub margin_frac: f64,
}

pub struct DecoderCache<F> {
    /// Input to each hidden conv (the previous post-ReLU activation).
    inputs: Vec<Array3<F>>,
    /// Input to the head conv.
    head_in: Array3<F>,
    /// tanh output, kept for the activation derivative.
    t: Array3<F>,
}

pub struct DecoderGrads<F> {
    convs: Vec<Conv2dGrads<F>>,
    head: Conv2dGrads<F>,
}

impl<F: Scalar> DecoderModel<F> {
    pub fn new(
        rng: &mut ChaCha8Rng,
        channels: usize,
        receptive_field: usize,
        canonical_w: usize,
        canonical_h: usize,
        margin_frac: f64,
    ) -> Result<Self> {
        if receptive_field < 4 || receptive_field % 2 != 0 {
            return Err(Error::config(format!(
                "decoder receptive field must be even and at least 4, got {receptive_field}"
            )));
        }
        let n3 = (receptive_field - 2) / 2;
        let mut convs = Vec::with_capacity(n3);
        for i in 0..n3 {
            let c_in = if i == 0 { 3 } else { channels };
            convs.push(he_conv(rng, channels, c_in, 3, 1, 0));
        }
        let head = small_conv(rng, 2, channels, 2, 1, 0, 0.01);
        Ok(Self { convs, head, channels, canonical_w, canonical_h, margin_frac })
    }

    /// Receptive field computed from the layer stack (all strides are 1, so
    /// it is one plus the sum of kernel extents minus one per layer).
    pub fn receptive_field(&self) -> usize {
        let mut r = 1;
        for conv in &self.convs {
            r += conv.kernel().0 - 1;
        }
        r += self.head.kernel().0 - 1;
        r
    }

    /// Affine constants of the bounded output head for one axis:
    /// the nominal range `[R/2 - m, extent - R/2 + m]` mapped from tanh.
    fn coord_affine(&self, extent: usize) -> (F, F) {
        let r = self.receptive_field() as f64;
        let m = self.margin_frac * extent as f64;
        let lo = (r / 2.0).floor() - m;
        let hi = extent as f64 - (r / 2.0).ceil() + m;
        (F::c((lo + hi) / 2.0), F::c((hi - lo) / 2.0))
    }

    pub fn output_dim(&self, h: usize, w: usize) -> (usize, usize) {
        let r = self.receptive_field();
        (h - r + 1, w - r + 1)
    }

    pub fn forward(&self, image: &Array3<F>) -> Result<(PositionalField<F>, DecoderCache<F>)> {
        let (c, h, w) = image.dim();
        if c != 3 {
            return Err(Error::contract(format!(
                "networks.decode_positions: image must have 3 channels, got {c}"
            )));
        }
        let r = self.receptive_field();
        if h < r || w < r {
            return Err(Error::contract(format!(
                "networks.decode_positions: image {h}x{w} is smaller than the receptive field {r}"
            )));
        }
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut act = image.clone();
        for conv in &self.convs {
            let z = conv.forward(&act);
            inputs.push(act);
            act = relu(&z);
        }
        let z = self.head.forward(&act);
        let t = z.mapv(|v| v.tanh());
        let (cx, hx) = self.coord_affine(self.canonical_w);
        let (cy, hy) = self.coord_affine(self.canonical_h);
        let x = t.index_axis(ndarray::Axis(0), 0).mapv(|v| cx + hx * v);
        let y = t.index_axis(ndarray::Axis(0), 1).mapv(|v| cy + hy * v);
        Ok((PositionalField::new(x, y), DecoderCache { inputs, head_in: act, t }))
    }

    pub fn decode(&self, image: &Array3<F>) -> Result<PositionalField<F>> {
        Ok(self.forward(image)?.0)
    }

    /// Backward from a positional-field gradient to the input-image gradient.
    pub fn backward(
        &self,
        cache: &DecoderCache<F>,
        g_field: &PositionalField<F>,
        grads: &mut DecoderGrads<F>,
    ) -> Array3<F> {
        let (_, hx) = self.coord_affine(self.canonical_w);
        let (_, hy) = self.coord_affine(self.canonical_h);
        let (rows, cols) = g_field.dim();
        // d p / d z = half * (1 - tanh^2).
        let mut gz = Array3::zeros((2, rows, cols));
        for r in 0..rows {
            for c in 0..cols {
                let tx = cache.t[[0, r, c]];
                let ty = cache.t[[1, r, c]];
                gz[[0, r, c]] = g_field.x[[r, c]] * hx * (F::one() - tx * tx);
                gz[[1, r, c]] = g_field.y[[r, c]] * hy * (F::one() - ty * ty);
            }
        }
        let mut g = self.head.backward(&cache.head_in, &gz, &mut grads.head);
        for i in (0..self.convs.len()).rev() {
            // g is the gradient at the post-ReLU activation feeding layer i+1.
            let masked = if i + 1 == self.convs.len() {
                relu_backward(&cache.head_in, &g)
            } else {
                relu_backward(&cache.inputs[i + 1], &g)
            };
            g = self.convs[i].backward(&cache.inputs[i], &masked, &mut grads.convs[i]);
        }
        g
    }

    pub fn zero_grads(&self) -> DecoderGrads<F> {
        DecoderGrads {
            convs: self.convs.iter().map(|c| c.zero_grads()).collect(),
            head: self.head.zero_grads(),
        }
    }

    pub fn params(&self) -> Params<'_, F> {
        let mut out = Vec::new();
        for (i, conv) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.weight"), conv.weight.view().into_dyn()));
            out.push((format!("conv{i}.bias"), conv.bias.view().into_dyn()));
        }
        out.push(("head.weight".to_string(), self.head.weight.view().into_dyn()));
        out.push(("head.bias".to_string(), self.head.bias.view().into_dyn()));
        out
    }

    pub fn params_mut(&mut self) -> ParamsMut<'_, F> {
        let mut out = Vec::new();
        for (i, conv) in self.convs.iter_mut().enumerate() {
            out.push((format!("conv{i}.weight"), conv.weight.view_mut().into_dyn()));
            out.push((format!("conv{i}.bias"), conv.bias.view_mut().into_dyn()));
        }
        out.push(("head.weight".to_string(), self.head.weight.view_mut().into_dyn()));
        out.push(("head.bias".to_string(), self.head.bias.view_mut().into_dyn()));
        out
    }
}

impl<F: Scalar> DecoderGrads<F> {
    pub fn params(&self, prefix: &str) -> Params<'_, F> {
        let mut out = Vec::new();
        for (i, g) in self.convs.iter().enumerate() {
            out.push((join_name(prefix, &format!("conv{i}.weight")), g.weight.view().into_dyn()));
            out.push((join_name(prefix, &format!("conv{i}.bias")), g.bias.view().into_dyn()));
        }
        out.push((join_name(prefix, "head.weight"), self.head.weight.view().into_dyn()));
        out.push((join_name(prefix, "head.bias"), self.head.bias.view().into_dyn()));
        out
    }

    pub fn scale(&mut self, factor: F) {
        for g in &mut self.convs {
            g.weight.mapv_inplace(|v| v * factor);
            g.bias.mapv_inplace(|v| v * factor);
        }
        self.head.weight.mapv_inplace(|v| v * factor);
        self.head.bias.mapv_inplace(|v| v * factor);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn model(r: usize) -> DecoderModel<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        DecoderModel::new(&mut rng, 6, r, 128, 128, 0.1).unwrap()
    }

    #[test]
    fn receptive_field_matches_analytic_value() {
        for r in [4usize, 8, 16] {
            assert_eq!(model(r).receptive_field(), r);
        }
    }

    #[test]
    fn output_size_law_at_canonical_size() {
        let m = model(16);
        let img = Array3::<f32>::from_elem((3, 128, 128), 0.5);
        let field = m.decode(&img).unwrap();
        assert_eq!(field.dim(), (113, 113));
    }

    #[test]
    fn rejects_inputs_smaller_than_receptive_field() {
        let m = model(16);
        let img = Array3::<f32>::from_elem((3, 15, 40), 0.5);
        assert!(m.decode(&img).is_err());
    }

    #[test]
    fn outputs_lie_in_margin_extended_range() {
        let m = model(16);
        let img = Array3::from_shape_fn((3, 32, 32), |(c, i, j)| {
            ((c * 53 + i * 17 + j * 3) % 97) as f32 / 97.0
        });
        let field = m.decode(&img).unwrap();
        let lo = 8.0 - 12.8;
        let hi = 120.0 + 12.8;
        assert!(field.x.iter().chain(field.y.iter()).all(|&v| v >= lo as f32 && v <= hi as f32));
    }

    #[test]
    fn decode_is_deterministic() {
        let m = model(8);
        let img = Array3::from_shape_fn((3, 20, 24), |(c, i, j)| ((c + i * j) % 11) as f32 / 11.0);
        assert_eq!(m.decode(&img).unwrap(), m.decode(&img).unwrap());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut m: DecoderModel<f64> = DecoderModel::new(&mut rng, 3, 6, 32, 32, 0.1).unwrap();
        let img = Array3::from_shape_fn((3, 10, 10), |(c, i, j)| {
            0.3 + 0.05 * (c as f64) + 0.01 * (i as f64) - 0.02 * (j as f64)
        });
        use rand::Rng;
        let dim = m.output_dim(10, 10);
        let rx = ndarray::Array2::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0));
        let ry = ndarray::Array2::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0));
        let loss = |m: &DecoderModel<f64>, img: &Array3<f64>| {
            let f = m.decode(img).unwrap();
            (&f.x * &rx).sum() + (&f.y * &ry).sum()
        };
        let (_, cache) = m.forward(&img).unwrap();
        let mut grads = m.zero_grads();
        let gimg = m.backward(&cache, &PositionalField::new(rx.clone(), ry.clone()), &mut grads);

        let h = 1e-6;
        for idx in [(0usize, 3usize, 4usize), (2, 9, 0), (1, 0, 9)] {
            let mut ip = img.clone();
            let mut im = img.clone();
            ip[idx] += h;
            im[idx] -= h;
            let fd = (loss(&m, &ip) - loss(&m, &im)) / (2.0 * h);
            assert!((gimg[idx] - fd).abs() < 1e-6, "gx {} fd {}", gimg[idx], fd);
        }
        let glist: Vec<(String, Vec<f64>)> = grads
            .params("")
            .into_iter()
            .map(|(n, v)| (n, v.iter().cloned().collect()))
            .collect();
        for li in 0..glist.len() {
            let probe = glist[li].1.len() / 3;
            let analytic = glist[li].1[probe];
            let nudge = |m: &mut DecoderModel<f64>, d: f64| {
                let mut p = m.params_mut();
                p[li].1.as_slice_mut().unwrap()[probe] += d;
            };
            nudge(&mut m, h);
            let lp = loss(&m, &img);
            nudge(&mut m, -2.0 * h);
            let lm = loss(&m, &img);
            nudge(&mut m, h);
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (analytic - fd).abs() <= 1e-6 * analytic.abs().max(fd.abs()).max(1.0),
                "{}: {} vs {}",
                glist[li].0,
                analytic,
                fd
            );
        }
    }
}
