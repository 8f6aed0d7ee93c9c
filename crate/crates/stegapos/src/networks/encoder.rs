//! Residual encoder: hides positional codes in an image.
//!
//! The network consumes the channel-wise concatenation `[I; Psi]` and emits a
//! raw residual that is clamped to `[-0.2, 0.2]` and added to the image, with
//! the sum clamped back to `[0, 1]`:
//!
//! ```text
//! residual = clamp_{[-0.2, 0.2]}(f([I; Psi]))
//! stego    = clamp_{[0, 1]}(I + residual)
//! ```
//!
//! Both clamps use straight-through gradients. The head convolution is
//! zero-initialized, so an untrained encoder reproduces its input exactly.

use ndarray::Array3;
use rand_chacha::ChaCha8Rng;

use super::unet::{HeadInit, UNet, UNetCache, UNetGrads};
use crate::error::{Error, Result};
use crate::nn::ops::{clamp_st, concat_channels};
use crate::nn::{Params, ParamsMut, Scalar};
use crate::poscodes::CodeField;

/// Residual amplitude bound from the encoding definition.
pub const RESIDUAL_BOUND: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct EncoderModel<F> {
    pub net: UNet<F>,
    /// Code channel count `D` expected alongside the 3 image channels.
    pub code_dim: usize,
}

pub struct EncodeOutput<F> {
    pub stego: Array3<F>,
    pub residual: Array3<F>,
}

pub struct EncoderCache<F> {
    pub unet: UNetCache<F>,
}

pub type EncoderGrads<F> = UNetGrads<F>;

impl<F: Scalar> EncoderModel<F> {
    pub fn new(rng: &mut ChaCha8Rng, base: usize, code_dim: usize) -> Self {
        Self { net: UNet::new(rng, 3 + code_dim, base, 3, HeadInit::Zero), code_dim }
    }

    pub fn base(&self) -> usize {
        self.net.base
    }

    pub fn zero_grads(&self) -> EncoderGrads<F> {
        self.net.zero_grads()
    }

    pub fn params(&self) -> Params<'_, F> {
        self.net.params("")
    }

    pub fn params_mut(&mut self) -> ParamsMut<'_, F> {
        self.net.params_mut("")
    }

    fn check_inputs(&self, image: &Array3<F>, codes: &CodeField) -> Result<()> {
        let (c, h, w) = image.dim();
        if c != 3 {
            return Err(Error::contract(format!("networks.encode: image must have 3 channels, got {c}")));
        }
        if codes.spec.dim != self.code_dim {
            return Err(Error::contract(format!(
                "networks.encode: code dim {} does not match model dim {}",
                codes.spec.dim, self.code_dim
            )));
        }
        if codes.spec.height != h || codes.spec.width != w {
            return Err(Error::contract(format!(
                "networks.encode: codes are {}x{} but image is {}x{}",
                codes.spec.height, codes.spec.width, h, w
            )));
        }
        if !self.net.check_input(h, w) {
            return Err(Error::contract(format!(
                "networks.encode: image size {h}x{w} must be a multiple of 4 and at least 8"
            )));
        }
        if image.iter().any(|v| v.f64() < 0.0 || v.f64() > 1.0 || !v.f64().is_finite()) {
            return Err(Error::contract("networks.encode: image values must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Full encode with the forward cache retained (training path).
    pub fn encode_with_cache(
        &self,
        image: &Array3<F>,
        codes: &CodeField,
    ) -> Result<(EncodeOutput<F>, EncoderCache<F>)> {
        self.check_inputs(image, codes)?;
        let input = concat_channels(image, &codes.to_tensor::<F>());
        let (raw, unet_cache) = self.net.forward(&input);
        let bound = F::c(RESIDUAL_BOUND);
        let residual = clamp_st(&raw, -bound, bound);
        let stego = clamp_st(&(image + &residual), F::zero(), F::one());
        Ok((EncodeOutput { stego, residual }, EncoderCache { unet: unet_cache }))
    }

    /// Inference encode.
    pub fn encode(&self, image: &Array3<F>, codes: &CodeField) -> Result<EncodeOutput<F>> {
        Ok(self.encode_with_cache(image, codes)?.0)
    }

    /// Backward pass. Both clamps are straight-through, so the gradient of
    /// the loss with respect to the raw network output is
    /// `g_stego + g_residual` (the residual also feeds fidelity terms).
    pub fn backward(
        &self,
        cache: &EncoderCache<F>,
        g_stego: &Array3<F>,
        g_residual: Option<&Array3<F>>,
        grads: &mut EncoderGrads<F>,
    ) {
        let g_raw = match g_residual {
            Some(gr) => g_stego + gr,
            None => g_stego.clone(),
        };
        self.net.backward(&cache.unet, &g_raw, grads, false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poscodes::{make_code_field, CodeSpec};
    use rand::SeedableRng;

    fn codes(w: usize, h: usize) -> CodeField {
        make_code_field(&CodeSpec::new(8, 1e-4, w, h).unwrap()).unwrap()
    }

    fn test_image(h: usize, w: usize) -> Array3<f32> {
        Array3::from_shape_fn((3, h, w), |(c, i, j)| {
            (0.1 + 0.2 * c as f32 + 0.002 * i as f32 + 0.003 * j as f32).min(1.0)
        })
    }

    #[test]
    fn untrained_encoder_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model: EncoderModel<f32> = EncoderModel::new(&mut rng, 4, 8);
        let img = test_image(16, 16);
        let out = model.encode(&img, &codes(16, 16)).unwrap();
        assert_eq!(out.stego, img);
        assert!(out.residual.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_raw_output_clamps_to_residual_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut model: EncoderModel<f32> = EncoderModel::new(&mut rng, 4, 8);
        // Force the head bias to 0.5 so the raw residual is 0.5 everywhere.
        for (name, mut p) in model.params_mut() {
            if name == "head.bias" {
                p.fill(0.5);
            }
        }
        let img = test_image(16, 16);
        let out = model.encode(&img, &codes(16, 16)).unwrap();
        assert!(out.residual.iter().all(|&v| (v - 0.2).abs() < 1e-6));
        for (s, i) in out.stego.iter().zip(img.iter()) {
            assert!((s - (i + 0.2).min(1.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn stego_stays_in_unit_range_and_residual_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut model: EncoderModel<f32> = EncoderModel::new(&mut rng, 4, 8);
        // Random nonzero head to exercise the clamps.
        for (name, mut p) in model.params_mut() {
            if name.starts_with("head") {
                use rand::Rng;
                p.mapv_inplace(|_| rng.random_range(-2.0..2.0));
            }
        }
        let img = test_image(16, 16);
        let out = model.encode(&img, &codes(16, 16)).unwrap();
        assert!(out.stego.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(out.residual.iter().all(|&v| (-0.2..=0.2).contains(&v)));
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let model: EncoderModel<f32> = EncoderModel::new(&mut rng, 4, 8);
        let img = test_image(16, 16);
        assert!(model.encode(&img, &codes(8, 8)).is_err());
        let bad = Array3::<f32>::from_elem((3, 16, 16), 1.5);
        assert!(model.encode(&bad, &codes(16, 16)).is_err());
    }

    #[test]
    fn encode_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut model: EncoderModel<f32> = EncoderModel::new(&mut rng, 4, 8);
        for (name, mut p) in model.params_mut() {
            if name.starts_with("head") {
                use rand::Rng;
                p.mapv_inplace(|_| rng.random_range(-0.1..0.1));
            }
        }
        let img = test_image(16, 16);
        let c = codes(16, 16);
        let a = model.encode(&img, &c).unwrap();
        let b = model.encode(&img, &c).unwrap();
        assert_eq!(a.stego, b.stego);
        assert_eq!(a.residual, b.residual);
    }
}
