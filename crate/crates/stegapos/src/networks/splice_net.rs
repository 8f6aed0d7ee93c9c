//! Post-hoc splice-mask network: maps a canonical-size image directly to a
//! soft replacement mask in `[0, 1]`.

use ndarray::{Array2, Array3};
use rand_chacha::ChaCha8Rng;

use super::unet::{HeadInit, UNet, UNetCache, UNetGrads};
use crate::error::{Error, Result};
use crate::nn::ops::sigmoid;
use crate::nn::{Params, ParamsMut, Scalar};

#[derive(Debug, Clone)]
pub struct SpliceNetModel<F> {
    pub net: UNet<F>,
    /// Canonical encode size the network was trained for.
    pub canonical_w: usize,
    pub canonical_h: usize,
}

pub struct SpliceNetCache<F> {
    unet: UNetCache<F>,
    /// Sigmoid output, kept for the activation derivative.
    mask: Array2<F>,
}

pub type SpliceNetGrads<F> = UNetGrads<F>;

impl<F: Scalar> SpliceNetModel<F> {
    pub fn new(rng: &mut ChaCha8Rng, base: usize, canonical_w: usize, canonical_h: usize) -> Self {
        Self { net: UNet::new(rng, 3, base, 1, HeadInit::Small(0.01)), canonical_w, canonical_h }
    }

    pub fn base(&self) -> usize {
        self.net.base
    }

    fn check_input(&self, image: &Array3<F>) -> Result<()> {
        let (c, h, w) = image.dim();
        if c != 3 || h != self.canonical_h || w != self.canonical_w {
            return Err(Error::contract(format!(
                "networks.splice_mask_net: expected 3x{}x{} input, got {}x{}x{}",
                self.canonical_h, self.canonical_w, c, h, w
            )));
        }
        Ok(())
    }

    pub fn forward(&self, image: &Array3<F>) -> Result<(Array2<F>, SpliceNetCache<F>)> {
        self.check_input(image)?;
        let (logits, unet) = self.net.forward(image);
        let mask = logits.index_axis(ndarray::Axis(0), 0).mapv(sigmoid);
        Ok((mask.clone(), SpliceNetCache { unet, mask }))
    }

    /// Soft mask in `[0, 1]`; binarize at 0.5 for reporting.
    pub fn soft_mask(&self, image: &Array3<F>) -> Result<Array2<F>> {
        Ok(self.forward(image)?.0)
    }

    pub fn backward(&self, cache: &SpliceNetCache<F>, g_mask: &Array2<F>, grads: &mut SpliceNetGrads<F>) {
        let (h, w) = g_mask.dim();
        let mut g_logits = Array3::zeros((1, h, w));
        for ((idx, g), &m) in g_logits
            .index_axis_mut(ndarray::Axis(0), 0)
            .indexed_iter_mut()
            .zip(cache.mask.iter())
        {
            let _ = idx;
            *g = g_mask[idx] * m * (F::one() - m);
        }
        self.net.backward(&cache.unet, &g_logits, grads, false);
    }

    pub fn zero_grads(&self) -> SpliceNetGrads<F> {
        self.net.zero_grads()
    }

    pub fn params(&self) -> Params<'_, F> {
        self.net.params("")
    }

    pub fn params_mut(&mut self) -> ParamsMut<'_, F> {
        self.net.params_mut("")
    }
}
