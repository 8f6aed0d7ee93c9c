//! Adversarial critic: a small strided patch classifier estimating the
//! probability that an image is *unencoded*.

use ndarray::{Array1, Array3};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::conv::{Conv2d, Conv2dGrads};
use crate::nn::init::{he_conv, zero_linear};
use crate::nn::ops::{
    global_avg_pool, global_avg_pool_backward, leaky_relu, leaky_relu_backward, sigmoid, Linear,
    LinearGrads,
};
use crate::nn::{join_name, Params, ParamsMut, Scalar};

const LEAK: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct CriticModel<F> {
    convs: Vec<Conv2d<F>>,
    head: Linear<F>,
    pub base: usize,
}

pub struct CriticCache<F> {
    /// Pre-activation input of each conv.
    inputs: Vec<Array3<F>>,
    /// Pre-activation conv outputs (leaky ReLU needs the input sign).
    zs: Vec<Array3<F>>,
    pooled: Array1<F>,
    prob: F,
}

pub struct CriticGrads<F> {
    convs: Vec<Conv2dGrads<F>>,
    head: LinearGrads<F>,
}

impl<F: Scalar> CriticModel<F> {
    /// Four stride-2 convolutions and a zero-initialized linear head, so an
    /// untrained critic outputs exactly 0.5.
    pub fn new(rng: &mut ChaCha8Rng, base: usize) -> Self {
        let widths = [(3, base), (base, 2 * base), (2 * base, 4 * base), (4 * base, 4 * base)];
        let convs = widths.iter().map(|&(ci, co)| he_conv(rng, co, ci, 3, 2, 1)).collect();
        Self { convs, head: zero_linear(1, 4 * base), base }
    }

    pub fn forward(&self, image: &Array3<F>) -> Result<(F, CriticCache<F>)> {
        let (c, h, w) = image.dim();
        if c != 3 {
            return Err(Error::contract(format!("networks.criticize: expected 3 channels, got {c}")));
        }
        if h < 16 || w < 16 {
            return Err(Error::contract(format!(
                "networks.criticize: image {h}x{w} too small for the 4-level critic"
            )));
        }
        let slope = F::c(LEAK);
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut zs = Vec::with_capacity(self.convs.len());
        let mut act = image.clone();
        for conv in &self.convs {
            let z = conv.forward(&act);
            inputs.push(act);
            act = leaky_relu(&z, slope);
            zs.push(z);
        }
        let pooled = global_avg_pool(&act);
        let logit = self.head.forward(&pooled)[0];
        let prob = sigmoid(logit);
        Ok((prob, CriticCache { inputs, zs, pooled, prob }))
    }

    /// Probability that `image` is unencoded.
    pub fn prob_unencoded(&self, image: &Array3<F>) -> Result<F> {
        Ok(self.forward(image)?.0)
    }

    /// Backward from d(loss)/d(probability); returns d(loss)/d(image) when
    /// requested (the generator path needs it, the critic's own update does
    /// not).
    pub fn backward(
        &self,
        cache: &CriticCache<F>,
        g_prob: F,
        grads: &mut CriticGrads<F>,
        need_gx: bool,
    ) -> Option<Array3<F>> {
        let p = cache.prob;
        let g_logit = g_prob * p * (F::one() - p);
        let g_vec = Array1::from_elem(1, g_logit);
        let g_pooled = self.head.backward(&cache.pooled, &g_vec, &mut grads.head);
        let last = self.convs.len() - 1;
        let slope = F::c(LEAK);
        let act_dim = self.convs[last].out_size(cache.inputs[last].dim().1, cache.inputs[last].dim().2);
        let mut g = global_avg_pool_backward(&g_pooled, (4 * self.base, act_dim.0, act_dim.1));
        for i in (0..self.convs.len()).rev() {
            let masked = leaky_relu_backward(&cache.zs[i], &g, slope);
            if i == 0 && !need_gx {
                self.convs[0].backward_params_only(&cache.inputs[0], &masked, &mut grads.convs[0]);
                return None;
            }
            g = self.convs[i].backward(&cache.inputs[i], &masked, &mut grads.convs[i]);
        }
        Some(g)
    }

    pub fn zero_grads(&self) -> CriticGrads<F> {
        CriticGrads {
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

impl<F: Scalar> CriticGrads<F> {
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

    #[test]
    fn untrained_critic_outputs_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let critic: CriticModel<f32> = CriticModel::new(&mut rng, 4);
        let img = Array3::from_shape_fn((3, 32, 32), |(c, i, j)| ((c + i + j) % 7) as f32 / 7.0);
        assert_eq!(critic.prob_unencoded(&img).unwrap(), 0.5);
    }

    #[test]
    fn output_is_a_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let mut critic: CriticModel<f32> = CriticModel::new(&mut rng, 4);
        use rand::Rng;
        for (_, mut p) in critic.params_mut() {
            p.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let img = Array3::from_shape_fn((3, 32, 32), |(c, i, j)| ((c * 3 + i * 5 + j) % 13) as f32 / 13.0);
        let p = critic.prob_unencoded(&img).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut critic: CriticModel<f64> = CriticModel::new(&mut rng, 2);
        use rand::Rng;
        for (_, mut p) in critic.params_mut() {
            p.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
        let img = Array3::from_shape_fn((3, 16, 16), |_| rng.random_range(0.0..1.0));
        let loss = |c: &CriticModel<f64>, img: &Array3<f64>| c.prob_unencoded(img).unwrap();

        let (_, cache) = critic.forward(&img).unwrap();
        let mut grads = critic.zero_grads();
        let gimg = critic.backward(&cache, 1.0, &mut grads, true).unwrap();

        let h = 1e-6;
        for idx in [(0usize, 5usize, 7usize), (2, 0, 0), (1, 15, 15)] {
            let mut ip = img.clone();
            let mut im = img.clone();
            ip[idx] += h;
            im[idx] -= h;
            let fd = (loss(&critic, &ip) - loss(&critic, &im)) / (2.0 * h);
            assert!((gimg[idx] - fd).abs() < 1e-7, "{} vs {}", gimg[idx], fd);
        }
        let glist: Vec<(String, Vec<f64>)> = grads
            .params("")
            .into_iter()
            .map(|(n, v)| (n, v.iter().cloned().collect()))
            .collect();
        for li in (0..glist.len()).step_by(3) {
            let probe = glist[li].1.len() / 2;
            let analytic = glist[li].1[probe];
            {
                let mut p = critic.params_mut();
                p[li].1.as_slice_mut().unwrap()[probe] += h;
            }
            let lp = loss(&critic, &img);
            {
                let mut p = critic.params_mut();
                p[li].1.as_slice_mut().unwrap()[probe] -= 2.0 * h;
            }
            let lm = loss(&critic, &img);
            {
                let mut p = critic.params_mut();
                p[li].1.as_slice_mut().unwrap()[probe] += h;
            }
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (analytic - fd).abs() <= 1e-6 * analytic.abs().max(fd.abs()).max(1e-3),
                "{}: {} vs {}",
                glist[li].0,
                analytic,
                fd
            );
        }
    }
}
