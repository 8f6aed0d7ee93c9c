//! Three-level U-Net backbone shared by the residual encoder and the
//! splice-mask network.
//!
//! Feature maps run at full, half and quarter resolution with channel widths
//! `base`, `2*base`, `4*base`; the two up paths consume nearest-neighbour
//! upsampled features concatenated with the matching skip. All hidden
//! activations are ReLU; the head convolution is linear (callers apply their
//! own output activation).

use ndarray::Array3;
use rand_chacha::ChaCha8Rng;

use crate::nn::conv::{Conv2d, Conv2dGrads};
use crate::nn::init::{he_conv, small_conv, zero_conv};
use crate::nn::ops::{concat_channels, relu, relu_backward, split_channels, upsample2x, upsample2x_backward};
use crate::nn::{join_name, Params, ParamsMut, Scalar};

/// How the head convolution is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadInit {
    /// Exactly zero: the untrained network is a strict no-op producer.
    Zero,
    /// Small random weights (std given), zero bias.
    Small(f64),
}

#[derive(Debug, Clone)]
pub struct UNet<F> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub base: usize,
    enc0a: Conv2d<F>,
    enc0b: Conv2d<F>,
    down1: Conv2d<F>,
    enc1b: Conv2d<F>,
    down2: Conv2d<F>,
    enc2b: Conv2d<F>,
    up1: Conv2d<F>,
    up2: Conv2d<F>,
    head: Conv2d<F>,
}

/// Activations retained by [`UNet::forward`] for the backward pass.
pub struct UNetCache<F> {
    x: Array3<F>,
    a0: Array3<F>,
    a1: Array3<F>,
    b0: Array3<F>,
    b1: Array3<F>,
    c0: Array3<F>,
    c1: Array3<F>,
    m1: Array3<F>,
    u1: Array3<F>,
    m2: Array3<F>,
    u2: Array3<F>,
}

pub struct UNetGrads<F> {
    enc0a: Conv2dGrads<F>,
    enc0b: Conv2dGrads<F>,
    down1: Conv2dGrads<F>,
    enc1b: Conv2dGrads<F>,
    down2: Conv2dGrads<F>,
    enc2b: Conv2dGrads<F>,
    up1: Conv2dGrads<F>,
    up2: Conv2dGrads<F>,
    head: Conv2dGrads<F>,
}

impl<F: Scalar> UNet<F> {
    pub fn new(rng: &mut ChaCha8Rng, in_ch: usize, base: usize, out_ch: usize, head_init: HeadInit) -> Self {
        let b = base;
        let head = match head_init {
            HeadInit::Zero => zero_conv(out_ch, b, 3, 1, 1),
            HeadInit::Small(std) => small_conv(rng, out_ch, b, 3, 1, 1, std),
        };
        Self {
            in_ch,
            out_ch,
            base,
            enc0a: he_conv(rng, b, in_ch, 3, 1, 1),
            enc0b: he_conv(rng, b, b, 3, 1, 1),
            down1: he_conv(rng, 2 * b, b, 3, 2, 1),
            enc1b: he_conv(rng, 2 * b, 2 * b, 3, 1, 1),
            down2: he_conv(rng, 4 * b, 2 * b, 3, 2, 1),
            enc2b: he_conv(rng, 4 * b, 4 * b, 3, 1, 1),
            up1: he_conv(rng, 2 * b, 6 * b, 3, 1, 1),
            up2: he_conv(rng, b, 3 * b, 3, 1, 1),
            head,
        }
    }

    /// Spatial contract: both dimensions must be divisible by 4 so the two
    /// pooled levels tile exactly.
    pub fn check_input(&self, h: usize, w: usize) -> bool {
        h % 4 == 0 && w % 4 == 0 && h >= 8 && w >= 8
    }

    pub fn forward(&self, x: &Array3<F>) -> (Array3<F>, UNetCache<F>) {
        let (c, h, w) = x.dim();
        assert_eq!(c, self.in_ch, "unet input channels");
        assert!(self.check_input(h, w), "unet input {h}x{w} must be divisible by 4");
        let a0 = relu(&self.enc0a.forward(x));
        let a1 = relu(&self.enc0b.forward(&a0));
        let b0 = relu(&self.down1.forward(&a1));
        let b1 = relu(&self.enc1b.forward(&b0));
        let c0 = relu(&self.down2.forward(&b1));
        let c1 = relu(&self.enc2b.forward(&c0));
        let m1 = concat_channels(&upsample2x(&c1), &b1);
        let u1 = relu(&self.up1.forward(&m1));
        let m2 = concat_channels(&upsample2x(&u1), &a1);
        let u2 = relu(&self.up2.forward(&m2));
        let y = self.head.forward(&u2);
        (
            y,
            UNetCache { x: x.clone(), a0, a1, b0, b1, c0, c1, m1, u1, m2, u2 },
        )
    }

    /// Inference-only forward.
    pub fn infer(&self, x: &Array3<F>) -> Array3<F> {
        self.forward(x).0
    }

    /// Backward pass; accumulates parameter gradients and returns the
    /// gradient with respect to the input (skipped when `need_gx` is false:
    /// the input-gradient GEMM of the first conv is pure waste for models
    /// whose input is data).
    pub fn backward(
        &self,
        cache: &UNetCache<F>,
        gy: &Array3<F>,
        grads: &mut UNetGrads<F>,
        need_gx: bool,
    ) -> Option<Array3<F>> {
        let g_u2 = relu_backward(&cache.u2, &self.head.backward(&cache.u2, gy, &mut grads.head));
        let g_m2 = self.up2.backward(&cache.m2, &g_u2, &mut grads.up2);
        let (g_up_u1, g_a1_skip) = split_channels(&g_m2, 2 * self.base);
        let g_u1 = relu_backward(&cache.u1, &upsample2x_backward(&g_up_u1));
        let g_m1 = self.up1.backward(&cache.m1, &g_u1, &mut grads.up1);
        let (g_up_c1, g_b1_skip) = split_channels(&g_m1, 4 * self.base);
        let g_c1 = relu_backward(&cache.c1, &upsample2x_backward(&g_up_c1));
        let g_c0 = relu_backward(&cache.c0, &self.enc2b.backward(&cache.c0, &g_c1, &mut grads.enc2b));
        let mut g_b1 = self.down2.backward(&cache.b1, &g_c0, &mut grads.down2);
        g_b1 += &g_b1_skip;
        let g_b1 = relu_backward(&cache.b1, &g_b1);
        let g_b0 = relu_backward(&cache.b0, &self.enc1b.backward(&cache.b0, &g_b1, &mut grads.enc1b));
        let mut g_a1 = self.down1.backward(&cache.a1, &g_b0, &mut grads.down1);
        g_a1 += &g_a1_skip;
        let g_a1 = relu_backward(&cache.a1, &g_a1);
        let g_a0 = relu_backward(&cache.a0, &self.enc0b.backward(&cache.a0, &g_a1, &mut grads.enc0b));
        if need_gx {
            Some(self.enc0a.backward(&cache.x, &g_a0, &mut grads.enc0a))
        } else {
            self.enc0a.backward_params_only(&cache.x, &g_a0, &mut grads.enc0a);
            None
        }
    }

    pub fn zero_grads(&self) -> UNetGrads<F> {
        UNetGrads {
            enc0a: self.enc0a.zero_grads(),
            enc0b: self.enc0b.zero_grads(),
            down1: self.down1.zero_grads(),
            enc1b: self.enc1b.zero_grads(),
            down2: self.down2.zero_grads(),
            enc2b: self.enc2b.zero_grads(),
            up1: self.up1.zero_grads(),
            up2: self.up2.zero_grads(),
            head: self.head.zero_grads(),
        }
    }

    fn layers(&self) -> [(&'static str, &Conv2d<F>); 9] {
        [
            ("enc0a", &self.enc0a),
            ("enc0b", &self.enc0b),
            ("down1", &self.down1),
            ("enc1b", &self.enc1b),
            ("down2", &self.down2),
            ("enc2b", &self.enc2b),
            ("up1", &self.up1),
            ("up2", &self.up2),
            ("head", &self.head),
        ]
    }

    fn layers_mut(&mut self) -> [(&'static str, &mut Conv2d<F>); 9] {
        [
            ("enc0a", &mut self.enc0a),
            ("enc0b", &mut self.enc0b),
            ("down1", &mut self.down1),
            ("enc1b", &mut self.enc1b),
            ("down2", &mut self.down2),
            ("enc2b", &mut self.enc2b),
            ("up1", &mut self.up1),
            ("up2", &mut self.up2),
            ("head", &mut self.head),
        ]
    }

    pub fn params(&self, prefix: &str) -> Params<'_, F> {
        let mut out = Vec::new();
        for (name, conv) in self.layers() {
            out.push((join_name(prefix, &format!("{name}.weight")), conv.weight.view().into_dyn()));
            out.push((join_name(prefix, &format!("{name}.bias")), conv.bias.view().into_dyn()));
        }
        out
    }

    pub fn params_mut(&mut self, prefix: &str) -> ParamsMut<'_, F> {
        let mut out = Vec::new();
        for (name, conv) in self.layers_mut() {
            out.push((
                join_name(prefix, &format!("{name}.weight")),
                conv.weight.view_mut().into_dyn(),
            ));
            out.push((join_name(prefix, &format!("{name}.bias")), conv.bias.view_mut().into_dyn()));
        }
        out
    }
}

impl<F: Scalar> UNetGrads<F> {
    pub fn params(&self, prefix: &str) -> Params<'_, F> {
        let layers: [(&'static str, &Conv2dGrads<F>); 9] = [
            ("enc0a", &self.enc0a),
            ("enc0b", &self.enc0b),
            ("down1", &self.down1),
            ("enc1b", &self.enc1b),
            ("down2", &self.down2),
            ("enc2b", &self.enc2b),
            ("up1", &self.up1),
            ("up2", &self.up2),
            ("head", &self.head),
        ];
        let mut out = Vec::new();
        for (name, g) in layers {
            out.push((join_name(prefix, &format!("{name}.weight")), g.weight.view().into_dyn()));
            out.push((join_name(prefix, &format!("{name}.bias")), g.bias.view().into_dyn()));
        }
        out
    }

    pub fn scale(&mut self, factor: F) {
        let list: [&mut Conv2dGrads<F>; 9] = [
            &mut self.enc0a,
            &mut self.enc0b,
            &mut self.down1,
            &mut self.enc1b,
            &mut self.down2,
            &mut self.enc2b,
            &mut self.up1,
            &mut self.up2,
            &mut self.head,
        ];
        for g in list {
            g.weight.mapv_inplace(|v| v * factor);
            g.bias.mapv_inplace(|v| v * factor);
        }
    }
}
