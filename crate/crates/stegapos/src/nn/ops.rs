//! Stateless tensor ops used by the networks, each with an explicit adjoint.

use ndarray::{Array1, Array2, Array3, Axis};

use super::Scalar;

pub fn relu<F: Scalar>(x: &Array3<F>) -> Array3<F> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

/// `gy` masked by the forward activation pattern (`y > 0` iff `x > 0`).
pub fn relu_backward<F: Scalar>(y: &Array3<F>, gy: &Array3<F>) -> Array3<F> {
    let mut gx = gy.clone();
    gx.zip_mut_with(y, |g, &v| {
        if v <= F::zero() {
            *g = F::zero();
        }
    });
    gx
}

pub fn leaky_relu<F: Scalar>(x: &Array3<F>, slope: F) -> Array3<F> {
    x.mapv(|v| if v > F::zero() { v } else { v * slope })
}

pub fn leaky_relu_backward<F: Scalar>(x: &Array3<F>, gy: &Array3<F>, slope: F) -> Array3<F> {
    let mut gx = gy.clone();
    gx.zip_mut_with(x, |g, &v| {
        if v <= F::zero() {
            *g = *g * slope;
        }
    });
    gx
}

pub fn sigmoid<F: Scalar>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

/// Clamp with a straight-through gradient: the adjoint is the identity, so
/// callers simply reuse the incoming gradient. Keeping the encoder trainable
/// where it over-drives the residual bound depends on this.
pub fn clamp_st<F: Scalar>(x: &Array3<F>, lo: F, hi: F) -> Array3<F> {
    x.mapv(|v| {
        if v < lo {
            lo
        } else if v > hi {
            hi
        } else {
            v
        }
    })
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2x<F: Scalar>(x: &Array3<F>) -> Array3<F> {
    let (c, h, w) = x.dim();
    let mut y = Array3::zeros((c, h * 2, w * 2));
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                let v = x[[ci, i, j]];
                y[[ci, 2 * i, 2 * j]] = v;
                y[[ci, 2 * i + 1, 2 * j]] = v;
                y[[ci, 2 * i, 2 * j + 1]] = v;
                y[[ci, 2 * i + 1, 2 * j + 1]] = v;
            }
        }
    }
    y
}

/// Adjoint of [`upsample2x`]: sum over each 2x2 block.
pub fn upsample2x_backward<F: Scalar>(gy: &Array3<F>) -> Array3<F> {
    let (c, h2, w2) = gy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut gx = Array3::zeros((c, h, w));
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                gx[[ci, i, j]] = gy[[ci, 2 * i, 2 * j]]
                    + gy[[ci, 2 * i + 1, 2 * j]]
                    + gy[[ci, 2 * i, 2 * j + 1]]
                    + gy[[ci, 2 * i + 1, 2 * j + 1]];
            }
        }
    }
    gx
}

/// Channel-wise concatenation `[a; b]`.
pub fn concat_channels<F: Scalar>(a: &Array3<F>, b: &Array3<F>) -> Array3<F> {
    assert_eq!(a.dim().1, b.dim().1);
    assert_eq!(a.dim().2, b.dim().2);
    ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("matching spatial dims")
}

/// Split a gradient back into the two channel groups of [`concat_channels`].
pub fn split_channels<F: Scalar>(g: &Array3<F>, c_a: usize) -> (Array3<F>, Array3<F>) {
    let ga = g.slice(ndarray::s![..c_a, .., ..]).to_owned();
    let gb = g.slice(ndarray::s![c_a.., .., ..]).to_owned();
    (ga, gb)
}

/// Global average pool over the spatial axes.
pub fn global_avg_pool<F: Scalar>(x: &Array3<F>) -> Array1<F> {
    let (_, h, w) = x.dim();
    let n = F::c((h * w) as f64);
    let mut out = Array1::zeros(x.dim().0);
    for (o, plane) in out.iter_mut().zip(x.outer_iter()) {
        *o = plane.sum() / n;
    }
    out
}

pub fn global_avg_pool_backward<F: Scalar>(g: &Array1<F>, dim: (usize, usize, usize)) -> Array3<F> {
    let (_, h, w) = dim;
    let n = F::c((h * w) as f64);
    let mut gx = Array3::zeros(dim);
    for (mut plane, &gv) in gx.outer_iter_mut().zip(g.iter()) {
        plane.fill(gv / n);
    }
    gx
}

/// Dense layer on a vector (critic head).
#[derive(Debug, Clone)]
pub struct Linear<F> {
    /// `(out, in)`.
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct LinearGrads<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Linear<F> {
    pub fn zero_grads(&self) -> LinearGrads<F> {
        LinearGrads { weight: Array2::zeros(self.weight.dim()), bias: Array1::zeros(self.bias.len()) }
    }

    pub fn forward(&self, x: &Array1<F>) -> Array1<F> {
        self.weight.dot(x) + &self.bias
    }

    pub fn backward(&self, x: &Array1<F>, gy: &Array1<F>, grads: &mut LinearGrads<F>) -> Array1<F> {
        for (i, &g) in gy.iter().enumerate() {
            grads.bias[i] += g;
            for (j, &xv) in x.iter().enumerate() {
                grads.weight[[i, j]] += g * xv;
            }
        }
        self.weight.t().dot(gy)
    }
}
