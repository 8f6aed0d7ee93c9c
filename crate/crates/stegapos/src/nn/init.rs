//! Parameter initialization.

use ndarray::{Array1, Array2, Array4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::conv::Conv2d;
use super::Scalar;

/// He-style normal init for a conv layer feeding a ReLU.
pub fn he_conv<F: Scalar>(
    rng: &mut ChaCha8Rng,
    c_out: usize,
    c_in: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Conv2d<F> {
    let fan_in = (c_in * k * k) as f64;
    let std = (2.0 / fan_in).sqrt();
    let weight = Array4::from_shape_fn((c_out, c_in, k, k), |_| F::c(gauss(rng) * std));
    Conv2d::new(weight, Array1::zeros(c_out), stride, pad)
}

/// Conv with small-magnitude weights for output heads that should start
/// near (but not exactly at) zero.
pub fn small_conv<F: Scalar>(
    rng: &mut ChaCha8Rng,
    c_out: usize,
    c_in: usize,
    k: usize,
    stride: usize,
    pad: usize,
    std: f64,
) -> Conv2d<F> {
    let weight = Array4::from_shape_fn((c_out, c_in, k, k), |_| F::c(gauss(rng) * std));
    Conv2d::new(weight, Array1::zeros(c_out), stride, pad)
}

/// Conv initialized to exactly zero (used for the encoder head so that the
/// untrained encoder is a strict no-op).
pub fn zero_conv<F: Scalar>(c_out: usize, c_in: usize, k: usize, stride: usize, pad: usize) -> Conv2d<F> {
    Conv2d::new(Array4::zeros((c_out, c_in, k, k)), Array1::zeros(c_out), stride, pad)
}

pub fn zero_linear<F: Scalar>(n_out: usize, n_in: usize) -> super::ops::Linear<F> {
    super::ops::Linear { weight: Array2::zeros((n_out, n_in)), bias: Array1::zeros(n_out) }
}

/// Box-Muller standard normal draw; keeps the dependency surface to `rand`'s
/// uniform source only, so seeds reproduce across rand-distr versions.
pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Derive a decorrelated stream seed from a master seed and a stream tag.
/// SplitMix64 finalizer; stable across platforms.
pub fn stream_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gauss_moments_are_sane() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| gauss(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn stream_seeds_differ_per_tag() {
        let a = stream_seed(7, 1);
        let b = stream_seed(7, 2);
        assert_ne!(a, b);
        assert_eq!(a, stream_seed(7, 1));
    }
}
