//! Frequency-based positional code fields.
//!
//! Each pixel `(x, y)` carries a `D`-dimensional signature built from
//! sinusoids at a geometric progression of frequencies
//! `omega_k = omega_base^(4k/D)`, `k = 1..D/4`, laid out per `k` as the
//! 4-block `(cos omega_k x, sin omega_k x, cos omega_k y, sin omega_k y)`.
//!
//! Coordinates are raw 0-based pixel indices: `x` is the column, `y` is the
//! row. The convention is recorded in checkpoint manifests so downstream
//! tools never have to guess.
//!
//! Codes at two positions are related by per-frequency 2-D rotations
//! ([`shift_code`]), which is both a cheap way to produce phase-shifted
//! fields and a strong self-test of the generator.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::nn::Scalar;

/// Static description of a code field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeSpec {
    /// Channel count `D`; must be a positive multiple of 4.
    pub dim: usize,
    /// Base frequency `omega_base`, per pixel, in `(0, 1)`.
    pub omega_base: f64,
    /// Field width in pixels (columns).
    pub width: usize,
    /// Field height in pixels (rows).
    pub height: usize,
}

impl CodeSpec {
    pub fn new(dim: usize, omega_base: f64, width: usize, height: usize) -> Result<Self> {
        let spec = Self { dim, omega_base, width, height };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 4 || self.dim % 4 != 0 {
            return Err(Error::config(format!(
                "code dim must be a positive multiple of 4, got {}",
                self.dim
            )));
        }
        if !(self.omega_base > 0.0 && self.omega_base < 1.0) {
            return Err(Error::config(format!(
                "omega_base must lie in (0, 1), got {}",
                self.omega_base
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("code field must be at least 1x1"));
        }
        Ok(())
    }

    /// Frequencies `omega_k` for `k = 1..=D/4`.
    pub fn frequencies(&self) -> Vec<f64> {
        let quarter = self.dim / 4;
        (1..=quarter)
            .map(|k| self.omega_base.powf(4.0 * k as f64 / self.dim as f64))
            .collect()
    }

    /// The code vector at a single (possibly fractional) position.
    pub fn code_at(&self, x: f64, y: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim);
        for omega in self.frequencies() {
            let (sx, cx) = (omega * x).sin_cos();
            let (sy, cy) = (omega * y).sin_cos();
            v.extend_from_slice(&[cx, sx, cy, sy]);
        }
        v
    }
}

/// A realized `D x H x W` code field (channel-first storage).
#[derive(Debug, Clone)]
pub struct CodeField {
    /// `(dim, height, width)`, every entry in `[-1, 1]`.
    pub values: Array3<f64>,
    pub spec: CodeSpec,
}

impl CodeField {
    /// The `D`-vector at column `x`, row `y`.
    pub fn at(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.spec.dim).map(|c| self.values[[c, y, x]]).collect()
    }

    /// Convert to the network element type for channel-wise concatenation.
    pub fn to_tensor<F: Scalar>(&self) -> Array3<F> {
        self.values.mapv(F::c)
    }
}

/// Generate the code field for `spec`.
pub fn make_code_field(spec: &CodeSpec) -> Result<CodeField> {
    spec.validate()?;
    Ok(shifted_code_field_unchecked(spec, 0.0, 0.0))
}

/// Generate a phase-shifted field `Psi^Delta`, i.e. the codes an image would
/// carry if its content actually lived at `(x + dx, y + dy)`. Used by the
/// self-composite stress construction.
pub fn shifted_code_field(spec: &CodeSpec, dx: f64, dy: f64) -> Result<CodeField> {
    spec.validate()?;
    Ok(shifted_code_field_unchecked(spec, dx, dy))
}

fn shifted_code_field_unchecked(spec: &CodeSpec, dx: f64, dy: f64) -> CodeField {
    let freqs = spec.frequencies();
    let mut values = Array3::zeros((spec.dim, spec.height, spec.width));
    for (k, &omega) in freqs.iter().enumerate() {
        let base = 4 * k;
        for yy in 0..spec.height {
            let (sy, cy) = (omega * (yy as f64 + dy)).sin_cos();
            for xx in 0..spec.width {
                let (sx, cx) = (omega * (xx as f64 + dx)).sin_cos();
                values[[base, yy, xx]] = cx;
                values[[base + 1, yy, xx]] = sx;
                values[[base + 2, yy, xx]] = cy;
                values[[base + 3, yy, xx]] = sy;
            }
        }
    }
    CodeField { values, spec: *spec }
}

/// Shift a single code vector by `(dx, dy)` pixels using the rotation
/// relation: per frequency, the `(cos, sin)` pair for the x phase rotates by
/// `omega_k * dx` and the y pair by `omega_k * dy`.
pub fn shift_code(codes_at_xy: &[f64], dx: f64, dy: f64, spec: &CodeSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if codes_at_xy.len() != spec.dim {
        return Err(Error::contract(format!(
            "poscodes: code vector has {} channels, spec wants {}",
            codes_at_xy.len(),
            spec.dim
        )));
    }
    let mut out = vec![0.0; spec.dim];
    for (k, omega) in spec.frequencies().into_iter().enumerate() {
        let base = 4 * k;
        let (sx, cx) = (omega * dx).sin_cos();
        let (sy, cy) = (omega * dy).sin_cos();
        // cos(a+b) = cos a cos b - sin a sin b; sin(a+b) = sin a cos b + cos a sin b.
        out[base] = codes_at_xy[base] * cx - codes_at_xy[base + 1] * sx;
        out[base + 1] = codes_at_xy[base + 1] * cx + codes_at_xy[base] * sx;
        out[base + 2] = codes_at_xy[base + 2] * cy - codes_at_xy[base + 3] * sy;
        out[base + 3] = codes_at_xy[base + 3] * cy + codes_at_xy[base + 2] * sy;
    }
    Ok(out)
}
