//! Minimal CNN engine: explicit forward/backward layers over `ndarray`.
//!
//! Everything is generic over [`Scalar`] so that production code runs in
//! `f32` while gradient checks instantiate the exact same layer code in
//! `f64`. Layers are stateless with respect to activations: `forward`
//! returns outputs, `backward` consumes the cached inputs the caller kept,
//! so the engine has no hidden mutable state and inference is trivially
//! deterministic.
//!
//! Convolutions are im2col + a single `f32`/`f64` GEMM through
//! `ndarray::dot` (matrixmultiply underneath), which is where essentially
//! all training time goes.

pub mod adam;
pub mod conv;
pub mod init;
pub mod ops;
pub mod resize;

pub use adam::Adam;
pub use conv::{Conv2d, Conv2dGrads};
pub use resize::ResizePlan;

use ndarray::{ArrayViewD, ArrayViewMutD, NdFloat};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point element type of the engine (`f32` or `f64`).
pub trait Scalar: NdFloat + FromPrimitive + ToPrimitive + std::iter::Sum<Self> + 'static {
    /// Shorthand for converting an `f64` literal into `Self`.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    /// Lossy view as `f64`, for metrics and reductions.
    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite value")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Named mutable views over a model's parameter tensors, in declaration order.
pub type ParamsMut<'a, F> = Vec<(String, ArrayViewMutD<'a, F>)>;

/// Named read-only views over a model's parameter (or gradient) tensors.
pub type Params<'a, F> = Vec<(String, ArrayViewD<'a, F>)>;

/// Join a parameter path prefix with a leaf name (`"encoder" + "head.weight"`).
pub fn join_name(prefix: &str, leaf: &str) -> String {
    if prefix.is_empty() {
        leaf.to_string()
    } else {
        format!("{prefix}.{leaf}")
    }
}
