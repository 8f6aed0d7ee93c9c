//! Learned, spatially-varying steganography for crop and splice forensics.
//!
//! An encoder CNN hides a distinct positional signature in every local region
//! of an image; a stride-1 decoder CNN recovers, for each receptive field, the
//! 2-D coordinates that content held in the originally encoded image. Crops,
//! decimations and replacements then show up as structured disturbances of the
//! decoded positional field: a closed-form least-squares fit recovers crop
//! offset and scale, and per-pixel deviations (or a dedicated mask network)
//! localize replaced content.
//!
//! Module map:
//! - [`poscodes`]: sinusoidal positional code fields and their shift relation.
//! - [`networks`]: the encoder / decoder / critic / splice-mask models.
//! - [`geometry`]: ideal positional fields and the crop/scale regression.
//! - [`training`]: losses, decimation augmentation, two-phase training loop.
//! - [`datasets`]: corpus loading, procedural images, benchmark synthesis.
//! - [`detection`]: stegapos classifier, crop detector, splice-mask methods.
//! - [`analysis`]: residual statistics (histograms, color PCA).
//! - [`persist`]: checkpoint container.

pub mod analysis;
pub mod datasets;
pub mod detection;
pub mod error;
pub mod geometry;
pub mod networks;
pub mod nn;
pub mod persist;
pub mod poscodes;
pub mod training;

pub use error::{Error, Result};

/// Images are `(3, height, width)` tensors with RGB channel order and values
/// in `[0, 1]`.
pub type Image<F> = ndarray::Array3<F>;

/// Binary replacement masks: `true` marks replaced/foreign content.
pub type SpliceMask = ndarray::Array2<bool>;
