//! The learned functions: residual encoder, position decoder, adversarial
//! critic, and the post-hoc splice-mask network.

pub mod critic;
pub mod decoder;
pub mod encoder;
pub mod splice_net;
pub mod unet;

pub use critic::CriticModel;
pub use decoder::DecoderModel;
pub use encoder::{EncoderModel, EncodeOutput, RESIDUAL_BOUND};
pub use splice_net::SpliceNetModel;
