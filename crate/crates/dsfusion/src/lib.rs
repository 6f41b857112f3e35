//! Discriminator-steered latent diffusion for stylized glyph generation.
//!
//! A small denoising diffusion model is trained on a corpus of style
//! images in the latent space of a frozen convolutional codec, while a
//! CNN discriminator, seeing encoded glyph renders as real samples and
//! the generator's one-shot denoised latents as fake samples, steers
//! generation toward the glyph's shape. Generated candidates are then
//! scored on glyph legibility and style affinity and ranked by Pareto
//! dominance.
//!
//! The workspace is desk-scale by design: everything runs on CPU, all
//! randomness flows from one seed through named sub-streams, and every
//! run is bit-reproducible.

pub mod adversary;
pub mod bundle;
pub mod codec;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod glyph;
pub mod image_io;
pub mod nn;
pub mod demo;
pub mod pipeline;
pub mod rank;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
