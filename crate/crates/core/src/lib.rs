//! matforge: a desk-scale joint RGB-PBR material pipeline.
//!
//! Procedural SVBRDF rendering builds a hybrid corpus; a 3D causal VAE packs
//! an RGB frame and four PBR maps into two interdependent latents; a small
//! rectified-flow diffusion transformer with LoRA task adapters performs
//! text-to-material generation, image-to-material generation, and intrinsic
//! decomposition. Everything runs on the CPU, deterministically.

pub mod error;
pub mod metrics;
pub mod procgen;
pub mod render;
pub mod rng;
pub mod tensor;
pub mod vae;

pub use error::{MatError, Result};
