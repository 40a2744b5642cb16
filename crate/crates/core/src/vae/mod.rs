//! Joint RGB-PBR representation: 5-frame packing, asymmetric encode/decode
//! with cached features, and the two-stage training procedure.

pub mod eval;
pub mod loss;
pub mod model;
pub mod pack;
pub mod train;

pub use eval::{eval_reconstruction, reconstruction_report};
pub use loss::vae_loss_value;
pub use model::{
    LatentMoments, LatentPair, SampleMode, VaeConfig, VaeForward, VaeModel, PBR_FRAMES,
};
pub use pack::{pack_sequence, FrameSequence};
pub use train::{finetune_decoder, train_vae, VaeTrainConfig, VaeTrainer};

#[cfg(test)]
mod tests;
