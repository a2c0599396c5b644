//! Builds the 9-channel network input from noisy latents, stacked endpoint
//! latents and foreground masks.

mod bundle;
mod encoder;
mod masks;

pub use bundle::{
    assemble_condition, build_fgsm, build_sdslc, draw_drop, drop_last_frame, inference_conditions,
    training_conditions, ConditionBundle, Mode, TrainingConditions, CONDITION_CHANNELS,
};
pub use encoder::{
    basis, encode_frames, toy_decode, toy_encode, IMAGE_CHANNELS, LATENT_CHANNELS, LATENT_SCALE, PATCH,
};
pub use masks::{downsample_mask, FixedMaskProvider, MaskPair, MaskProvider, NullMaskProvider};
