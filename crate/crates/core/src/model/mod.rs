//! Denoising network with routed cross-attention and temporal attention,
//! parameter groups for staged fine-tuning, toy embedders and checkpoints.

mod blocks;
mod checkpoint;
mod embed;
mod groups;
mod net;
mod routing;

pub use blocks::{sinusoidal_table, timestep_features, CrossAttention, Temm, TEMPORAL_SLOTS};
pub use checkpoint::{Checkpoint, CheckpointMeta, Moments, FORMAT_VERSION};
pub use embed::{Context, EmbeddingProviders, HashTextEmbedder, ImageEmbedder, PatchImageEmbedder, TextEmbedder};
pub use groups::{trainable_mask, GroupSet, ParamGroup, ParamReport};
pub use net::{
    conv_in_extend, pretrained_conv_in, ForwardPass, NetConfig, ParamSpec, UNetLite, BLOCK_NAMES, NEW_CHANNEL_STD,
    PRETRAINED_SEED,
};
pub use routing::{ContextSource, RoutingConfig};
