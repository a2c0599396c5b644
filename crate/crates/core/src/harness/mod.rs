//! Synthetic procedural videos with exact masks, frame-file I/O, dataset
//! manifests and the generate/ablate pipelines used by the CLI.

mod dataset;
mod io;
mod pipeline;
mod synthetic;

pub use dataset::{
    gen_dataset, gen_synthetic, load_manifest, load_video, read_manifest, video_id, write_manifest, DatasetSpec,
    LoadedVideo, ManifestRecord, MANIFEST_NAME,
};
pub use io::{
    frame_name, list_images, mask_name, read_frame, read_frames, read_mask, write_frame, write_frames, write_mask,
    write_rgb,
};
pub use pipeline::{
    ablate_routing, generate_frames, AblationRecord, GenerateOptions, SamplerSetup, ABLATION_HEADER,
};
pub use synthetic::{covers, Background, Color, RenderedVideo, Shape, SyntheticSpec, Trajectory};
