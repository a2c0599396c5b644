//! Loop-structured image-to-video diffusion at desk scale.
pub mod alss;
pub mod conditioning;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod schedule;
pub mod stage;
pub mod trainstage;

pub use error::{Error, Result};
pub use stage::Stage;
