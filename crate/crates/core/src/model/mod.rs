//! Transformer-encoder masked-LM with a sparse prediction head.

pub mod batch;
pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod ops;
pub mod params;
pub mod trainer;

pub use batch::Batch;
pub use config::{ModelConfig, Preset};
pub use encoder::{accumulate_gradients, backward, forward_mlm, ForwardOutput, Mode};
pub use error::ModelError;
pub use params::ModelParams;
