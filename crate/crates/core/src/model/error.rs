use thiserror::Error;

use crate::optim::OptimError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model configuration error: {0}")]
    Config(String),

    #[error("invalid batch: {0}")]
    Batch(String),

    /// `layer` counts encoder layers from 0; the embedding block is reported
    /// as `None`, the prediction head as `Some(num_layers)`.
    #[error("non-finite activations at {}", match .layer { Some(l) => format!("layer {l}"), None => "embeddings".to_string() })]
    NonFinite { layer: Option<usize> },

    #[error("non-finite loss {0}")]
    Diverged(f64),

    #[error(transparent)]
    Optim(#[from] OptimError),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty evaluation set")]
    EmptyEval,
}
