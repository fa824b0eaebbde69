use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep configuration error: {0}")]
    Config(String),

    #[error("grid file line {line}: {reason}")]
    GridFile { line: usize, reason: String },

    #[error("trial {trial_id} has no evaluation before a checkpoint (cadence violated)")]
    Cadence { trial_id: usize },

    #[error("trial {trial_id}: illegal transition {from} -> {to}")]
    Transition {
        trial_id: usize,
        from: &'static str,
        to: &'static str,
    },

    #[error("trial {trial_id}: evaluation at {elapsed}s does not follow {previous}s")]
    EvalOrder {
        trial_id: usize,
        elapsed: f64,
        previous: f64,
    },

    #[error("no trial completed the full budget")]
    NoFinishers,

    #[error("metrics log {path}: {reason}")]
    Log { path: std::path::PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SweepError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        SweepError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SweepError>;
