use thiserror::Error;

/// Failures grouped by what the user has to fix; each maps to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Runtime(_) => 5,
        }
    }
}

impl From<mlm_budget::corpus::CorpusError> for CliError {
    fn from(e: mlm_budget::corpus::CorpusError) -> Self {
        use mlm_budget::corpus::CorpusError::*;
        match e {
            Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<mlm_budget::model::ModelError> for CliError {
    fn from(e: mlm_budget::model::ModelError) -> Self {
        use mlm_budget::model::ModelError::*;
        match e {
            Config(_) => CliError::Config(e.to_string()),
            Batch(_) | EmptyEval | Checkpoint(_) => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<mlm_budget::sweep::SweepError> for CliError {
    fn from(e: mlm_budget::sweep::SweepError) -> Self {
        use mlm_budget::sweep::SweepError::*;
        match e {
            Config(_) | GridFile { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<mlm_budget::cost::CostError> for CliError {
    fn from(e: mlm_budget::cost::CostError) -> Self {
        match e {
            mlm_budget::cost::CostError::Log { .. } => CliError::Data(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
