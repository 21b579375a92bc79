use bikecast::pipeline::PipelineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Training(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// 2 config, 3 data, 4 training; anything else (output I/O) is 1.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Training(_) => 4,
            Self::Io(_) => 1,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        match e {
            PipelineError::Config(_) => Self::Config(msg),
            PipelineError::Data(_) | PipelineError::Graph(_) => Self::Data(msg),
            PipelineError::Model(_) | PipelineError::Train(_) | PipelineError::Eval(_) => Self::Training(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<bikecast::eval::EvalError> for CliError {
    fn from(e: bikecast::eval::EvalError) -> Self {
        Self::Io(e.to_string())
    }
}
