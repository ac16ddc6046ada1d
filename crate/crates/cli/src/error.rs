use fastquery::finetune::FinetuneError;
use fastquery::io::IoError;
use fastquery::protocol::ProtocolError;
use fastquery::quantizer::QuantError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unsupported scale: {0}")]
    UnsupportedScale(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Config(_) => 3,
            CliError::UnsupportedScale(_) => 4,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<QuantError> for CliError {
    fn from(e: QuantError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<FinetuneError> for CliError {
    fn from(e: FinetuneError) -> Self {
        match e {
            FinetuneError::Diverged { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::UnsupportedScale(s) => CliError::UnsupportedScale(s),
            ProtocolError::Config(_)
            | ProtocolError::Quant(_)
            | ProtocolError::Slot(_)
            | ProtocolError::Shape(_)
            | ProtocolError::TokenRange { .. }
            | ProtocolError::AlignWidth { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
