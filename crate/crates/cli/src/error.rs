use std::fmt;
use std::path::Path;

use echomeasure_core::attention::AttentionError;
use echomeasure_core::eval::EvalError;
use echomeasure_core::{DatasetError, MeasureError, TensorError};

/// Failure reported as `error[<module>]: <cause>`.
#[derive(Debug)]
pub struct CliError {
    pub module: &'static str,
    pub message: String,
    pub usage: bool,
}

impl CliError {
    pub fn new(module: &'static str, message: impl Into<String>) -> Self {
        Self {
            module,
            message: message.into(),
            usage: false,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            module: "cli",
            message: message.into(),
            usage: true,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::new("cli", format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        if self.usage {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.module, self.message)
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::new("dataset-io", e.to_string())
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        Self::new("amem-measure", e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        Self::new("eval-harness", e.to_string())
    }
}

impl From<AttentionError> for CliError {
    fn from(e: AttentionError) -> Self {
        Self::new("panel-attention", e.to_string())
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        Self::new("tensor-core", e.to_string())
    }
}
