use std::fmt;

use optocool_core::Error as CoreError;

/// Exit status classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Failure {
    /// Bad arguments, unreadable or invalid scenario, unwritable output.
    Input,
    /// Diverged integration, failed fit or a failed shape assertion.
    Numerical,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    msg: String,
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self { kind: Failure::Input, msg: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self { kind: Failure::Numerical, msg: msg.into() }
    }

    pub fn message(&self) -> &str {
        &self.msg
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Failure::Input => 2,
            Failure::Numerical => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Diverged { .. } | CoreError::UnboundedGain => CliError::numerical(e.to_string()),
            CoreError::SeriesTooShort { .. } | CoreError::EmptyBand { .. } => CliError::numerical(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(format!("I/O: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::input(format!("JSON: {e}"))
    }
}
