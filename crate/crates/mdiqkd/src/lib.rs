//! File formats, parallel execution and the `qkd` command-line tool built on
//! [`mdiqkd_core`].

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod formats;
pub mod parallel;

/// Failures surfaced by the tool, each mapped to a process exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError::Validation(vec![message.into()])
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Validation(m) => serde_json::json!({"error": "validation", "messages": m}),
            CliError::Numeric(m) => serde_json::json!({"error": "numeric", "messages": [m]}),
            CliError::Io(m) => serde_json::json!({"error": "io", "messages": [m]}),
        }
    }
}

impl From<mdiqkd_core::Error> for CliError {
    fn from(e: mdiqkd_core::Error) -> Self {
        match e {
            mdiqkd_core::Error::Numeric(_) => CliError::Numeric(e.to_string()),
            mdiqkd_core::Error::InvalidSpec(messages) => CliError::Validation(messages),
            other => CliError::Validation(vec![other.to_string()]),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
