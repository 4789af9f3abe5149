//! Config-driven command layer over the `ctgibbs` library.
//!
//! One experiment is one JSON configuration and one output directory;
//! every artifact is a JSON document or a CSV table, and identical
//! configurations with identical seeds produce byte-identical files.

pub mod config;
pub mod run;

use config::Diagnostic;

/// What went wrong, split by exit status: configuration and usage
/// problems exit with status 2, numeric and I/O failures with status 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The configuration failed validation.
    #[error("invalid configuration:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    /// A flag or field was missing or unusable for the requested command.
    #[error("{field}: {message}")]
    Usage { field: String, message: String },
    /// A solver or estimator failed; the message carries its context.
    #[error(transparent)]
    Numeric(#[from] ctgibbs::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn usage(field: &str, message: impl Into<String>) -> Self {
        CliError::Usage {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) | CliError::Usage { .. } => 2,
            CliError::Numeric(_) | CliError::Io { .. } => 1,
        }
    }
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| {
            format!(
                "  {}: {}: {}",
                match d.severity {
                    config::Severity::Error => "error",
                    config::Severity::Warning => "warning",
                },
                d.field,
                d.message
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}
