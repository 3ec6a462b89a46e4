//! Experiment recipes and artifact handling behind the `cellfree-se` binary.

pub mod experiments;
pub mod manifest;
pub mod plot;
pub mod settings;

use std::path::PathBuf;

use cellfree_core::Error;

pub use experiments::{run_experiment, Experiment, RunOptions};
pub use settings::Settings;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The configuration file or an override is invalid.
    #[error("{origin}: {source}")]
    Config { origin: String, source: Error },

    /// A numerical routine failed while an experiment was running.
    #[error("{experiment}/{op}: {source}")]
    Runtime { experiment: String, op: String, source: Error },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Runtime { .. } => 3,
            CliError::Io { .. } => 1,
        }
    }

    pub fn config(origin: impl Into<String>, source: Error) -> Self {
        CliError::Config { origin: origin.into(), source }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

/// Attaches the experiment and operation to a library error.
pub trait Context<T> {
    fn context(self, experiment: Experiment, op: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for cellfree_core::Result<T> {
    fn context(self, experiment: Experiment, op: &str) -> Result<T, CliError> {
        self.map_err(|source| match source {
            // A derived configuration that fails validation still traces back
            // to the user's settings.
            Error::Config(_) | Error::ConfigSyntax { .. } => {
                CliError::Config { origin: format!("{experiment}/{op}"), source }
            }
            source => CliError::Runtime { experiment: experiment.to_string(), op: op.to_string(), source },
        })
    }
}
