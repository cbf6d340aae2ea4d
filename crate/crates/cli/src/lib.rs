//! Spec files, reports, and subcommand bodies for `poisson-bounds`.

pub mod commands;
pub mod report;
pub mod spec;

pub use report::Report;
pub use spec::ChainSpec;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown distribution `{0}`")]
    UnknownDistribution(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] poisson_core::Error),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "ParseError",
            CliError::Missing(_) => "MissingField",
            CliError::UnknownState(_) => "UnknownState",
            CliError::UnknownDistribution(_) => "UnknownDistribution",
            CliError::Serialize(_) => "SerializeError",
            CliError::Io(_) => "IoError",
            CliError::Core(e) => e.code(),
        }
    }
}
