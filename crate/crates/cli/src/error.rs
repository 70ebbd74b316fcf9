use std::path::Path;

use pba_core::association::AssociationError;
use pba_core::corpus::CorpusError;
use pba_core::generation::{CollectError, InvalidSpec, ProviderError};
use pba_core::report::ReportError;
use pba_core::robustness::RobustnessError;
use pba_core::taxonomy::TaxonomyError;
use thiserror::Error;

/// A failed command, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid configuration.
    #[error("{0}")]
    Usage(String),
    /// Inputs that cannot be parsed, mapped or scored.
    #[error("{0}")]
    Data(String),
    /// Generation could not reach its target.
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Usage(format!("{}: {e}", path.display()))
    }
}

impl From<TaxonomyError> for CliError {
    fn from(e: TaxonomyError) -> Self {
        match e {
            TaxonomyError::Io(_) => CliError::Usage(format!("taxonomy: {e}")),
            TaxonomyError::UnknownCategory { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(format!("taxonomy: {e}")),
        }
    }
}

impl From<AssociationError> for CliError {
    fn from(e: AssociationError) -> Self {
        match e {
            AssociationError::InvalidDimension(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::UnknownModel(_) | ReportError::UnknownDimension(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<RobustnessError> for CliError {
    fn from(e: RobustnessError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<InvalidSpec> for CliError {
    fn from(e: InvalidSpec) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::MissingCredentials(_) => CliError::Usage(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<CollectError> for CliError {
    fn from(e: CollectError) -> Self {
        match e {
            CollectError::Provider { .. } | CollectError::BudgetExhausted { .. } => {
                CliError::Provider(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
