use std::io;
use std::path::Path;

use thiserror::Error;

use glass_core::deployment::DeploymentError;
use glass_core::ledger::LedgerError;
use glass_core::portal::PortalError;

/// Process exit status for a successful run.
pub const EXIT_OK: u8 = 0;
/// An operation ran but did not succeed: a refused call, a failed
/// verification, a diverging scenario or a broken chain.
pub const EXIT_FAILED: u8 = 1;
/// Bad input or an unusable workspace.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:{line}:{column}: {message}")]
    Json {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("workspace {0} is locked by another writer (remove .lock if stale)")]
    Locked(String),
    #[error("{message}")]
    Failed { code: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed { .. } => EXIT_FAILED,
            _ => EXIT_USAGE,
        }
    }

    pub fn code(&self) -> &str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Json { .. } => "malformed-json",
            CliError::Io { .. } => "io",
            CliError::Locked(_) => "locked",
            CliError::Failed { code, .. } => code,
        }
    }

    pub fn failed(code: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Failed {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn json(path: &Path, e: &serde_json::Error) -> Self {
        let text = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        let message = text.strip_suffix(&suffix).unwrap_or(&text).to_string();
        CliError::Json {
            path: path.display().to_string(),
            line: e.line(),
            column: e.column(),
            message,
        }
    }
}

impl From<PortalError> for CliError {
    fn from(e: PortalError) -> Self {
        CliError::failed(e.code(), e.to_string())
    }
}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> Self {
        CliError::failed(e.code(), e.to_string())
    }
}

impl From<DeploymentError> for CliError {
    fn from(e: DeploymentError) -> Self {
        match e {
            DeploymentError::Ledger(l) => l.into(),
            DeploymentError::UnknownOrg(org) => CliError::Usage(format!("unknown org {org}")),
            other => CliError::failed("deployment", other.to_string()),
        }
    }
}
