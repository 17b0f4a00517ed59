//! Command implementations behind the `hangul-ocr` binary.
//!
//! Each command is an ordinary function so tests can drive the full
//! pipeline in-process; `main` only parses flags, prints, and maps errors
//! to exit codes (1 usage/config, 2 data, 3 numerical).

pub mod commands;
pub mod runlog;
pub mod train;

use hangul_ocr_core::corpus::CorpusError;
use hangul_ocr_core::kv::KvError;
use hangul_ocr_core::metrics::MetricsError;
use hangul_ocr_core::model::ModelError;
use hangul_ocr_core::pgm::PgmError;
use hangul_ocr_core::tensor::CheckpointError;

/// Command failure, carrying the process exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config files — exit 1.
    Usage(String),
    /// Missing or corrupt data — exit 2.
    Data(String),
    /// Numerical failure (diverged loss and friends) — exit 3.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}

impl From<KvError> for CliError {
    fn from(e: KvError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InfeasibleSpec(_) | CorpusError::Kv(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::BadConfig(_) => CliError::Usage(e.to_string()),
            ModelError::Tensor(_) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PgmError> for CliError {
    fn from(e: PgmError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
