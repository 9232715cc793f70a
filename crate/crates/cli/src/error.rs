use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse configuration: {0}")]
    Parse(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("numeric failure at {point}: {source}")]
    Numeric {
        point: String,
        #[source]
        source: wpc_core::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn numeric(point: impl Into<String>, source: wpc_core::Error) -> Self {
        CliError::Numeric {
            point: point.into(),
            source,
        }
    }

    /// Process exit code for this failure when nothing was written.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Validation(_) => 1,
            CliError::Numeric { .. } | CliError::Io { .. } => 2,
        }
    }
}
