use thiserror::Error;

use pathdev::Error as CoreError;

/// Exit statuses of the `pathdev` binary.
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_DOMAIN: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },

    #[error("config parse error at {0}")]
    Parse(String),

    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },

    #[error("grid point {index} ({name} = {value}): {source}")]
    GridPoint {
        index: usize,
        name: String,
        value: f64,
        source: CoreError,
    },

    #[error("{0}")]
    Numerical(CoreError),

    #[error("cannot write `{path}`: {message}")]
    Write { path: String, message: String },
}

impl CliError {
    pub fn invalid(key: &str, message: impl Into<String>) -> Self {
        CliError::Invalid {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// Wraps a library error raised while building scenario objects; parse and
    /// configuration errors become validation errors naming `key`.
    pub fn from_build(key: &str, e: CoreError) -> Self {
        match e {
            CoreError::Parse(_) | CoreError::Configuration(_) | CoreError::Dimension { .. } => {
                CliError::invalid(key, e.to_string())
            }
            other => CliError::Numerical(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse(_) | CliError::Invalid { .. } => EXIT_CONFIG,
            CliError::GridPoint { source, .. } | CliError::Numerical(source) => {
                if is_domain_error(source) {
                    EXIT_DOMAIN
                } else {
                    EXIT_NUMERICAL
                }
            }
            CliError::Write { .. } => EXIT_IO,
        }
    }
}

fn is_domain_error(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::OutsideDomain { .. } | CoreError::Stencil { .. } | CoreError::LeftDomain { .. } | CoreError::Truncated { .. }
    )
}
