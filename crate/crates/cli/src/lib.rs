//! Library surface of the `qns` command-line tool, exposed so integration
//! tests can drive the same code paths as the binary.

pub mod commands;
pub mod config;
pub mod datagen;
pub mod output;
pub mod simulate;
pub mod sweep;

/// CLI-level failures with their process exit codes: 2 configuration,
/// 3 all fits failed, 4 I/O.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    AllFitsFailed,
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::AllFitsFailed => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::AllFitsFailed => write!(f, "every frequency fit failed"),
            CliError::Io(msg) => write!(f, "I/O error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<qns_core::Error> for CliError {
    fn from(e: qns_core::Error) -> Self {
        match &e {
            qns_core::Error::Io(_) | qns_core::Error::Csv(_) | qns_core::Error::Json(_) => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}
