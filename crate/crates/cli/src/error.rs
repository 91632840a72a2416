use std::fmt;

use synprobe::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Every problem found in the configuration.
    Config(Vec<String>),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(problems) => {
                write!(f, "configuration error ({} problem", problems.len())?;
                if problems.len() != 1 {
                    f.write_str("s")?;
                }
                f.write_str("):")?;
                for p in problems {
                    write!(f, "\n  {p}")?;
                }
                Ok(())
            }
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) => CliError::Config(vec![m]),
            Error::Numeric(_) | Error::RankDeficient { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
