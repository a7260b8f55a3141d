use std::fmt;

/// Usage errors exit with status 2, runtime errors with status 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<kmerspace_core::Error> for CliError {
    fn from(e: kmerspace_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<kmerspace_autodiff::AutodiffError> for CliError {
    fn from(e: kmerspace_autodiff::AutodiffError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

pub fn runtime<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Runtime(msg.into()))
}
