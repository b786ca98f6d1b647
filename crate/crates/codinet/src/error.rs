use std::path::PathBuf;

/// Failure of a command, grouped by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
    pub const IO: i32 = 5;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Data(_) => exit::DATA,
            CliError::Divergence(_) => exit::DIVERGENCE,
            CliError::Io { .. } => exit::IO,
            CliError::Other(_) => exit::OTHER,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<codinet_core::Error> for CliError {
    fn from(e: codinet_core::Error) -> Self {
        use codinet_core::Error as E;
        match e {
            E::Shape(m) | E::Usage(m) => CliError::Config(m),
            E::Data(m) => CliError::Data(m),
            E::Divergence(m) => CliError::Divergence(m),
            E::Undefined(m) => CliError::Other(m),
        }
    }
}
