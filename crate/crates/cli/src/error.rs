use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] seqtransport::Error),
}

impl CliError {
    /// 1 for usage and input errors, 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        use seqtransport::Error as E;
        match self {
            CliError::Core(
                E::Numeric(_)
                | E::DegenerateFit(_)
                | E::DegenerateWeights
                | E::Encoding { .. }
                | E::Schedule(_),
            ) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn read(path: &str) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

pub fn write(path: &str, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}
