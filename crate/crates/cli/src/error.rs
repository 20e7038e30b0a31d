use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid config at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation { path: path.into(), message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self::Runtime(message.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Syntax { .. } | Self::Validation { .. } => 2,
            Self::Runtime(_) => 3,
        }
    }
}
