use thiserror::Error;

/// Errors raised while configuring or feeding a simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("color {color} out of range for {num_colors} colors")]
    ColorOutOfRange { color: usize, num_colors: usize },

    #[error("trace line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    #[error("experiments are not comparable: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
