use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration or usage; CLI exit status 1.
    #[error("config error: {0}")]
    Config(String),
    /// Malformed or inconsistent input data; CLI exit status 2.
    #[error("data error: {0}")]
    Data(String),
    /// Failure inside a training loop; CLI exit status 3.
    #[error("training error: {0}")]
    Training(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) | Error::Io(_) => 2,
            Error::Training(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
