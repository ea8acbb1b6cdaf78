use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("plot error: {0}")]
    Plot(String),

    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Data(#[from] sea_core::Error),

    #[error(transparent)]
    Model(#[from] sea_snn::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// 1 for problems with what the user asked for, 2 for failures while
    /// doing it.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Plot(_) => 1,
            Error::Data(sea_core::Error::InvalidArgument(_)) => 1,
            Error::Model(sea_snn::Error::InvalidArgument(_)) => 1,
            _ => 2,
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<plotters::drawing::DrawingAreaErrorKind<std::io::Error>> for Error {
    fn from(e: plotters::drawing::DrawingAreaErrorKind<std::io::Error>) -> Self {
        Error::Runtime(format!("drawing failed: {e}"))
    }
}
