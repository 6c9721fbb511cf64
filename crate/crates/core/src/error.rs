use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Observation or parameter outside the support of the density.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("filter diverged at t={t}")]
    FilterDivergence { t: usize },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("numeric degeneracy: {0}")]
    Degenerate(String),

    #[error("missing value for state variable `{variable}` at row {row}")]
    MissingState { variable: String, row: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by user input (bad config, data, files) as
    /// opposed to numerical failures inside the estimation machinery.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Data(_)
                | Error::Config(_)
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Csv(_)
                | Error::MissingState { .. }
                | Error::Domain(_)
        )
    }
}
