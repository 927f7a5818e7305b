use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] garment_gan_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}, row `{row}`: {detail}")]
    Manifest { path: PathBuf, row: String, detail: String },
    #[error("corrupt checkpoint {path}: array `{array}`: {detail}")]
    CorruptCheckpoint {
        path: PathBuf,
        array: String,
        detail: String,
    },
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },
    #[error("invalid image: {0}")]
    Image(String),
    #[error("invalid data source `{0}`")]
    DataSource(String),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
