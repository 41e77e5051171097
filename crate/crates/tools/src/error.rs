use std::path::PathBuf;

/// Anything wrong with the data a command was given: unreadable files,
/// malformed records, or inputs the kernels reject.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {kind} at byte {offset}: {msg}")]
    Malformed {
        kind: &'static str,
        offset: usize,
        msg: String,
    },
    #[error("{kind} line {line}: {msg}")]
    Parse {
        kind: &'static str,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Core(#[from] carlo_core::Error),
    #[error("{0}")]
    Invalid(String),
}

pub type DataResult<T> = Result<T, DataError>;

impl DataError {
    pub fn parse(kind: &'static str, line: usize, msg: impl Into<String>) -> Self {
        DataError::Parse {
            kind,
            line,
            msg: msg.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        DataError::Invalid(msg.into())
    }
}

pub(crate) fn read_bytes(path: &std::path::Path) -> DataResult<Vec<u8>> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_text(path: &std::path::Path) -> DataResult<String> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_bytes(path: &std::path::Path, bytes: &[u8]) -> DataResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}
