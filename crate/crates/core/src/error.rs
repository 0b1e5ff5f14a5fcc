use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected \"QTNS\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported tensor file version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated tensor file: {0}")]
    Truncated(String),

    #[error("malformed tensor file: {0}")]
    Malformed(String),

    #[error("config line {line}: key `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("unknown config key `{key}` on line {line}")]
    UnknownKey { line: usize, key: String },

    #[error("missing required config key `{0}`")]
    MissingKey(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("non-finite loss at iteration {iteration}{}", dump_note(.dump))]
    NumericAbort {
        iteration: usize,
        /// Where the offending state was written, if anywhere.
        dump: Option<PathBuf>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::BadMagic(_)
            | Error::UnsupportedVersion(_)
            | Error::Truncated(_)
            | Error::Malformed(_) => 1,
            Error::NumericAbort { .. } => 3,
            _ => 2,
        }
    }
}

fn dump_note(dump: &Option<PathBuf>) -> String {
    match dump {
        Some(p) => format!("; state dumped to {}", p.display()),
        None => String::new(),
    }
}
