use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// [`Error::is_validation`] separates bad input data from bad arguments so
/// that front ends can map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: format error: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: payload size mismatch: header implies {expected} bytes, found {found}")]
    PayloadSize {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}:{line}: {msg}")]
    Row {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}: archive contains no feature files")]
    EmptyArchive(PathBuf),

    #[error("unknown utterance `{0}`")]
    Lookup(String),

    #[error("segment {utt} [{onset}, {offset}) resolves to no frames (utterance has {nframes})")]
    EmptySegment {
        utt: String,
        onset: f64,
        offset: f64,
        nframes: usize,
    },

    #[error("phone `{phone}` mapped twice in AF table `{table}`")]
    DuplicatePhone { table: String, phone: String },

    #[error("overlapping spans in utterance `{utt}`: [{a_onset}, {a_offset}) and [{b_onset}, {b_offset})")]
    Overlap {
        utt: String,
        a_onset: f64,
        a_offset: f64,
        b_onset: f64,
        b_offset: f64,
    },

    #[error("phones missing from AF table `{table}`: {}", phones.join(", "))]
    UnmappedPhones { table: String, phones: Vec<String> },

    #[error("no valid task cells ({skipped} skipped for size)")]
    EmptyTask { skipped: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("utterance `{utt}` has {nframes} frames, need more than prediction step {step}")]
    InsufficientLength {
        utt: String,
        nframes: usize,
        step: usize,
    },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("key sets differ: only in baseline [{}], only in improved [{}]", only_left.join(", "), only_right.join(", "))]
    KeyMismatch {
        only_left: Vec<String>,
        only_right: Vec<String>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn row(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Row {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for errors caused by malformed or inconsistent input data.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Argument(_) | Error::EmptyTask { .. } | Error::Diverged { .. }
        )
    }
}
