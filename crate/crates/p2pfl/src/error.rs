//! Crate-wide error type.
//!
//! The CLI maps error categories onto distinct exit codes: configuration
//! problems exit 2, dataset/table format problems exit 3, everything that
//! goes wrong during a run exits 4.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("non-finite values: {0}")]
    NonFinite(String),

    /// The connectivity graph has no edges at all, so nobody can aggregate.
    #[error("no aggregator candidate: the graph has no edges")]
    NoCandidate,

    /// Every connected node is excluded by the rotation window.
    #[error("aggregator election exhausted: all connected nodes served within the rotation window")]
    ElectionExhausted,

    #[error("node {0} has an empty training shard")]
    EmptyShard(usize),

    #[error("empty test set")]
    EmptyTestSet,

    #[error("round {round} aborted: {reason}")]
    RoundAborted { round: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    /// Malformed dataset bytes; `offset` is the byte position of the defect.
    #[error("{path}: byte {offset}: {msg}")]
    Format { path: String, offset: u64, msg: String },

    #[error("cannot read dataset file {path}: {source}")]
    DatasetIo {
        path: String,
        source: std::io::Error,
    },

    /// Malformed metrics CSV; `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Table {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    /// Exit code the CLI uses for this error: config 2, data 3, runtime 4.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Format { .. } | Error::DatasetIo { .. } | Error::Table { .. } => 3,
            _ => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(
            Error::Format {
                path: "f".into(),
                offset: 0,
                msg: "m".into()
            }
            .exit_code(),
            3
        );
        assert_eq!(
            Error::Table {
                path: "f".into(),
                line: 1,
                msg: "m".into()
            }
            .exit_code(),
            3
        );
        assert_eq!(Error::NoCandidate.exit_code(), 4);
        assert_eq!(Error::InvalidArgument("x".into()).exit_code(), 4);
    }

    #[test]
    fn format_error_names_file_and_offset() {
        let e = Error::Format {
            path: "train-images-idx3-ubyte".into(),
            offset: 4,
            msg: "bad magic".into(),
        };
        let s = e.to_string();
        assert!(s.contains("train-images-idx3-ubyte"));
        assert!(s.contains("byte 4"));
    }
}
