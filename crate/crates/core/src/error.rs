use std::fmt;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Why a single capture line was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseFailure {
    MissingField(&'static str),
    MalformedTimestamp,
    MalformedFrame,
    InvalidId,
    IdOutOfRange(u32),
    OddLengthPayload,
    PayloadTooLong(usize),
    InvalidHex,
    InvalidDlc,
    DlcMismatch { dlc: usize, bytes: usize },
    Unsupported(&'static str),
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseFailure::MissingField(name) => write!(f, "missing {name} field"),
            ParseFailure::MalformedTimestamp => f.write_str("malformed timestamp"),
            ParseFailure::MalformedFrame => f.write_str("malformed frame, expected <ID>#<DATA>"),
            ParseFailure::InvalidId => f.write_str("unparsable arbitration id"),
            ParseFailure::IdOutOfRange(id) => {
                write!(
                    f,
                    "arbitration id 0x{id:X} exceeds the 29-bit extended range"
                )
            }
            ParseFailure::OddLengthPayload => f.write_str("odd-length hex payload"),
            ParseFailure::PayloadTooLong(n) => {
                write!(
                    f,
                    "payload of {n} bytes exceeds the 8-byte classic CAN limit"
                )
            }
            ParseFailure::InvalidHex => f.write_str("invalid hex digit in payload"),
            ParseFailure::InvalidDlc => f.write_str("dlc must be an integer in 0..=8"),
            ParseFailure::DlcMismatch { dlc, bytes } => {
                write!(
                    f,
                    "dlc/payload mismatch: dlc {dlc} but {bytes} payload bytes"
                )
            }
            ParseFailure::Unsupported(what) => write!(f, "{what} not supported"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {reason} in {line:?}")]
    Parse { line: String, reason: ParseFailure },

    #[error("line {line_no}: {source}")]
    AtLine {
        line_no: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Write(#[from] io::Error),

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("inconsistent id trace: {0}")]
    InconsistentTrace(String),

    #[error("no observations")]
    NoObservations,

    #[error("insufficient observations for transition analysis (need at least 2, got {0})")]
    InsufficientObservations(usize),

    #[error("invalid TANG: {0}")]
    InvalidTang(String),

    #[error("cluster [{lo}..{hi}] out of range for a {width}-bit payload")]
    ClusterOutOfRange { lo: usize, hi: usize, width: usize },

    #[error("cannot extract padding")]
    PaddingExtraction,

    #[error("empty series")]
    EmptySeries,

    #[error("invalid ground truth: {0}")]
    GroundTruth(String),

    #[error("bit width mismatch: tokenization has {tokenization} bits, ground truth has {truth}")]
    WidthMismatch { tokenization: usize, truth: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn parse(line: &str, reason: ParseFailure) -> Self {
        Error::Parse {
            line: line.to_owned(),
            reason,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error reports a broken internal guarantee rather than bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }
}
