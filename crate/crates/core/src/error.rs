use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the estimation core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on an argument was violated.
    InvalidArgument(String),
    /// A coded or bounded value fell outside its legal range.
    OutOfRange {
        what: String,
        value: f64,
        range: String,
    },
    UnknownField(String),
    UnknownWave(i64),
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    NonFinite(&'static str),
    /// Design matrix is rank deficient; lists the collinear columns.
    RankDeficient { columns: Vec<String> },
    /// The estimand is not identified on this sample.
    Degenerate(String),
    Unbalanced(String),
    /// Failure while fitting the nuisance model of one cross-fitting fold.
    Fold { fold: usize, source: Box<Error> },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => f.write_str(msg),
            Error::OutOfRange { what, value, range } => {
                write!(f, "{what}: value {value} outside legal range {range}")
            }
            Error::UnknownField(name) => write!(f, "unknown field `{name}`"),
            Error::UnknownWave(w) => write!(f, "wave {w} not present in dataset"),
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected {expected}, found {found}"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::RankDeficient { columns } => {
                write!(f, "rank-deficient design; collinear columns: ")?;
                for (i, c) in columns.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_str(c)?;
                }
                Ok(())
            }
            Error::Degenerate(msg) => f.write_str(msg),
            Error::Unbalanced(msg) => write!(f, "unbalanced panel: {msg}"),
            Error::Fold { fold, source } => write!(f, "fold {fold}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Fold { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
