use alloc::string::String;
use core::fmt;

use crate::expr::ParseError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    Parse(ParseError),
    /// A variable was referenced that no binding provides.
    Unbound(String),
    /// A name was bound twice in the same environment.
    DuplicateBinding(String),
    /// A parameter name collides with a state variable or a function name.
    InvalidName(String),
    DimensionMismatch {
        expected: usize,
        found: usize,
    },
    InvalidBounds,
    InvalidGrid(&'static str),
    InvalidArgument(&'static str),
    /// An operation that needs a non-empty set received an empty one.
    EmptySet,
    /// A box does not meet the grid it was projected onto.
    DisjointBox,
    /// A region is not contained in the region it is required to lie in.
    NotContained(&'static str),
    /// The motion (or the set iteration) left every bounded region.
    Unbounded {
        step: usize,
    },
    MissingLyapunov,
    NonFinite,
    /// A finite point set is not mapped into itself by `T`.
    NotInvariant,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse(e) => write!(f, "{e}"),
            Error::Unbound(name) => write!(f, "unbound variable `{name}`"),
            Error::DuplicateBinding(name) => write!(f, "`{name}` is bound more than once"),
            Error::InvalidName(name) => write!(f, "`{name}` cannot be used as a parameter name"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidBounds => f.write_str("box has a lower bound above its upper bound"),
            Error::InvalidGrid(why) => write!(f, "invalid grid: {why}"),
            Error::InvalidArgument(why) => write!(f, "invalid argument: {why}"),
            Error::EmptySet => f.write_str("set is empty"),
            Error::DisjointBox => f.write_str("box does not intersect the grid"),
            Error::NotContained(what) => write!(f, "{what}"),
            Error::Unbounded { step } => write!(f, "unbounded evolution detected at step {step}"),
            Error::MissingLyapunov => f.write_str("system has no Lyapunov function"),
            Error::NonFinite => f.write_str("non-finite value encountered"),
            Error::NotInvariant => f.write_str("point set is not invariant under the map"),
        }
    }
}

impl core::error::Error for Error {}

impl From<ParseError> for Error {
    fn from(e: ParseError) -> Self {
        Error::Parse(e)
    }
}
