use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("window dimensions must be positive, got {w}x{h}")]
    EmptyWindow { w: usize, h: usize },

    #[error("point ({x}, {y}) lies outside the {w}x{h} window")]
    OutOfWindow { x: usize, y: usize, w: usize, h: usize },

    #[error("window mismatch: {0}")]
    WindowMismatch(String),

    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("enumeration guard exceeded: {what} needs {needed}, guard is {guard}")]
    GuardExceeded { what: &'static str, needed: u128, guard: u128 },

    #[error("sumset would be clipped by the window: {0}")]
    Clipping(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("internal contract failure: {0}")]
    Contract(String),

    #[error("not an upper set: {0}")]
    NotUpperSet(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
