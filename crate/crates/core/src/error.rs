use std::fmt;
use std::path::PathBuf;

/// Row-major shape of a tape value. Vectors are `n x 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const SCALAR: Shape = Shape { rows: 1, cols: 1 };

    pub fn vector(n: usize) -> Self {
        Shape { rows: n, cols: 1 }
    }

    pub fn matrix(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_vector(&self) -> bool {
        self.cols == 1
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in `{op}`: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },
    #[error("backward root must be a scalar, got {0}")]
    NonScalarRoot(Shape),
    #[error("tape already consumed by a backward pass; clear it and re-run forward")]
    TapeConsumed,
    #[error("index {index} out of range for length {len} in `{op}`")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("finite-difference evaluation non-finite at coordinate {coordinate}")]
    NonFiniteEvaluation { coordinate: usize },
    #[error("empty input to `{0}`")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("non-finite loss at epoch {epoch}, step {step} (seed {seed})")]
    Divergence { epoch: usize, step: usize, seed: u64 },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: std::io::Error },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, reason: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            reason,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
