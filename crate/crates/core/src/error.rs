use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("gain is not stabilizing (discounted spectral radius {radius:.6})")]
    Unstable { radius: f64 },

    #[error("iterate {iteration} left the stabilizing set (discounted spectral radius {radius:.6})")]
    UnstableIterate { iteration: usize, radius: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("seed set does not reproduce its target Gram matrix (mismatch {mismatch:.3e})")]
    Consistency { mismatch: f64 },

    #[error(
        "insufficient excitation: aggregate has min eigenvalue {min_eigenvalue:.3e}; increase seeds or horizon"
    )]
    Excitation { min_eigenvalue: f64 },

    #[error("degenerate linear system: {0}")]
    Degenerate(String),

    #[error("cannot recover gain: G is singular (condition number {condition:.3e})")]
    Recovery { condition: f64 },
}

impl Error {
    pub(crate) fn dim(what: impl Into<String>, expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::Dimension {
            what: what.into(),
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        }
    }
}
