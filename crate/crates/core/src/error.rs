//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Configuration could not be read or parsed.
    #[error("configuration error: {0}")]
    Config(String),

    /// A boundary-data expression failed to parse or evaluate.
    #[error("expression error: {0}")]
    Expression(String),

    /// Boundary data violate the corner compatibility conditions.
    #[error("compatibility violated: {0}")]
    Compatibility(String),

    /// A linear system is singular or ill-posed.
    #[error("singular system: {0}")]
    Singular(String),

    /// An iterative method failed to converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// The transport velocity reverses direction, so x = 0 is not the only inflow boundary.
    #[error("flow reversal: {0}")]
    FlowReversal(String),

    /// The reconstructed density left the positive range.
    #[error("density not positive: {0}")]
    Positivity(String),

    /// The outer iteration stopped contracting.
    #[error("non-contraction: {0}")]
    NonContraction(String),

    /// Iterates left the admissible bound.
    #[error("divergence: {0}")]
    Divergence(String),

    /// A residual check exceeded its tolerance.
    #[error("residual check failed: {0}")]
    Residual(String),

    /// Too few points for a rate fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A failure injected on purpose (isolation testing).
    #[error("injected failure: {0}")]
    Injected(String),

    /// I/O failure with path context.
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Wrap an I/O error with the path it concerns.
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
