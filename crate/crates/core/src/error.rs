use thiserror::Error;

/// Errors raised by the torus kernels, solvers and configuration layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid size {0} rejected: need a power of two >= 16")]
    InvalidGrid(usize),

    #[error("non-finite value at node ({ix}, {iy})")]
    NonFinite { ix: usize, iy: usize },

    #[error("fields live on different grids ({left} vs {right})")]
    GridMismatch { left: usize, right: usize },

    #[error("Poisson right-hand side is not solvable on the torus: mean = {mean:e}")]
    Solvability { mean: f64 },

    #[error("degenerate mass: {which} vanished")]
    DegenerateMass { which: &'static str },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("inner linear solve stalled: relative residual {residual:e} after {iterations} iterations")]
    InnerSolve { residual: f64, iterations: usize },

    #[error("time step underflow at t = {t}: dt = {dt:e} ({diagnosis})")]
    StepUnderflow { t: f64, dt: f64, diagnosis: String },

    #[error("mass bound violated at t = {t}: {which} = {value:e}")]
    MassBound { t: f64, which: &'static str, value: f64 },

    #[error("mean-field solve at ({px}, {py}) did not converge: residual {residual:e} after {iterations} iterations")]
    MfeNonConvergence {
        px: f64,
        py: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("resolution too coarse: ring fit residual {residual:e} exceeds {threshold:e}")]
    ResolutionTooCoarse { residual: f64, threshold: f64 },

    #[error("ill-conditioned fit: condition number {condition:e}")]
    IllConditionedFit { condition: f64 },

    #[error("barrier scan failed at every lattice point")]
    ScanFailed,

    #[error("line {line}: key `{key}`: {reason}")]
    Config {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::NonFinite { .. }
                | Error::GridMismatch { .. }
                | Error::Solvability { .. }
                | Error::DegenerateMass { .. }
                | Error::InvalidParameter { .. }
                | Error::Config { .. }
        )
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
