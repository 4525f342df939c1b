use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("radial solution is not integrable: {0}")]
    NonIntegrable(String),

    #[error("step size underflow at r = {r:.3e}")]
    Stiffness { r: f64 },

    #[error("tail data inconsistent (residual {residual:.3e} > {limit:.3e}); increase r_max")]
    InconsistentTail { residual: f64, limit: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no convergence after {iterations} iterations (trace: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("coincident points: Green's function is singular on the diagonal")]
    Singularity,

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("points merged during iteration (distance {distance:.3e})")]
    Merge { distance: f64 },

    #[error("wrong regime: {0}")]
    WrongRegime(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("amplitude overflow: {0}")]
    Amplitude(String),

    #[error("fold detected near lambda = {lambda:.6e}")]
    Fold { lambda: f64 },

    #[error("bubble disks overlap: {0}")]
    Separation(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Singular(_) => "singular",
            Error::NonIntegrable(_) => "non_integrable",
            Error::Stiffness { .. } => "stiffness",
            Error::InconsistentTail { .. } => "inconsistent_tail",
            Error::Precondition(_) => "precondition",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Singularity => "singularity",
            Error::Configuration(_) => "configuration",
            Error::Degenerate(_) => "degenerate",
            Error::Merge { .. } => "merge",
            Error::WrongRegime(_) => "wrong_regime",
            Error::Resolution(_) => "resolution",
            Error::Amplitude(_) => "amplitude",
            Error::Fold { .. } => "fold",
            Error::Separation(_) => "separation",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
