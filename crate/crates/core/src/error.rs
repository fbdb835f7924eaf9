use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel of X0 is trivial")]
    DegenerateKernel,
    #[error("kernel of X0 fills the whole space")]
    FullKernel,
    #[error("no spectral gap above zero (d0 = {d0:e})")]
    NoSpectralGap { d0: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("linear solve failed for {what} (residual {residual:e})")]
    SolveFailure { what: String, residual: f64 },
    #[error("germ is degenerate (min eigenvalue {min_eig:e})")]
    DegenerateGerm { min_eig: f64 },
    #[error("branch tracking lost at t = {t:e} (overlap {overlap:.3})")]
    BranchTrackingFailure { t: f64, overlap: f64 },
    #[error("probe inapplicable: {0} vanishes")]
    CoefficientZero(String),
    #[error("identity {identity} violated (residual {residual:e})")]
    IdentityViolation { identity: String, residual: f64 },
    #[error("lattice basis is singular")]
    SingularBasis,
    #[error("symbol loses rank (alpha0 = {alpha0:e})")]
    RankDeficientSymbol { alpha0: f64 },
    #[error("field is not invertible at a grid point")]
    SingularPointValue,
    #[error("right-hand side of the second cell problem has nonzero mean ({residual:e})")]
    SolvabilityViolation { residual: f64 },
    #[error("Voigt-Reuss ordering violated (min eigenvalue {min_eig:e})")]
    VoigtReussViolation { min_eig: f64 },
    #[error("cluster structure could not be resolved: {0}")]
    ClusterResolutionFailure(String),
    #[error("config error at {path}: {msg}")]
    Config { path: String, msg: String },
    #[error("stage {stage}: {source}")]
    Stage { stage: String, source: Box<Error> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { path: path.into(), msg: msg.into() }
    }
}
