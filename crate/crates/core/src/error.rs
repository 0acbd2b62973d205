use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the solvers can report.
///
/// Variants carry enough context to print a useful message; the CLI maps
/// them to exit code 3 (config errors map to 2).
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("dimension {0} is not supported (expected 1, 2 or 3)")]
    InvalidDimension(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("particle number must be at least 1, got {0}")]
    InvalidN(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("kernel width {width} is below the grid spacing {spacing}")]
    KernelUnresolved { width: f64, spacing: f64 },
    #[error("hard core of radius {radius} is not resolved by mesh spacing {spacing}")]
    UnresolvedCore { radius: f64, spacing: f64 },
    #[error("u' vanishes at r = {r}; zero-energy shooting breaks down")]
    NodeCrossing { r: f64 },
    #[error("unsupported potential: {0}")]
    UnsupportedPotential(String),
    #[error("integral diverges: {0}")]
    DivergentIntegral(String),
    #[error("field is not L2-normalized (norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("field is nonzero where the trap is infinite")]
    InfiniteOverlap,
    #[error("scattering formula is degenerate: {0}")]
    DegenerateFormula(String),
    #[error("trap is not confining: {0}")]
    NonNormalizable(String),
    #[error("energy kept increasing after {halvings} step halvings")]
    StepTooLarge { halvings: usize },
    #[error("energy increased from {before} to {after}")]
    EnergyIncrease { before: f64, after: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("not a probability density: {0}")]
    NotADensity(String),
    #[error("drift singular near x = {position:?} (guide value {value:e})")]
    DriftSingularity { position: Vec<f64>, value: f64 },
    #[error("effective sample size {ess:.1} is below {threshold:.1}")]
    DegenerateWeights { ess: f64, threshold: f64 },
    #[error("kernel width {width} is below twice the Brownian step scale {step_scale}")]
    KernelUnresolvedAtStepScale { width: f64, step_scale: f64 },
    #[error("mollifier radius {epsilon} is below twice the Brownian step scale {step_scale}")]
    EpsilonUnderresolved { epsilon: f64, step_scale: f64 },
    #[error("extrapolation needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("guide orbitals are required for the tilted sampler")]
    MissingGuide,
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// Short stable identifier, printed by the CLI and mapped to FFI codes.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_) => "InvalidDimension",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidN(_) => "InvalidN",
            Error::GridMismatch => "GridMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::KernelUnresolved { .. } => "KernelUnresolved",
            Error::UnresolvedCore { .. } => "UnresolvedCore",
            Error::NodeCrossing { .. } => "NodeCrossing",
            Error::UnsupportedPotential(_) => "UnsupportedPotential",
            Error::DivergentIntegral(_) => "DivergentIntegral",
            Error::NotNormalized { .. } => "NotNormalized",
            Error::InfiniteOverlap => "InfiniteOverlap",
            Error::DegenerateFormula(_) => "DegenerateFormula",
            Error::NonNormalizable(_) => "NonNormalizable",
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::EnergyIncrease { .. } => "EnergyIncrease",
            Error::MaxIterExceeded { .. } => "MaxIterExceeded",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotADensity(_) => "NotADensity",
            Error::DriftSingularity { .. } => "DriftSingularity",
            Error::DegenerateWeights { .. } => "DegenerateWeights",
            Error::KernelUnresolvedAtStepScale { .. } => "KernelUnresolvedAtStepScale",
            Error::EpsilonUnderresolved { .. } => "EpsilonUnderresolved",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::MissingGuide => "MissingGuide",
            Error::Config(e) => e.name(),
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}
