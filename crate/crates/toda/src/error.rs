use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TodaError {
    #[error("kappa must be positive and finite, got {0}")]
    InvalidKappa(f64),
    #[error("alpha = {alpha} is outside (0, 2*kappa) for kappa = {kappa}")]
    AlphaOutOfRange { alpha: f64, kappa: f64 },
    #[error("invalid lattice window [{n_min}, {n_max}]")]
    InvalidWindow { n_min: i64, n_max: i64 },
    #[error("sequences live on different windows")]
    WindowMismatch,
    #[error("spectral parameter must be nonzero")]
    ZeroBeta,
    #[error("beta = {beta} lies within {distance:e} of a pole of the dual Jost function")]
    NearPole { beta: Complex64, distance: f64 },
    #[error("eta = 0 requires the limit construction (eta_zero_modes)")]
    EtaZero,
    #[error("|eta| = {eta} is not below the threshold eta* = {eta_star}")]
    AboveThreshold { eta: f64, eta_star: f64 },
    #[error("inverse shift operators need alpha > 0, got {0}")]
    NonPositiveAlpha(f64),
    #[error("orthogonality defect {defect:e} exceeds tolerance {tol:e}")]
    OrthogonalityDefect { defect: f64, tol: f64 },
    #[error("degenerate Gram matrix, |det| = {0:e}")]
    DegenerateGram(f64),
    #[error("|mu| = {0:e} is too close to the branch point")]
    NearBranchPoint(f64),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("time step {dt} violates the stability bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("integration unstable at t = {t}: norm grew by more than e^10")]
    Unstable { t: f64 },
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("operation expects representation {expected}, got {found}")]
    Representation { expected: &'static str, found: &'static str },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("site {0} lies outside the window")]
    SiteOutsideWindow(i64),
}

pub type Result<T> = std::result::Result<T, TodaError>;
