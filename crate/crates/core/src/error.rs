use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point at distance {distance:.3e} lies outside the tubular neighbourhood of radius {reach:.3e}")]
    OutsideTubularNeighborhood { distance: f64, reach: f64 },
    #[error("point is not on the target manifold (defect {defect:.3e})")]
    NotOnManifold { defect: f64 },
    #[error("vector is not tangent (normal component {normal:.3e})")]
    NotTangent { normal: f64 },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("integration region contains no grid nodes")]
    EmptyRegion,
    #[error("sample point outside grid support: {0}")]
    OutOfSupport(String),
    #[error("radial split needs at least {needed} shells, got {got}")]
    TooFewShells { needed: usize, got: usize },
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("field is not manifold valued (max distance {distance:.3e})")]
    NotManifoldValued { distance: f64 },
    #[error("flow step diverged: energy {before:.6e} -> {after:.6e}")]
    StepDiverged { before: f64, after: f64 },
    #[error("flow history is empty")]
    EmptyHistory,
    #[error("sample is empty")]
    EmptySample,
    #[error("invalid Lorentz exponents p = {p}, q = {q}")]
    BadExponents { p: f64, q: f64 },
    #[error("samples are not defined on the same cells")]
    CellMismatch,
    #[error("need at least {needed} dyadic annuli, got {got}")]
    TooFewAnnuli { needed: usize, got: usize },
    #[error("harmonic degree {0} exceeds the supported maximum of 12")]
    DegreeTooHigh(usize),
    #[error("annulus ratio {ratio:.3} too small for a stable fit (needs >= 1.5)")]
    IllConditionedFit { ratio: f64 },
    #[error("inner radius {0} must lie in (0, 1/8)")]
    BadRadius(f64),
    #[error("boundary sphere mean {mean:.3e} does not vanish")]
    MeanNotZero { mean: f64 },
    #[error("scale floor {rho_min:.3e} is below 3h = {floor:.3e}")]
    ScaleFloorTooSmall { rho_min: f64, floor: f64 },
    #[error("bisection failed: {0}")]
    BisectionFailed(String),
    #[error("neck not resolvable: {0}")]
    NeckUnresolvable(String),
    #[error("bubbles overlap: {0}")]
    OverlappingBubbles(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("input missing or malformed: {0}")]
    InputMissing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigInvalid(_) | Error::InputMissing(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
