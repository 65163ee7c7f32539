use thiserror::Error;

use crate::continuation::SteadyPath;
use crate::map::OrbitSummary;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `I - ∂x f` is singular to working precision at an iterate. Usually a
    /// fold or branch point of the steady-state path.
    #[error("near-singular Jacobian of f(x) - x at x = {x:?} (smallest singular value {sigma_min:e})")]
    NearSingularJacobian { x: Vec<f64>, sigma_min: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("non-finite derivative entry at x = {x:?}")]
    NonFiniteDerivative { x: Vec<f64> },

    #[error("invalid polyline: {0}")]
    InvalidPolyline(String),

    #[error("seed is not a valid start of the path: {0}")]
    InvalidSeed(String),

    /// Step control fell below `min_step` while the corrector kept failing.
    /// The samples accepted so far are returned in `partial`.
    #[error("path lost at t = {t} (step {step:e}): {cause}")]
    PathLost {
        t: f64,
        step: f64,
        cause: String,
        partial: Box<SteadyPath>,
    },

    #[error("corrector jumped {distance:e} away from the interpolated path at t = {t}")]
    BranchJump { t: f64, distance: f64 },

    #[error("stability boundary refinement failed in t-bracket [{lo}, {hi}]: {source}")]
    BoundaryRefinementFailed {
        lo: f64,
        hi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("target steady state is not asymptotically stable (spectral radius {spectral_radius})")]
    TargetNotStable { spectral_radius: f64 },

    #[error("could not certify a contraction ball around the target (||J(x*)|| = {norm})")]
    ContractionUncertified { norm: f64 },

    #[error("Lyapunov series did not converge at {which}")]
    NotConverged { which: &'static str },

    #[error("requested path point t = {t} is not asymptotically stable")]
    UnstableOnPath { t: f64 },

    #[error("no successful maneuver advances at least min_step from t = {t}")]
    NoProgress { t: f64, evidence: OrbitSummary },

    #[error("plan exceeded the leg budget of {max_legs}")]
    LegBudgetExceeded { max_legs: usize },
}
