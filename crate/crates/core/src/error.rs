use thiserror::Error;

/// Errors raised by the toolkit. Diagnostics that are allowed to "fail"
/// (probes, agreement tables) report through their return values instead.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("infeasible law: {0}")]
    InfeasibleLaw(String),

    #[error("h' is undefined at s = {0} (requires s > 0)")]
    DomainError(f64),

    #[error("point ({x}, {y}) lies outside the mesh")]
    OutOfDomain { x: f64, y: f64 },

    #[error("element {element} has non-positive determinant {det}")]
    InfeasibleState { element: usize, det: f64 },

    #[error("initial field is infeasible: element {element} has determinant {det}")]
    InfeasibleStart { element: usize, det: f64 },

    #[error("line search stalled at iteration {iter} (step {step:e})")]
    LineSearchStalled { iter: usize, step: f64 },

    #[error("bound violated on element {element}: margin {margin:e}")]
    BoundViolated { element: usize, margin: f64 },

    #[error("curve passes through the center: min rho = {min_rho:e}")]
    OriginOnCurve { min_rho: f64 },

    #[error("angle unwrap ambiguous at sample {index}: jump {jump}")]
    UnwrapAmbiguous { index: usize, jump: f64 },

    #[error("only {available} radii available, need at least 3")]
    TooFewRadii { available: usize },

    #[error("growth hypothesis fails at r = {r:e} (slack {slack:e})")]
    HypothesisViolated { r: f64, slack: f64 },

    #[error("profile order violated at x1 = {x1}: phi_plus < phi_minus")]
    ProfileOrderViolated { x1: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
