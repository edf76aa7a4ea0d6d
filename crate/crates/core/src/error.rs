use thiserror::Error;

/// Errors raised by the orbit pipeline.
///
/// Hypothesis failures are not errors: they are reported as data in
/// [`crate::potential::HypothesisReport`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("potential evaluated at the singularity (|x| = 0)")]
    Singularity,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("collision node at index {index}")]
    CollisionNode { index: usize },
    #[error("direction not unit (|e| = {norm})")]
    DirectionNotUnit { norm: f64 },
    #[error("endpoint mismatch: {0}")]
    EndpointMismatch(String),
    #[error("no bracket: g(q_a) - H did not change sign after {doublings} doublings")]
    NoBracket { doublings: usize },
    #[error("collision abort: line search could not keep all nodes above the floor {floor}")]
    CollisionAbort { floor: f64 },
    #[error("max iterations reached ({iterations}) without meeting tolerances")]
    MaxIterations { iterations: usize },
    #[error("rescale impossible: {0}")]
    RescaleImpossible(String),
    #[error("threshold {threshold} never attained by |u|")]
    ThresholdNotAttained { threshold: f64 },
    #[error("conic divergence: angle {zeta} at or beyond asymptote {zeta_inf}")]
    Divergence { zeta: f64, zeta_inf: f64 },
    #[error("near-collision: step size fell below {dt_min} at t = {time}")]
    NearCollision { dt_min: f64, time: f64 },
    #[error("escape conditions unmet: {0}")]
    EscapeConditionsUnmet(String),
    #[error("insufficient entries: {0}")]
    InsufficientEntries(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for OrbitError {
    fn from(err: std::io::Error) -> Self {
        OrbitError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, OrbitError>;
