use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("feature dimension mismatch: model expects {expected}, feature map has {found}")]
    FeatureDimension { expected: usize, found: usize },
    #[error("per-state vector has length {found}, expected {expected}")]
    StateCount { expected: usize, found: usize },
    #[error("state {state} out of range for {states} states")]
    StateOutOfRange { state: usize, states: usize },
    #[error("empty demonstration set")]
    EmptyDemonstrations,
    #[error("dataset needs at least {needed} demonstrations, got {found}")]
    NotEnoughDemonstrations { needed: usize, found: usize },
    #[error("cannot place {count} pedestrians on a circle of radius {radius} with spacing {spacing} m")]
    CrowdDoesNotFit { count: usize, radius: f64, spacing: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },
    #[error("model parameters are not shape-congruent with the gradient")]
    ShapeMismatch,
    #[error("command source ended before the episode finished")]
    CommandSourceEnded,
}
