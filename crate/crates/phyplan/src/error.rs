use thiserror::Error;

/// Errors surfaced by the crate's public operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix had an unexpected dimension.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value violated its documented constraints.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A computation produced a non-finite value where one is not allowed.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An operation requiring a governing equation was invoked on a skill
    /// that is trained from data alone.
    #[error("skill `{0}` has no governing-equation loss")]
    DataOnlySkill(String),

    /// Unknown skill or task name in user input.
    #[error("unknown name: {0}")]
    UnknownName(String),

    /// A dataset, model file, or CSV did not match the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// A required skill-model file is absent.
    #[error("missing model for skill `{skill}` at {path}; train it with: phyplan train --skill {skill} --data <train.csv> --out {path}")]
    MissingModel { skill: String, path: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
