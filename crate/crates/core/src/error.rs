use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("value {value} at flat index {index} outside [{min}, {max}]")]
    OutOfRange { index: usize, value: f64, min: f64, max: f64 },

    #[error("beta must lie in [0, 1], got {0}")]
    InvalidBeta(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("probabilities at pixel {pixel} sum to {sum}, expected 1")]
    NotNormalized { pixel: usize, sum: f64 },

    #[error("label {label} at pixel {pixel} is not below the class count {classes}")]
    LabelOutOfRange { pixel: usize, label: u8, classes: usize },

    #[error("reduction over zero valid pixels")]
    EmptyReduction,

    #[error("empty input: {0}")]
    Empty(String),
}
