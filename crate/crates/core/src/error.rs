use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("axis {axis} of length {len} is not divisible by factor {factor}")]
    Indivisible { axis: usize, len: usize, factor: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("step {t} out of range for schedule with {steps} steps")]
    StepOutOfRange { t: usize, steps: usize },

    #[error("averaging count must be >= 1, got {0}")]
    InvalidAveragingCount(usize),

    #[error("unsupported shape {got}; predictor supports {family}")]
    UnsupportedShape { got: String, family: String },

    #[error("unknown condition label {label}; known labels: {known}")]
    UnknownCondition { label: u32, known: String },

    #[error("empty class subset for label {0}")]
    EmptyClassSubset(u32),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite state at step index {step_index} (t = {t})")]
    NonFiniteState { step_index: usize, t: usize },

    #[error("numeric self-check failed: {0}")]
    NumericCheck(String),

    #[error("sampler step must go backward: t = {t}, t_prev = {t_prev}")]
    BadStepOrder { t: usize, t_prev: usize },

    #[error("axis {axis} of length {len} is not a power of two")]
    NotPowerOfTwo { axis: usize, len: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad parameter file: {0}")]
    BadParamFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Helper for shape-mismatch errors from (channels, dims) pairs.
    pub(crate) fn shape_mismatch(
        lc: usize,
        ld: &[usize],
        rc: usize,
        rd: &[usize],
    ) -> Self {
        Error::ShapeMismatch {
            left: format!("{}x{:?}", lc, ld),
            right: format!("{}x{:?}", rc, rd),
        }
    }
}
