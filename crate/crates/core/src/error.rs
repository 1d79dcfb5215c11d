use alloc::string::String;

/// Errors produced by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),

    #[error("invalid population: {0}")]
    InvalidPopulation(String),

    #[error("response {response} out of range for {responses} responses")]
    ResponseOutOfRange { response: usize, responses: usize },

    #[error("pass rate {0} outside the open interval (0, 1)")]
    PassRateDomain(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("log distortion evaluated at non-positive argument {0}")]
    LogDomain(f64),

    #[error("distortion {0} has no finite Lipschitz constant")]
    NotLipschitz(&'static str),

    #[error("scheme {0} has no closed-form induced prior")]
    NoClosedForm(&'static str),

    #[error("tail integral of the weight diverges at p = {0}")]
    Divergent(f64),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("reference window is empty (cold start)")]
    ColdStart,

    #[error("grid mismatch: {0} vs {1} rollouts")]
    GridMismatch(usize, usize),

    #[error("sliding window overflow: {len} entries exceed capacity {capacity}")]
    WindowOverflow { len: usize, capacity: usize },

    #[error("all weights are zero; effective distribution undefined")]
    UndefinedDistribution,

    #[error("calibration map is not strictly increasing near t = {0}")]
    NotMonotone(f64),

    #[error("k = {k} exceeds the {available} available samples")]
    KTooLarge { k: usize, available: usize },

    #[error("unknown weight scheme `{0}`")]
    UnknownScheme(String),

    #[error("unknown verification suite `{0}`")]
    UnknownSuite(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
