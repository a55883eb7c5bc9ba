use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {dim}: {reason}")]
    InvalidDimension { dim: usize, reason: &'static str },

    #[error("unknown subsystem `{0}`")]
    UnknownLabel(String),

    #[error("duplicate subsystem label `{0}`")]
    DuplicateLabel(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("photon number {n} exceeds the truncation of `{label}` (local dimension {dim})")]
    Truncation { label: String, n: usize, dim: usize },

    #[error("requested state is not part of the retained basis")]
    OutsideBasis,

    #[error("causality violation: emitted energy exceeds incident energy at t = {time}")]
    Causality { time: f64 },

    #[error("capture incomplete: release starts at t = {release} before the pulse ends at t = {pulse_end}")]
    CaptureIncomplete { release: f64, pulse_end: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    #[error("numerical divergence at t = {time} (last finite state at t = {last_good})")]
    Divergence { time: f64, last_good: f64 },

    #[error("trace drift {drift:.3e} at t = {time} exceeds {tolerance:.1e}; reduce the step size")]
    Accuracy { drift: f64, time: f64, tolerance: f64 },

    #[error("photon-number window leaks {population:.3e} population to its boundary (tolerance {tolerance:.1e})")]
    WindowLeak { population: f64, tolerance: f64 },

    #[error("single-excitation sector violated: {0}")]
    ExcitationSector(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
    }
}
