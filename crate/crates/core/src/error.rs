use thiserror::Error;

/// Errors raised by model construction, codec evaluation and optimization.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("joint density is degenerate at correlation 1")]
    DegenerateCorrelation,

    #[error("crossover SNR is infinite at correlation 1")]
    InfiniteCrossover,

    #[error("distortion must be positive, got {0}")]
    NonPositiveDistortion(f64),

    #[error("channel segments overlap: spacing {spacing} does not exceed segment length {segment}")]
    GeometryViolation { spacing: f64, segment: f64 },

    #[error("power budget {budget} cannot carry the encoder-1 quantizer (minimum {minimum})")]
    InfeasiblePower { budget: f64, minimum: f64 },

    #[error("numerical procedure did not converge: {0}")]
    NonConvergence(String),

    #[error("writing output failed: {0}")]
    Output(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
