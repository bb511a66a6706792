use thiserror::Error;

/// A parameter failed validation. `field` is the dotted config path.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
}

impl ConfigError {
    pub fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::InvalidField { field: field.into(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("TLS ensemble is empty")]
    EmptyEnsemble,
    #[error("integration step {dt} must be smaller than the cycle period {t_cycle}")]
    StepTooLarge { dt: f64, t_cycle: f64 },
    #[error("total duration {0} cannot be represented with sub-window resolution")]
    DurationOverflow(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("{function}: argument outside supported envelope ({detail})")]
    OutOfEnvelope { function: &'static str, detail: String },
    #[error("bin {m} sits on the resonance of overtone {ell}; use the delta-area form")]
    Resonance { ell: i32, m: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("run {index} has {len} outcomes, expected {expected}")]
    LengthMismatch { index: usize, len: usize, expected: usize },
    #[error("experiment contains no runs")]
    Empty,
    #[error("partial-sum length {m} exceeds record length {n}")]
    PartialSumTooLong { m: usize, n: usize },
    #[error("spectrum too short for peak analysis (N = {0})")]
    TooShort(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("peak at bin {m} is too close to the spectrum edge for the fit window")]
    DegenerateWindow { m: usize },
    #[error("peak area {area} cannot be inverted within the first Bessel lobe of J_{ell}")]
    AmbiguousAmplitude { ell: u32, area: f64 },
    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("not enough points for the fit ({0})")]
    TooFewPoints(usize),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
}

/// Umbrella error for callers that drive the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Fit(#[from] FitError),
}
