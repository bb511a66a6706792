//! Measurement and modulation parameters, and the deterministic phase and
//! outcome-probability formulas that every other module composes.
//!
//! Units: angles in radians, times in arbitrary but consistent units (the
//! defaults use the Ramsey time as the unit), angular frequencies in
//! radians per time unit.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::ConfigError;

/// Decoherence time of the qubit. `Infinite` drops the `exp(-t_R/T2)` factor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoherenceTime {
    #[default]
    Infinite,
    Finite(f64),
}

impl DecoherenceTime {
    /// Contrast factor `exp(-t_R / T2)`.
    pub fn contrast(self, t_ramsey: f64) -> f64 {
        match self {
            DecoherenceTime::Infinite => 1.0,
            DecoherenceTime::Finite(t2) => (-t_ramsey / t2).exp(),
        }
    }
}

/// Timing and phase parameters of the periodically repeated Ramsey protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementConfig {
    /// Ramsey accumulation time `t_R`.
    pub t_ramsey: f64,
    /// Period between the starts of consecutive Ramsey measurements.
    pub t_cycle: f64,
    /// Control phase `phi_R`.
    pub phi_r: f64,
    #[serde(default)]
    pub t2: DecoherenceTime,
    /// Outcomes per run.
    pub n_outcomes: usize,
    /// Number of independent runs.
    pub repetitions: usize,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            t_ramsey: 1.0,
            t_cycle: 3.0,
            phi_r: 0.0,
            t2: DecoherenceTime::Infinite,
            n_outcomes: 100_000,
            repetitions: 200,
        }
    }
}

impl MeasurementConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.t_ramsey > 0.0 && self.t_ramsey.is_finite()) {
            return Err(ConfigError::field("measurement.t_ramsey", "must be positive and finite"));
        }
        if !(self.t_cycle >= self.t_ramsey && self.t_cycle.is_finite()) {
            return Err(ConfigError::field("measurement.t_cycle", "must be finite and >= t_ramsey"));
        }
        if !self.phi_r.is_finite() {
            return Err(ConfigError::field("measurement.phi_r", "must be finite"));
        }
        if let DecoherenceTime::Finite(t2) = self.t2 {
            if !(t2 > 0.0) {
                return Err(ConfigError::field("measurement.t2", "must be positive or \"infinite\""));
            }
        }
        if self.n_outcomes < 2 {
            return Err(ConfigError::field("measurement.n_outcomes", "must be at least 2"));
        }
        if self.repetitions < 1 {
            return Err(ConfigError::field("measurement.repetitions", "must be at least 1"));
        }
        Ok(())
    }
}

/// How the initial modulation phase is chosen for each run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Every run starts with the configured `phi_p` (synchronized runs).
    #[default]
    Fixed,
    /// Each run draws `phi_p ~ U(0, 2 pi)` (non-synchronized runs).
    UniformRandomPerRun,
}

/// Sinusoidal modulation `a_p cos(omega_p t + phi_p)` of the qubit frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulationConfig {
    pub amplitude: f64,
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub phase_mode: PhaseMode,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self { amplitude: 1.0, omega: 1e-3, phase: 0.0, phase_mode: PhaseMode::Fixed }
    }
}

impl ModulationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(ConfigError::field("modulation.amplitude", "must be finite and >= 0"));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(ConfigError::field("modulation.omega", "must be positive and finite"));
        }
        if !(0.0..TAU).contains(&self.phase) {
            return Err(ConfigError::field("modulation.phase", "must lie in [0, 2 pi)"));
        }
        Ok(())
    }
}

/// Effective amplitude and phase of the per-cycle modulation-induced phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedModulation {
    /// `A_p = (2 a_p / omega_p) sin(omega_p t_R / 2)`.
    pub amplitude: f64,
    /// `phi_p + omega_p t_R / 2`.
    pub phase: f64,
}

/// Integrates the sinusoidal frequency shift over one Ramsey window.
pub fn derive_modulation(modulation: &ModulationConfig, meas: &MeasurementConfig) -> DerivedModulation {
    derive_modulation_with_phase(modulation, meas, modulation.phase)
}

pub(crate) fn derive_modulation_with_phase(
    modulation: &ModulationConfig,
    meas: &MeasurementConfig,
    phi_p: f64,
) -> DerivedModulation {
    let half = 0.5 * modulation.omega * meas.t_ramsey;
    DerivedModulation {
        amplitude: 2.0 * modulation.amplitude / modulation.omega * half.sin(),
        phase: phi_p + half,
    }
}

/// Modulation-induced phase accumulated in cycle `k`.
pub fn periodic_phase(
    k: usize,
    derived: &DerivedModulation,
    meas: &MeasurementConfig,
    modulation: &ModulationConfig,
) -> f64 {
    derived.amplitude * (k as f64 * modulation.omega * meas.t_cycle + derived.phase).cos()
}

/// Probability of the outcome "1" given accumulated phase `theta`.
#[inline]
pub fn outcome_probability(theta: f64, meas: &MeasurementConfig) -> f64 {
    let p = 0.5 * (1.0 + meas.t2.contrast(meas.t_ramsey) * (meas.phi_r + theta).cos());
    p.clamp(0.0, 1.0)
}
