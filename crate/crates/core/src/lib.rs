//! Simulation and spectral analysis of periodically repeated Ramsey
//! measurements on a qubit whose frequency carries a weak periodic
//! modulation on top of telegraph or Gaussian noise.

pub mod analytic;
pub mod bessel;
pub mod error;
pub mod model;
pub mod noise;
pub mod simulator;
pub mod estimation;
pub mod fit;

pub use error::{AnalyticError, ConfigError, Error, EstimationError, FitError, NoiseError};
pub use model::{DecoherenceTime, DerivedModulation, MeasurementConfig, ModulationConfig, PhaseMode};
