//! JSON run configuration.

use serde::{Deserialize, Serialize};
use std::path::Path;

use ramsey_probe::simulator::NoiseSpec;
use ramsey_probe::{MeasurementConfig, ModulationConfig};

use crate::error::{CliError, CliResult};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "RAMSEY_PROBE_THREADS";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Execution {
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub measurement: MeasurementConfig,
    pub modulation: ModulationConfig,
    pub noise: NoiseSpec,
    pub execution: Execution,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        de.end().map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.measurement.validate()?;
        self.modulation.validate()?;
        self.noise.validate()?;
        if self.execution.parallelism == Some(0) {
            return Err(CliError::Config("invalid `execution.parallelism`: must be at least 1".into()));
        }
        Ok(())
    }
}

/// Thread count after applying the `RAMSEY_PROBE_THREADS` cap.
pub fn effective_parallelism(requested: Option<usize>) -> CliResult<Option<usize>> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&t| t > 0)
                .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    Ok(match (requested, cap) {
        (Some(r), Some(c)) => Some(r.min(c)),
        (None, Some(c)) => Some(c),
        (r, None) => r,
    })
}
