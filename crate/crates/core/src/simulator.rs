//! Monte Carlo of periodically repeated Ramsey measurements.
//!
//! Each repetition owns its random streams (see [`RngStream`]), so an
//! experiment is a pure function of its configuration and master seed,
//! whatever the number of worker threads.

use rand::distr::{Open01, Uniform};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{ConfigError, NoiseError};
use crate::model::{derive_modulation_with_phase, outcome_probability, DerivedModulation, MeasurementConfig, ModulationConfig, PhaseMode};
use crate::noise::{
    sample_cycle_jitter, sample_gaussian_qubit_noise, sample_modfreq_path, sample_tls_phases, Channel, CycleJitter,
    ModFreqNoise, OuParams, RngStream, TlsEnsemble,
};

/// The stochastic channels active in an experiment. Absent channels contribute nothing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tls: Option<TlsEnsemble>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubit_gaussian: Option<OuParams>,
    #[serde(default, skip_serializing_if = "ModFreqNoise::is_none")]
    pub modulation_frequency: ModFreqNoise,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_jitter: Option<CycleJitter>,
}

impl NoiseSpec {
    pub fn is_noiseless(&self) -> bool {
        self.tls.is_none() && self.qubit_gaussian.is_none() && self.modulation_frequency.is_none() && self.cycle_jitter.is_none()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(tls) = &self.tls {
            if tls.is_empty() {
                return Err(ConfigError::field("noise.tls", "ensemble must contain at least one TLS"));
            }
            tls.validate()?;
        }
        if let Some(ou) = &self.qubit_gaussian {
            ou.validate("noise.qubit_gaussian")?;
        }
        self.modulation_frequency.validate()?;
        if let Some(jitter) = &self.cycle_jitter {
            jitter.validate()?;
        }
        Ok(())
    }
}

/// Per-cycle stochastic inputs to the phase. Empty vectors mean the channel is off.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseComponents {
    /// Random qubit phase `theta_k^(r)`.
    pub random: Vec<f64>,
    /// Accumulated modulation-phase drift `Phi_k`.
    pub modulation_drift: Vec<f64>,
    /// Cumulative cycle-timing offset `tau_k`.
    pub timing: Vec<f64>,
}

impl PhaseComponents {
    /// Draws every active channel for one repetition.
    pub fn sample(noise: &NoiseSpec, meas: &MeasurementConfig, stream: RngStream) -> Result<Self, NoiseError> {
        let mut random = Vec::new();
        if let Some(tls) = &noise.tls {
            random = sample_tls_phases(tls, meas, &mut stream.rng(Channel::Tls))?;
        }
        if let Some(ou) = &noise.qubit_gaussian {
            let gaussian = sample_gaussian_qubit_noise(ou, meas, &mut stream.rng(Channel::QubitGaussian))?;
            if random.is_empty() {
                random = gaussian;
            } else {
                random.iter_mut().zip(gaussian).for_each(|(r, g)| *r += g);
            }
        }
        let modulation_drift = if noise.modulation_frequency.is_none() {
            Vec::new()
        } else {
            sample_modfreq_path(&noise.modulation_frequency, meas, &mut stream.rng(Channel::ModulationFrequency))?
        };
        let timing = match &noise.cycle_jitter {
            Some(jitter) => {
                jitter.validate()?;
                sample_cycle_jitter(jitter, meas.n_outcomes, &mut stream.rng(Channel::CycleJitter))
            }
            None => Vec::new(),
        };
        Ok(Self { random, modulation_drift, timing })
    }
}

/// Total phase of cycle `k`:
/// `A_p cos(k omega_p t_cyc + Phi_k + omega_p tau_k + phi~_p) + theta_k^(r)`.
#[inline]
pub fn total_phase(
    k: usize,
    derived: &DerivedModulation,
    omega_p: f64,
    t_cycle: f64,
    components: &PhaseComponents,
) -> f64 {
    let drift = components.modulation_drift.get(k).copied().unwrap_or(0.0);
    let timing = components.timing.get(k).copied().unwrap_or(0.0);
    let random = components.random.get(k).copied().unwrap_or(0.0);
    let argument = k as f64 * omega_p * t_cycle + drift + omega_p * timing + derived.phase;
    derived.amplitude * argument.cos() + random
}

/// Binary outcomes of one repetition, packed least-significant bit first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeRun {
    packed: Vec<u8>,
    len: usize,
    pub stream_id: u64,
    /// Initial modulation phase used for this run, stored as raw bits so
    /// runs compare exactly.
    phi_p_bits: u64,
}

impl OutcomeRun {
    pub fn from_bits(bits: &[u8], stream_id: u64, phi_p_used: f64) -> Self {
        let mut packed = vec![0u8; bits.len().div_ceil(8)];
        for (i, &b) in bits.iter().enumerate() {
            debug_assert!(b <= 1);
            packed[i / 8] |= (b & 1) << (i % 8);
        }
        Self { packed, len: bits.len(), stream_id, phi_p_bits: phi_p_used.to_bits() }
    }

    /// Wraps already-packed bytes; bits past `len` are cleared.
    pub fn from_packed(mut packed: Vec<u8>, len: usize, stream_id: u64, phi_p_used: f64) -> Self {
        packed.resize(len.div_ceil(8), 0);
        if len % 8 != 0 {
            let last = packed.len() - 1;
            packed[last] &= (1u8 << (len % 8)) - 1;
        }
        Self { packed, len, stream_id, phi_p_bits: phi_p_used.to_bits() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn phi_p_used(&self) -> f64 {
        f64::from_bits(self.phi_p_bits)
    }

    #[inline]
    pub fn bit(&self, n: usize) -> u8 {
        (self.packed[n / 8] >> (n % 8)) & 1
    }

    pub fn bits(&self) -> impl ExactSizeIterator<Item = u8> + '_ {
        (0..self.len).map(move |n| self.bit(n))
    }

    pub fn packed(&self) -> &[u8] {
        &self.packed
    }

    pub fn count_ones(&self) -> u64 {
        self.packed.iter().map(|b| b.count_ones() as u64).sum()
    }

    /// Outcomes as `0.0` / `1.0`, written into `out`.
    pub fn write_f64(&self, out: &mut [f64]) {
        for (n, slot) in out.iter_mut().enumerate().take(self.len) {
            *slot = self.bit(n) as f64;
        }
    }
}

/// Simulates one repetition with the streams of `stream`.
pub fn run_sequence(
    meas: &MeasurementConfig,
    modulation: &ModulationConfig,
    noise: &NoiseSpec,
    stream: RngStream,
) -> Result<OutcomeRun, NoiseError> {
    meas.validate()?;
    modulation.validate()?;
    let phi_p = match modulation.phase_mode {
        PhaseMode::Fixed => modulation.phase,
        PhaseMode::UniformRandomPerRun => {
            let uniform = Uniform::new(0.0, TAU).expect("valid range");
            stream.rng(Channel::ModulationPhase).sample(uniform)
        }
    };
    let derived = derive_modulation_with_phase(modulation, meas, phi_p);
    let components = PhaseComponents::sample(noise, meas, stream)?;
    let mut rng = stream.rng(Channel::Outcomes);
    let mut packed = vec![0u8; meas.n_outcomes.div_ceil(8)];
    for k in 0..meas.n_outcomes {
        let theta = total_phase(k, &derived, modulation.omega, meas.t_cycle, &components);
        let p = outcome_probability(theta, meas);
        let r: f64 = rng.sample(Open01);
        if p >= r {
            packed[k / 8] |= 1 << (k % 8);
        }
    }
    Ok(OutcomeRun::from_packed(packed, meas.n_outcomes, stream.stream_id, phi_p))
}

/// `K` repetitions of the same protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub runs: Vec<OutcomeRun>,
    pub meas: MeasurementConfig,
    pub modulation: ModulationConfig,
    pub noise: NoiseSpec,
    pub master_seed: u64,
}

impl Experiment {
    pub fn n_outcomes(&self) -> usize {
        self.meas.n_outcomes
    }

    pub fn repetitions(&self) -> usize {
        self.runs.len()
    }
}

/// Runs `f` on a pool of `parallelism` threads, or on the global pool.
pub fn with_parallelism<T: Send>(parallelism: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match parallelism {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map(|pool| pool.install(f))
            .unwrap_or_else(|_| panic!("cannot start a pool of {threads} threads")),
        None => f(),
    }
}

/// Simulates `meas.repetitions` independent runs; run `i` uses stream id `i`.
pub fn run_experiment(
    meas: &MeasurementConfig,
    modulation: &ModulationConfig,
    noise: &NoiseSpec,
    master_seed: u64,
    parallelism: Option<usize>,
) -> Result<Experiment, NoiseError> {
    meas.validate()?;
    modulation.validate()?;
    noise.validate()?;
    let runs = with_parallelism(parallelism, || {
        (0..meas.repetitions as u64)
            .into_par_iter()
            .map(|id| run_sequence(meas, modulation, noise, RngStream::new(master_seed, id)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(Experiment {
        runs,
        meas: meas.clone(),
        modulation: modulation.clone(),
        noise: noise.clone(),
        master_seed,
    })
}
