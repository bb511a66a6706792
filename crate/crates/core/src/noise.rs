//! Stochastic ingredients of the simulation: telegraph noise from
//! two-level systems, Gaussian (Ornstein-Uhlenbeck) qubit-frequency noise,
//! noise of the modulation frequency, and cycle-duration jitter.
//!
//! Every sampler takes an explicit RNG; [`RngStream`] derives one
//! independent ChaCha generator per (seed, run, channel) triple so results
//! do not depend on how runs are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, NoiseError};
use crate::model::MeasurementConfig;

/// Identifies the random substream of one repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

/// Independent consumers of randomness within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Channel {
    Outcomes = 1,
    ModulationPhase = 2,
    Tls = 3,
    QubitGaussian = 4,
    ModulationFrequency = 5,
    CycleJitter = 6,
    /// Free-form draws made by callers outside the simulator.
    User = 7,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    /// Generator for one channel of this stream. The channel selects the
    /// key, the stream id selects the ChaCha stream.
    pub fn rng(&self, channel: Channel) -> ChaCha8Rng {
        let mut state = self.master_seed ^ (channel as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[inline]
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Splits `duration` into the smallest number of equal steps no longer than `dt`.
fn substeps(duration: f64, dt: f64) -> (usize, f64) {
    if duration <= 0.0 {
        return (0, 0.0);
    }
    let count = (duration / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (count, duration / count as f64)
}

fn check_step(dt: f64, meas: &MeasurementConfig, field: &str) -> Result<(), NoiseError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ConfigError::field(field, "must be positive").into());
    }
    if dt >= meas.t_cycle {
        return Err(NoiseError::StepTooLarge { dt, t_cycle: meas.t_cycle });
    }
    Ok(())
}

// ── Two-level systems ────────────────────────────────────────────────

/// A two-level fluctuator dispersively coupled to the qubit.
///
/// State 0 has `tau_z = +1`, state 1 has `tau_z = -1`; `rate_01` is the
/// switching rate out of state 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsParams {
    pub coupling: f64,
    pub rate_01: f64,
    pub rate_10: f64,
}

impl TlsParams {
    pub fn symmetric(coupling: f64, total_rate: f64) -> Self {
        Self { coupling, rate_01: 0.5 * total_rate, rate_10: 0.5 * total_rate }
    }

    /// `W = W01 + W10`.
    pub fn total_rate(&self) -> f64 {
        self.rate_01 + self.rate_10
    }

    /// `dW = W10 - W01`.
    pub fn asymmetry(&self) -> f64 {
        self.rate_10 - self.rate_01
    }

    /// `w = 2 sqrt(W01 W10) / W`, the standard deviation of `tau_z`.
    pub fn symmetry_factor(&self) -> f64 {
        2.0 * (self.rate_01 * self.rate_10).sqrt() / self.total_rate()
    }

    /// Stationary `<tau_z> = dW / W`.
    pub fn mean_polarization(&self) -> f64 {
        self.asymmetry() / self.total_rate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.coupling.is_finite() {
            return Err(ConfigError::field("noise.tls.coupling", "must be finite"));
        }
        if !(self.rate_01 > 0.0 && self.rate_01.is_finite()) {
            return Err(ConfigError::field("noise.tls.rate_01", "must be positive"));
        }
        if !(self.rate_10 > 0.0 && self.rate_10.is_finite()) {
            return Err(ConfigError::field("noise.tls.rate_10", "must be positive"));
        }
        Ok(())
    }
}

/// Independent TLSs whose frequency shifts add up.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TlsEnsemble(pub Vec<TlsParams>);

impl TlsEnsemble {
    pub fn single(tls: TlsParams) -> Self {
        Self(vec![tls])
    }

    pub fn iter(&self) -> impl Iterator<Item = &TlsParams> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.0.iter().try_for_each(TlsParams::validate)
    }
}

/// Event-driven telegraph process. Queries must move forward in time.
#[derive(Debug, Clone)]
pub(crate) struct Telegraph {
    state: u8,
    next_switch: f64,
    rates: [f64; 2],
}

impl Telegraph {
    /// Starts at time 0 in a state drawn from the stationary distribution.
    pub(crate) fn stationary<R: Rng + ?Sized>(params: &TlsParams, rng: &mut R) -> Self {
        let p_one = params.rate_01 / params.total_rate();
        let state = u8::from(rng.random::<f64>() < p_one);
        let rates = [params.rate_01, params.rate_10];
        let dwell: f64 = rng.sample(Exp1);
        Self { state, next_switch: dwell / rates[state as usize], rates }
    }

    #[inline]
    fn tau_z(&self) -> f64 {
        if self.state == 0 {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn flip<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.state ^= 1;
        let dwell: f64 = rng.sample(Exp1);
        self.next_switch += dwell / self.rates[self.state as usize];
    }

    /// Exact integral of `tau_z` over `[start, end]`.
    pub(crate) fn integrate<R: Rng + ?Sized>(&mut self, start: f64, end: f64, rng: &mut R) -> f64 {
        while self.next_switch <= start {
            self.flip(rng);
        }
        let mut cursor = start;
        let mut total = 0.0;
        while self.next_switch < end {
            total += self.tau_z() * (self.next_switch - cursor);
            cursor = self.next_switch;
            self.flip(rng);
        }
        total + self.tau_z() * (end - cursor)
    }
}

fn check_duration(meas: &MeasurementConfig) -> Result<(), NoiseError> {
    let total = meas.n_outcomes as f64 * meas.t_cycle + meas.t_ramsey;
    // Window boundaries must stay resolvable relative to t_R.
    if !total.is_finite() || total * f64::EPSILON > 1e-6 * meas.t_ramsey {
        return Err(NoiseError::DurationOverflow(total));
    }
    Ok(())
}

/// Random phases `theta_k^(r)` from a TLS ensemble, one per Ramsey window,
/// integrated exactly from simulated switching times.
pub fn sample_tls_phases<R: Rng + ?Sized>(
    ensemble: &TlsEnsemble,
    meas: &MeasurementConfig,
    rng: &mut R,
) -> Result<Vec<f64>, NoiseError> {
    if ensemble.is_empty() {
        return Err(NoiseError::EmptyEnsemble);
    }
    ensemble.validate()?;
    check_duration(meas)?;
    let mut phases = vec![0.0; meas.n_outcomes];
    for tls in ensemble.iter() {
        let mut telegraph = Telegraph::stationary(tls, rng);
        let offset = tls.mean_polarization() * meas.t_ramsey;
        for (k, phase) in phases.iter_mut().enumerate() {
            let start = k as f64 * meas.t_cycle;
            let integral = telegraph.integrate(start, start + meas.t_ramsey, rng);
            *phase += tls.coupling * (integral - offset);
        }
    }
    Ok(phases)
}

/// One independent draw of the TLS phase over a single window of length
/// `t_ramsey`, starting from the stationary state.
pub fn sample_tls_window<R: Rng + ?Sized>(ensemble: &TlsEnsemble, t_ramsey: f64, rng: &mut R) -> f64 {
    ensemble
        .iter()
        .map(|tls| {
            let mut telegraph = Telegraph::stationary(tls, rng);
            let integral = telegraph.integrate(0.0, t_ramsey, rng);
            tls.coupling * (integral - tls.mean_polarization() * t_ramsey)
        })
        .sum()
}

// ── Ornstein-Uhlenbeck machinery ────────────────────────────────────

/// Parameters of a stationary OU process with variance `variance` and
/// correlation time `tau_corr`, integrated with step `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuParams {
    pub variance: f64,
    pub tau_corr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl OuParams {
    /// Default step `0.01 t_R`.
    pub fn step(&self, t_ramsey: f64) -> f64 {
        self.dt.unwrap_or(0.01 * t_ramsey)
    }

    pub fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(ConfigError::field(format!("{prefix}.variance"), "must be finite and >= 0"));
        }
        if !(self.tau_corr > 0.0 && self.tau_corr.is_finite()) {
            return Err(ConfigError::field(format!("{prefix}.tau_corr"), "must be positive"));
        }
        Ok(())
    }
}

/// Euler-Maruyama integrator for `dxi = -xi dt / tau + sqrt(2 D / tau) dW`.
#[derive(Debug, Clone)]
pub struct OuProcess {
    value: f64,
    tau_corr: f64,
    diffusion: f64,
}

impl OuProcess {
    /// Starts from the stationary law `N(0, D)`.
    pub fn stationary<R: Rng + ?Sized>(variance: f64, tau_corr: f64, rng: &mut R) -> Self {
        Self {
            value: variance.sqrt() * normal(rng),
            tau_corr,
            diffusion: (2.0 * variance / tau_corr).sqrt(),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, h: f64, rng: &mut R) -> f64 {
        self.value += -self.value * h / self.tau_corr + self.diffusion * h.sqrt() * normal(rng);
        self.value
    }

    /// Advances by `steps` steps of length `h` and returns the trapezoidal
    /// integral of the path over that interval.
    fn integrate<R: Rng + ?Sized>(&mut self, steps: usize, h: f64, rng: &mut R) -> f64 {
        let mut acc = 0.0;
        for _ in 0..steps {
            let before = self.value;
            let after = self.step(h, rng);
            acc += 0.5 * (before + after) * h;
        }
        acc
    }
}

// ── Modulation-frequency noise ───────────────────────────────────────

/// Noise `xi(t)` of the modulation frequency.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModFreqNoise {
    #[default]
    None,
    /// Delta-correlated, `<xi(t) xi(0)> = intensity * delta(t)`. Default step `0.1 t_R`.
    White {
        intensity: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dt: Option<f64>,
    },
    /// Exponentially correlated, `<xi(t) xi(0)> = variance * exp(-|t| / tau_corr)`.
    Ou {
        variance: f64,
        tau_corr: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dt: Option<f64>,
    },
}

impl ModFreqNoise {
    pub fn is_none(&self) -> bool {
        matches!(self, ModFreqNoise::None)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            ModFreqNoise::None => Ok(()),
            ModFreqNoise::White { intensity, .. } => {
                if intensity >= 0.0 && intensity.is_finite() {
                    Ok(())
                } else {
                    Err(ConfigError::field("noise.modulation_frequency.intensity", "must be finite and >= 0"))
                }
            }
            ModFreqNoise::Ou { variance, tau_corr, dt } => {
                OuParams { variance, tau_corr, dt }.validate("noise.modulation_frequency")
            }
        }
    }
}

/// Accumulated modulation phase `Phi_k`, the integral of `xi` over `[0, k t_cyc]`.
pub fn sample_modfreq_path<R: Rng + ?Sized>(
    spec: &ModFreqNoise,
    meas: &MeasurementConfig,
    rng: &mut R,
) -> Result<Vec<f64>, NoiseError> {
    spec.validate()?;
    let n = meas.n_outcomes;
    let mut path = vec![0.0; n];
    match *spec {
        ModFreqNoise::None => {}
        ModFreqNoise::White { intensity, dt } => {
            let dt = dt.unwrap_or(0.1 * meas.t_ramsey);
            check_step(dt, meas, "noise.modulation_frequency.dt")?;
            let (steps, h) = substeps(meas.t_cycle, dt);
            let scale = (intensity * h).sqrt();
            let mut phi = 0.0;
            for value in path.iter_mut().skip(1) {
                for _ in 0..steps {
                    phi += scale * normal(rng);
                }
                *value = phi;
            }
        }
        ModFreqNoise::Ou { variance, tau_corr, dt } => {
            let dt = dt.unwrap_or(0.01 * meas.t_ramsey);
            check_step(dt, meas, "noise.modulation_frequency.dt")?;
            let (steps, h) = substeps(meas.t_cycle, dt);
            let mut ou = OuProcess::stationary(variance, tau_corr, rng);
            let mut phi = 0.0;
            for value in path.iter_mut().skip(1) {
                phi += ou.integrate(steps, h, rng);
                *value = phi;
            }
        }
    }
    Ok(path)
}

// ── Cycle-duration jitter ─────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterCorrelation {
    #[default]
    Iid,
}

/// Random deviations of the cycle duration from its mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleJitter {
    pub std_dev: f64,
    #[serde(default)]
    pub correlation: JitterCorrelation,
}

impl CycleJitter {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.std_dev >= 0.0 && self.std_dev.is_finite() {
            Ok(())
        } else {
            Err(ConfigError::field("noise.cycle_jitter.std_dev", "must be finite and >= 0"))
        }
    }
}

/// Cumulative timing offsets `tau_k = sum_{n<=k} dt_cyc^(n)`.
pub fn sample_cycle_jitter<R: Rng + ?Sized>(spec: &CycleJitter, n: usize, rng: &mut R) -> Vec<f64> {
    let mut tau = 0.0;
    (0..n)
        .map(|_| {
            tau += spec.std_dev * normal(rng);
            tau
        })
        .collect()
}

// ── Gaussian qubit-frequency noise ───────────────────────────────────

/// Phases `theta_k^(r)` from OU noise of the qubit frequency, integrated
/// over each Ramsey window `[k t_cyc, k t_cyc + t_R]`.
pub fn sample_gaussian_qubit_noise<R: Rng + ?Sized>(
    ou: &OuParams,
    meas: &MeasurementConfig,
    rng: &mut R,
) -> Result<Vec<f64>, NoiseError> {
    ou.validate("noise.qubit_gaussian")?;
    let dt = ou.step(meas.t_ramsey);
    check_step(dt, meas, "noise.qubit_gaussian.dt")?;
    let (window_steps, window_h) = substeps(meas.t_ramsey, dt);
    let (gap_steps, gap_h) = substeps(meas.t_cycle - meas.t_ramsey, dt);
    let mut process = OuProcess::stationary(ou.variance, ou.tau_corr, rng);
    let mut phases = Vec::with_capacity(meas.n_outcomes);
    for _ in 0..meas.n_outcomes {
        phases.push(process.integrate(window_steps, window_h, rng));
        for _ in 0..gap_steps {
            process.step(gap_h, rng);
        }
    }
    Ok(phases)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    fn small_meas(n: usize) -> MeasurementConfig {
        MeasurementConfig { n_outcomes: n, ..Default::default() }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..8).map(|_| RngStream::new(7, 3).rng(Channel::Tls).random()).collect();
        let b: Vec<u64> = (0..8).map(|_| RngStream::new(7, 3).rng(Channel::Tls).random()).collect();
        assert_eq!(a, b);
        let mut r1 = RngStream::new(7, 3).rng(Channel::Tls);
        let mut r2 = RngStream::new(7, 4).rng(Channel::Tls);
        let mut r3 = RngStream::new(7, 3).rng(Channel::Outcomes);
        let x1: u64 = r1.random();
        assert_ne!(x1, r2.random::<u64>());
        assert_ne!(x1, r3.random::<u64>());
    }

    #[test]
    fn zero_coupling_gives_zero_phase() {
        let ens = TlsEnsemble(vec![TlsParams::symmetric(0.0, 0.3), TlsParams::symmetric(0.0, 2.0)]);
        let mut rng = RngStream::new(1, 0).rng(Channel::Tls);
        let phases = sample_tls_phases(&ens, &small_meas(500), &mut rng).unwrap();
        assert!(phases.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn empty_ensemble_and_overflow_rejected() {
        let mut rng = RngStream::new(1, 0).rng(Channel::Tls);
        assert_eq!(
            sample_tls_phases(&TlsEnsemble::default(), &small_meas(10), &mut rng),
            Err(NoiseError::EmptyEnsemble)
        );
        let meas = MeasurementConfig { t_cycle: 1e300, ..small_meas(10_000) };
        let ens = TlsEnsemble::single(TlsParams::symmetric(0.1, 1.0));
        assert!(matches!(sample_tls_phases(&ens, &meas, &mut rng), Err(NoiseError::DurationOverflow(_))));
    }

    #[test]
    fn slow_tls_window_phase_matches_frozen_limit() {
        // W t_R << 1: theta = +-V t_R and <e^{i theta}> = cos(V t_R).
        let ens = TlsEnsemble::single(TlsParams::symmetric(0.2, 1.2e-4));
        let mut rng = RngStream::new(11, 0).rng(Channel::User);
        let draws: Vec<f64> = (0..100_000).map(|_| sample_tls_window(&ens, 1.0, &mut rng).cos()).collect();
        let (mean, var) = mean_var(&draws);
        let se = (var / draws.len() as f64).sqrt().max(1e-6);
        assert!((mean - 0.2_f64.cos()).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn symmetric_telegraph_has_zero_mean() {
        let tls = TlsParams::symmetric(1.0, 2.0);
        let mut rng = RngStream::new(5, 0).rng(Channel::User);
        let mut telegraph = Telegraph::stationary(&tls, &mut rng);
        // Block means over 10^4 blocks, each long compared to 1/W.
        let blocks: Vec<f64> = (0..10_000)
            .map(|b| telegraph.integrate(b as f64 * 10.0, (b + 1) as f64 * 10.0, &mut rng) / 10.0)
            .collect();
        let (mean, var) = mean_var(&blocks);
        let se = (var / blocks.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    fn ks_exponential(samples: &mut [f64], rate: f64) -> f64 {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        samples
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = 1.0 - (-rate * x).exp();
                (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn telegraph_dwell_times_are_exponential() {
        let tls = TlsParams { coupling: 1.0, rate_01: 0.7, rate_10: 2.1 };
        let mut rng = RngStream::new(9, 0).rng(Channel::User);
        let mut telegraph = Telegraph::stationary(&tls, &mut rng);
        let mut dwells = [Vec::new(), Vec::new()];
        while dwells[0].len() < 100_000 || dwells[1].len() < 100_000 {
            // Each flip draws the full dwell of the state just entered.
            let start = telegraph.next_switch;
            telegraph.flip(&mut rng);
            dwells[telegraph.state as usize].push(telegraph.next_switch - start);
        }
        // Kolmogorov-Smirnov critical value at alpha = 1e-3: 1.949 / sqrt(n).
        for (state, rate) in [(0usize, tls.rate_01), (1, tls.rate_10)] {
            let samples = &mut dwells[state][..100_000];
            let d = ks_exponential(samples, rate);
            assert!(d < 1.949 / (100_000f64).sqrt(), "state {state}: D = {d}");
        }
    }

    #[test]
    fn tls_phases_are_stationary_zero_mean() {
        let ens = TlsEnsemble(vec![TlsParams { coupling: 0.3, rate_01: 0.02, rate_10: 0.05 }]);
        let meas = small_meas(50);
        let k_runs = 1_000;
        let firsts: Vec<f64> = (0..k_runs)
            .map(|r| {
                let mut rng = RngStream::new(21, r).rng(Channel::Tls);
                sample_tls_phases(&ens, &meas, &mut rng).unwrap()[17]
            })
            .collect();
        let (mean, var) = mean_var(&firsts);
        assert!(mean.abs() < 3.0 * (var / k_runs as f64).sqrt());
    }

    #[test]
    fn white_modfreq_zero_intensity_is_flat() {
        let spec = ModFreqNoise::White { intensity: 0.0, dt: None };
        let mut rng = RngStream::new(1, 0).rng(Channel::ModulationFrequency);
        assert!(sample_modfreq_path(&spec, &small_meas(100), &mut rng).unwrap().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn modfreq_rejects_large_step() {
        let spec = ModFreqNoise::White { intensity: 1.0, dt: Some(3.0) };
        let mut rng = RngStream::new(1, 0).rng(Channel::ModulationFrequency);
        assert!(matches!(
            sample_modfreq_path(&spec, &small_meas(10), &mut rng),
            Err(NoiseError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn white_modfreq_variance_grows_linearly() {
        // sigma^2 t_R = 25e-6, Var(Phi_k) = sigma^2 k t_cyc = 0.75 at k = 10^4.
        let spec = ModFreqNoise::White { intensity: 25e-6, dt: None };
        let meas = small_meas(10_001);
        let finals: Vec<f64> = (0..1_000)
            .map(|r| {
                let mut rng = RngStream::new(3, r).rng(Channel::ModulationFrequency);
                sample_modfreq_path(&spec, &meas, &mut rng).unwrap()[10_000]
            })
            .collect();
        let (_, var) = mean_var(&finals);
        assert!((var / 0.75 - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn ou_autocorrelation_at_one_correlation_time() {
        let (variance, tau) = (2.0, 1.0);
        let h = 0.01;
        let lag_steps = (tau / h) as usize;
        let (mut sum_xy, mut sum_xx, mut sum_yy) = (0.0, 0.0, 0.0);
        for r in 0..2_000 {
            let mut rng = RngStream::new(4, r).rng(Channel::User);
            let mut ou = OuProcess::stationary(variance, tau, &mut rng);
            let x = ou.value();
            for _ in 0..lag_steps {
                ou.step(h, &mut rng);
            }
            let y = ou.value();
            sum_xy += x * y;
            sum_xx += x * x;
            sum_yy += y * y;
        }
        let corr = sum_xy / (sum_xx * sum_yy).sqrt();
        assert!((corr / (-1.0f64).exp() - 1.0).abs() < 0.1, "corr {corr}");
    }

    #[test]
    fn ou_modfreq_path_starts_at_zero_and_varies() {
        let spec = ModFreqNoise::Ou { variance: 1e-4, tau_corr: 5.0, dt: Some(0.05) };
        let mut rng = RngStream::new(1, 0).rng(Channel::ModulationFrequency);
        let path = sample_modfreq_path(&spec, &small_meas(200), &mut rng).unwrap();
        assert_eq!(path[0], 0.0);
        assert!(path[199] != 0.0);
    }

    #[test]
    fn jitter_examples() {
        let mut rng = RngStream::new(1, 0).rng(Channel::CycleJitter);
        let zero = CycleJitter { std_dev: 0.0, correlation: JitterCorrelation::Iid };
        assert!(sample_cycle_jitter(&zero, 50, &mut rng).iter().all(|&t| t == 0.0));

        let spec = CycleJitter { std_dev: 0.5, correlation: JitterCorrelation::Iid };
        let taus = sample_cycle_jitter(&spec, 100_000, &mut rng);
        let increments: Vec<f64> = std::iter::once(taus[0]).chain(taus.windows(2).map(|w| w[1] - w[0])).collect();
        let (mean, var) = mean_var(&increments);
        assert!(mean.abs() < 3.0 * (var / 1e5).sqrt());

        // Lag-one increment correlation of an iid sequence: |r| < 3 / sqrt(N).
        let lag: f64 = increments.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>()
            / (var * (increments.len() - 1) as f64);
        assert!(lag.abs() < 3.0 / (1e5f64).sqrt(), "lag correlation {lag}");

        let at_k: Vec<f64> = (0..2_000)
            .map(|r| {
                let mut rng = RngStream::new(8, r).rng(Channel::CycleJitter);
                sample_cycle_jitter(&spec, 40, &mut rng)[39]
            })
            .collect();
        let (_, var) = mean_var(&at_k);
        assert!((var / (40.0 * 0.25) - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn gaussian_qubit_noise_limits() {
        let meas = small_meas(64);
        let zero = OuParams { variance: 0.0, tau_corr: 1.0, dt: None };
        let mut rng = RngStream::new(1, 0).rng(Channel::QubitGaussian);
        assert!(sample_gaussian_qubit_noise(&zero, &meas, &mut rng).unwrap().iter().all(|&t| t == 0.0));

        // Frozen-noise limit: Var(theta) -> D t_R^2 for tau_corr >> t_R.
        let ou = OuParams { variance: 0.04, tau_corr: 1e3, dt: Some(0.05) };
        let meas = small_meas(2);
        let samples: Vec<f64> = (0..4_000)
            .map(|r| {
                let mut rng = RngStream::new(6, r).rng(Channel::QubitGaussian);
                sample_gaussian_qubit_noise(&ou, &meas, &mut rng).unwrap()[0]
            })
            .collect();
        let (_, var) = mean_var(&samples);
        assert!((var / 0.04 - 1.0).abs() < 0.1, "var {var}");

        // Gaussian identity <e^{i theta}> = exp(-Var/2).
        let cosines: Vec<f64> = samples.iter().map(|t| t.cos()).collect();
        let (mean_cos, var_cos) = mean_var(&cosines);
        let se = (var_cos / cosines.len() as f64).sqrt();
        assert!((mean_cos - (-0.5 * var).exp()).abs() < 3.0 * se);
    }
}
