//! Closed-form spectral predictions: resonant peak profiles, the white
//! measurement-noise floor, coherence factors for TLS and Gaussian noise,
//! the noise-induced background, Lorentzian broadening and the tunable
//! Fourier transform.
//!
//! Frequencies on the spectral axis are expressed per cycle:
//! `2 pi m / N` for bin `m`, and `omega_p t_cyc` for the modulation.

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_4, PI, TAU};

use crate::bessel::{bessel_j, bessel_j_signed};
use crate::error::AnalyticError;
use crate::noise::{CycleJitter, ModFreqNoise, OuParams, TlsEnsemble};

/// Bins closer than this to an exact resonance use the delta-area value.
const RESONANCE_TOLERANCE: f64 = 1e-9;
const SINGULAR_DENOMINATOR: f64 = 1e-30;

/// Wraps an angle to `(-pi, pi]`.
fn wrap(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Noise-averaged phase factor `<exp(i theta^(r))> = exp(-R + i Theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceFactor {
    pub value: Complex64,
}

impl CoherenceFactor {
    pub const ONE: CoherenceFactor = CoherenceFactor { value: Complex64 { re: 1.0, im: 0.0 } };

    pub fn new(value: Complex64) -> Self {
        Self { value }
    }

    pub fn magnitude(&self) -> f64 {
        self.value.norm()
    }

    /// `R` in `|value| = exp(-R)`.
    pub fn decay(&self) -> f64 {
        -self.value.norm().ln()
    }

    /// `Theta^(r)`.
    pub fn phase(&self) -> f64 {
        self.value.arg()
    }
}

// ── Resonant peaks ───────────────────────────────────────────────────

/// Frequency-domain detuning of bin `m` from overtone `ell`, per cycle.
pub fn detuning(ell: i32, m: f64, n: usize, omega_t_cycle: f64) -> f64 {
    wrap(TAU * m / n as f64 - ell as f64 * omega_t_cycle)
}

/// Delta-limit weight `(pi / 4) J_ell^2(A_p)` of the `ell`th peak.
pub fn delta_area(ell: i32, amplitude: f64) -> Result<f64, AnalyticError> {
    Ok(FRAC_PI_4 * bessel_j_signed(ell, amplitude)?.powi(2))
}

/// Finite-`N` peak profile
/// `Q_ell(m) = J_ell^2(A_p) sin^2(ell N x / 2) / (8 N sin^2[(2 pi m / N - ell x) / 2])`
/// with `x = omega_p t_cyc`.
pub fn peak_profile_q(ell: i32, m: f64, n: usize, amplitude: f64, omega_t_cycle: f64) -> Result<f64, AnalyticError> {
    let j = bessel_j_signed(ell, amplitude)?;
    let nf = n as f64;
    let denominator = (0.5 * (TAU * m / nf - ell as f64 * omega_t_cycle)).sin().powi(2);
    if denominator < SINGULAR_DENOMINATOR {
        return Err(AnalyticError::Resonance { ell, m });
    }
    let numerator = (0.5 * ell as f64 * nf * omega_t_cycle).sin().powi(2);
    Ok(j * j * numerator / (8.0 * nf * denominator))
}

/// `Q_ell(m)`, replaced by the delta-area value `N J^2 / 8` when `m` lies
/// within `1e-9` bins of the resonance.
pub fn peak_profile_or_delta(ell: i32, m: f64, n: usize, amplitude: f64, omega_t_cycle: f64) -> Result<f64, AnalyticError> {
    let offset_bins = detuning(ell, m, n, omega_t_cycle) * n as f64 / TAU;
    if offset_bins.abs() < RESONANCE_TOLERANCE {
        return Ok(n as f64 / TAU * delta_area(ell, amplitude)?);
    }
    match peak_profile_q(ell, m, n, amplitude, omega_t_cycle) {
        Err(AnalyticError::Resonance { .. }) => Ok(n as f64 / TAU * delta_area(ell, amplitude)?),
        other => other,
    }
}

/// Parity/coherence bracket `|cf|^2 + (-1)^ell Re[cf^2 exp(2 i phi_R)]`.
pub fn peak_bracket(ell: i32, cf: CoherenceFactor, phi_r: f64) -> f64 {
    let sign = if ell.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    cf.value.norm_sqr() + sign * (cf.value * cf.value * Complex64::from_polar(1.0, 2.0 * phi_r)).re
}

/// Spectral peak `S(m | ell) = Q_ell(m) * bracket`.
pub fn spectral_peak(
    ell: i32,
    m: f64,
    n: usize,
    amplitude: f64,
    omega_t_cycle: f64,
    cf: CoherenceFactor,
    phi_r: f64,
) -> Result<f64, AnalyticError> {
    Ok(peak_profile_q(ell, m, n, amplitude, omega_t_cycle)? * peak_bracket(ell, cf, phi_r))
}

/// White measurement-noise floor `(1/8)[1 - J_0(2 A_p) Re(cf2 exp(2 i phi_R))]`,
/// where `cf2 = <exp(2 i theta^(r))>`.
pub fn white_floor(amplitude: f64, phi_r: f64, cf2: Complex64) -> Result<f64, AnalyticError> {
    let j0 = bessel_j(0, 2.0 * amplitude)?;
    Ok(0.125 * (1.0 - j0 * (cf2 * Complex64::from_polar(1.0, 2.0 * phi_r)).re))
}

// ── Coherence factors ────────────────────────────────────────────────

/// `<exp(i q theta^(r))>` for independent TLSs, exact in `t_R`.
///
/// `q = 2` gives `<exp(2 i theta^(r))>` by doubling every coupling.
pub fn tls_coherence_factor(ensemble: &TlsEnsemble, t_ramsey: f64, multiplier: u32) -> CoherenceFactor {
    let q = multiplier as f64;
    let i = Complex64::i();
    let value = ensemble.iter().fold(Complex64::new(1.0, 0.0), |acc, tls| {
        let v = q * tls.coupling;
        let w = tls.total_rate();
        let dw = tls.asymmetry();
        let gamma = 0.5 * (w * w + 4.0 * i * v * (dw + i * v)).sqrt();
        let gamma = if gamma.re < 0.0 { -gamma } else { gamma };
        let gt = gamma * t_ramsey;
        // sinh(g t)/g stays finite as g -> 0.
        let sinh_over_gamma = if gt.norm() < 1e-8 { Complex64::new(t_ramsey, 0.0) } else { gt.sinh() / gamma };
        let xi = ((0.5 * w + i * v * dw / w) * sinh_over_gamma + gt.cosh()) * (-0.5 * w * t_ramsey).exp();
        acc * Complex64::from_polar(1.0, -v * t_ramsey * dw / w) * xi
    });
    CoherenceFactor::new(value)
}

/// Short-`t_R` expansion of the TLS coherence factor through third order.
pub fn tls_small_tr_expansion(ensemble: &TlsEnsemble, t_ramsey: f64) -> Complex64 {
    let (t2, t3) = (t_ramsey.powi(2), t_ramsey.powi(3));
    ensemble.iter().fold(Complex64::new(1.0, 0.0), |acc, tls| {
        let w2v2 = tls.symmetry_factor().powi(2) * tls.coupling.powi(2);
        let third = Complex64::new(0.5 * tls.total_rate(), tls.coupling * tls.asymmetry() / tls.total_rate());
        acc - 0.5 * w2v2 * t2 + w2v2 * third * t3 / 3.0
    })
}

/// `<exp(i theta^(r))> = exp(-R)` for zero-mean Gaussian phase noise.
pub fn gaussian_coherence_factor(decay: f64) -> CoherenceFactor {
    CoherenceFactor::new(Complex64::new((-decay).exp(), 0.0))
}

/// `(F_+, F_-) = (exp(-2R - f), exp(-2R + f))` for Gaussian noise.
pub fn gaussian_f_pm(decay: f64, correlation: f64) -> (f64, f64) {
    ((-2.0 * decay - correlation).exp(), (-2.0 * decay + correlation).exp())
}

/// `Var(theta)` over a window of length `t_ramsey` for OU frequency noise.
pub fn ou_window_phase_variance(ou: &OuParams, t_ramsey: f64) -> f64 {
    let x = t_ramsey / ou.tau_corr;
    2.0 * ou.variance * ou.tau_corr.powi(2) * (x - 1.0 + (-x).exp())
}

// ── Frequency-noise spectra ─────────────────────────────────────────

/// A stationary qubit-frequency noise, described by its power spectrum
/// `S_q(omega)` and autocorrelation `<dw(t) dw(0)>`.
pub trait FrequencyNoise {
    fn spectrum(&self, omega: f64) -> f64;
    fn autocorrelation(&self, t: f64) -> f64;
}

/// Telegraph noise of a TLS ensemble.
#[derive(Debug, Clone)]
pub struct TelegraphNoise<'a>(pub &'a TlsEnsemble);

impl FrequencyNoise for TelegraphNoise<'_> {
    fn spectrum(&self, omega: f64) -> f64 {
        telegraph_sq(self.0, omega)
    }

    fn autocorrelation(&self, t: f64) -> f64 {
        self.0
            .iter()
            .map(|tls| (tls.symmetry_factor() * tls.coupling).powi(2) * (-tls.total_rate() * t.abs()).exp())
            .sum()
    }
}

/// Exponentially correlated Gaussian noise.
#[derive(Debug, Clone, Copy)]
pub struct OuNoise(pub OuParams);

impl FrequencyNoise for OuNoise {
    fn spectrum(&self, omega: f64) -> f64 {
        let tau = self.0.tau_corr;
        2.0 * self.0.variance * tau / (1.0 + (omega * tau).powi(2))
    }

    fn autocorrelation(&self, t: f64) -> f64 {
        self.0.variance * (-t.abs() / self.0.tau_corr).exp()
    }
}

/// `S_q(omega) = sum_n 2 w^2 V^2 W / (W^2 + omega^2)`.
pub fn telegraph_sq(ensemble: &TlsEnsemble, omega: f64) -> f64 {
    ensemble
        .iter()
        .map(|tls| {
            let w = tls.total_rate();
            2.0 * (tls.symmetry_factor() * tls.coupling).powi(2) * w / (w * w + omega * omega)
        })
        .sum()
}

/// Phase correlator `f_{n1 n2} = (t_R^2 / 2 pi) int S_q(w) exp(-i w t_cyc (n1 - n2)) dw`,
/// evaluated through the autocorrelation it transforms to.
pub fn phase_correlator_f(noise: &dyn FrequencyNoise, t_ramsey: f64, t_cycle: f64, separation: i64) -> f64 {
    t_ramsey * t_ramsey * noise.autocorrelation(t_cycle * separation as f64)
}

/// Knobs `zeta_-` and `zeta_+` of the noise-induced background; both 1 for weak noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundOptions {
    pub zeta_minus: f64,
    pub zeta_plus: Complex64,
}

impl Default for BackgroundOptions {
    fn default() -> Self {
        Self { zeta_minus: 1.0, zeta_plus: Complex64::new(1.0, 0.0) }
    }
}

/// Smallest `L` with `J_L^2(A_p) < 1e-12` (`sum_l J_l^2 = 1`), capped at the
/// Bessel envelope.
pub fn overtone_cutoff(amplitude: f64) -> Result<u32, AnalyticError> {
    for ell in 0..=crate::bessel::MAX_ORDER {
        if ell as f64 > amplitude && bessel_j(ell, amplitude)?.powi(2) < 1e-12 {
            return Ok(ell);
        }
    }
    Ok(crate::bessel::MAX_ORDER)
}

/// Noise-induced background
/// `(t_R^2 / 8 t_cyc) sum_ell J_ell^2 [zeta_- - (-1)^ell Re zeta_+ e^{2 i phi_R}] S_q(2 pi m / (N t_cyc) - ell omega_p)`.
#[allow(clippy::too_many_arguments)]
pub fn background(
    m: f64,
    n: usize,
    amplitude: f64,
    omega_p: f64,
    phi_r: f64,
    t_ramsey: f64,
    t_cycle: f64,
    noise: &dyn FrequencyNoise,
    options: BackgroundOptions,
) -> Result<f64, AnalyticError> {
    let cutoff = overtone_cutoff(amplitude)? as i32;
    let rotated = (options.zeta_plus * Complex64::from_polar(1.0, 2.0 * phi_r)).re;
    // Fold the frequency into (-pi, pi] per cycle so the mirror half of the
    // spectrum is described by negative frequencies.
    let omega = wrap(TAU * m / n as f64) / t_cycle;
    let mut total = 0.0;
    for ell in -cutoff..=cutoff {
        let sign = if ell.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let weight = bessel_j_signed(ell, amplitude)?.powi(2) * (options.zeta_minus - sign * rotated);
        total += weight * noise.spectrum(omega - ell as f64 * omega_p);
    }
    Ok(t_ramsey * t_ramsey / (8.0 * t_cycle) * total)
}

// ── Broadening ───────────────────────────────────────────────────────

/// Lorentzian peak `(1/4) J_ell^2 Gamma / (Gamma^2 + delta^2)`.
pub fn lorentzian_peak(ell: i32, m: f64, n: usize, amplitude: f64, omega_t_cycle: f64, gamma: f64) -> Result<f64, AnalyticError> {
    let j2 = bessel_j_signed(ell, amplitude)?.powi(2);
    let delta = detuning(ell, m, n, omega_t_cycle);
    Ok(0.25 * j2 * gamma / (gamma * gamma + delta * delta))
}

/// Peak profile of a finite record whose phase coherence decays as
/// `exp(-Gamma |n1 - n2|)`:
/// `(J^2 / 8N) sum_{|d|<N} (N - |d|) exp(-Gamma |d| + i delta d)`.
///
/// Tends to `Q_ell(m)` as `Gamma -> 0` and to the Lorentzian as `N -> inf`.
pub fn broadened_peak_profile(
    ell: i32,
    m: f64,
    n: usize,
    amplitude: f64,
    omega_t_cycle: f64,
    gamma: f64,
) -> Result<f64, AnalyticError> {
    let j2 = bessel_j_signed(ell, amplitude)?.powi(2);
    let delta = detuning(ell, m, n, omega_t_cycle);
    Ok(j2 / (8.0 * n as f64) * coherent_record_kernel(n, gamma, delta))
}

/// `sum_{|d|<N} (N - |d|) exp(-gamma |d| + i delta d)`, in closed form.
pub(crate) fn coherent_record_kernel(n: usize, gamma: f64, delta: f64) -> f64 {
    let nf = n as f64;
    let z = Complex64::new(-gamma, delta);
    if z.norm() * nf < 1e-3 {
        // Taylor expansion around z = 0 through second order.
        let d1: f64 = (1..n).map(|d| (nf - d as f64) * d as f64).sum();
        let d2: f64 = (1..n).map(|d| (nf - d as f64) * (d as f64).powi(2)).sum();
        let s = d1 * z + 0.5 * d2 * z * z;
        return nf + 2.0 * s.re;
    }
    // sum_{d=0}^{N-1} (N - d) q^d = [N (1 - q) - q (1 - q^N)] / (1 - q)^2,
    // written with expm1 to stay accurate for q close to 1.
    let one_minus_q = -z.exp_m1();
    let q = Complex64::new(1.0, 0.0) - one_minus_q;
    let one_minus_qn = -(z * nf).exp_m1();
    let tail = (nf * one_minus_q - q * one_minus_qn) / (one_minus_q * one_minus_q) - nf;
    nf + 2.0 * tail.re
}

trait ExpM1 {
    fn exp_m1(self) -> Self;
}

impl ExpM1 for Complex64 {
    /// `exp(z) - 1` without cancellation for small `|z|`.
    fn exp_m1(self) -> Self {
        // exp(a + ib) - 1 = (e^a - 1) cos b + (cos b - 1) + i e^a sin b
        let (a, b) = (self.re, self.im);
        let em1 = a.exp_m1();
        let cos_m1 = -2.0 * (0.5 * b).sin().powi(2);
        Complex64::new(em1 * b.cos() + cos_m1, a.exp() * b.sin())
    }
}

/// Per-cycle half-width `Gamma_ell` from modulation-frequency noise:
/// `(1/2) ell^2 t_cyc int Xi(t) dt`.
pub fn gamma_ell(spec: &ModFreqNoise, t_cycle: f64, ell: i32) -> f64 {
    let integral = match *spec {
        ModFreqNoise::None => 0.0,
        ModFreqNoise::White { intensity, .. } => intensity,
        ModFreqNoise::Ou { variance, tau_corr, .. } => 2.0 * variance * tau_corr,
    };
    0.5 * (ell as f64).powi(2) * t_cycle * integral
}

/// Per-cycle half-width `Gamma~_ell = (1/2) ell^2 omega_p^2 sum_k T(k)` from
/// uncorrelated cycle-duration jitter.
pub fn gamma_tilde_ell(jitter: &CycleJitter, omega_p: f64, ell: i32) -> f64 {
    0.5 * (ell as f64).powi(2) * omega_p.powi(2) * jitter.std_dev.powi(2)
}

// ── Tunable Fourier transform ───────────────────────────────────────

/// Expected `|Y(nu; M)|` near the first overtone.
///
/// Without `gamma` this is the noise-free Dirichlet form; with `gamma` the
/// phase coherence decays as `exp(-gamma n)` and the response saturates.
pub fn tunable_ft_analytic(
    nu: f64,
    partial: usize,
    n: usize,
    amplitude: f64,
    phi_r: f64,
    omega_t_cycle: f64,
    gamma: Option<f64>,
) -> Result<f64, AnalyticError> {
    let prefactor = (phi_r.sin() / (2.0 * n as f64) * bessel_j(1, amplitude)?).abs();
    let delta = nu - omega_t_cycle;
    let mf = partial as f64;
    let shape = match gamma {
        Some(g) if g > 0.0 => {
            let decay = (-g * mf).exp();
            let numerator = (1.0 + decay * decay - 2.0 * decay * (mf * delta).cos()).max(0.0).sqrt();
            numerator / (g * g + delta * delta).sqrt()
        }
        _ => {
            let s = (0.5 * delta).sin();
            if s.abs() < 1e-300 {
                mf
            } else {
                ((0.5 * delta * mf).sin() / s).abs()
            }
        }
    };
    Ok(prefactor * shape)
}

// ── Total spectrum ───────────────────────────────────────────────────

/// How resonant peaks are drawn in [`total_spectrum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeakRendering {
    /// Finite-`N` profile `Q_ell(m)`, delta area on exact resonance.
    Exact,
    /// Entire peak area `N J^2 / 8` in the bin nearest the resonance.
    DeltaArea,
    /// Lorentzians of per-cycle half-width `ell^2 gamma_1`.
    Lorentzian { gamma_1: f64 },
    /// Finite-record profile with coherence decaying at `ell^2 gamma_1` per cycle.
    Broadened { gamma_1: f64 },
}

/// Inputs of a spectral prediction.
#[derive(Clone, Copy)]
pub struct SpectrumModel<'a> {
    pub n: usize,
    pub t_ramsey: f64,
    pub t_cycle: f64,
    pub phi_r: f64,
    /// Effective amplitude `A_p`.
    pub amplitude: f64,
    pub omega_p: f64,
    /// `<exp(i theta^(r))>`.
    pub cf: CoherenceFactor,
    /// `<exp(2 i theta^(r))>`.
    pub cf2: Complex64,
    /// Stationary qubit-frequency noise, if any.
    pub noise: Option<&'a dyn FrequencyNoise>,
    pub background_options: BackgroundOptions,
    pub rendering: PeakRendering,
    pub peaks: bool,
    pub background: bool,
    pub white: bool,
}

impl<'a> SpectrumModel<'a> {
    /// Noise-free model with every component enabled.
    pub fn noiseless(n: usize, t_ramsey: f64, t_cycle: f64, phi_r: f64, amplitude: f64, omega_p: f64) -> Self {
        Self {
            n,
            t_ramsey,
            t_cycle,
            phi_r,
            amplitude,
            omega_p,
            cf: CoherenceFactor::ONE,
            cf2: Complex64::new(1.0, 0.0),
            noise: None,
            background_options: BackgroundOptions::default(),
            rendering: PeakRendering::Exact,
            peaks: true,
            background: true,
            white: true,
        }
    }
}

/// Predicted spectrum split into its components.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPrediction {
    pub n: usize,
    pub peaks: Vec<f64>,
    pub background: Vec<f64>,
    pub white: f64,
}

impl SpectrumPrediction {
    pub fn total(&self, m: usize) -> f64 {
        self.peaks[m] + self.background[m] + self.white
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.total(m)).collect()
    }
}

/// Sum of resonant peaks (both mirror images), background and white floor.
/// The DC bin carries only background and floor.
pub fn total_spectrum(model: &SpectrumModel<'_>) -> Result<SpectrumPrediction, AnalyticError> {
    let n = model.n;
    let x = model.omega_p * model.t_cycle;
    let mut peaks = vec![0.0; n];
    if model.peaks {
        let cutoff = overtone_cutoff(model.amplitude)? as i32;
        for ell in 1..=cutoff {
            let bracket = peak_bracket(ell, model.cf, model.phi_r);
            for sign in [1, -1] {
                let order = sign * ell;
                match model.rendering {
                    PeakRendering::DeltaArea => {
                        let position = (order as f64 * x / TAU * n as f64).rem_euclid(n as f64);
                        let bin = position.round() as usize % n;
                        peaks[bin] += n as f64 / TAU * delta_area(order, model.amplitude)? * bracket;
                    }
                    rendering => {
                        for (m, value) in peaks.iter_mut().enumerate().skip(1) {
                            let m = m as f64;
                            let q = match rendering {
                                PeakRendering::Exact => peak_profile_or_delta(order, m, n, model.amplitude, x)?,
                                PeakRendering::Lorentzian { gamma_1 } => {
                                    lorentzian_peak(order, m, n, model.amplitude, x, gamma_1 * (ell * ell) as f64)?
                                }
                                PeakRendering::Broadened { gamma_1 } => {
                                    broadened_peak_profile(order, m, n, model.amplitude, x, gamma_1 * (ell * ell) as f64)?
                                }
                                PeakRendering::DeltaArea => unreachable!(),
                            };
                            *value += q * bracket;
                        }
                    }
                }
            }
        }
    }
    let mut background = vec![0.0; n];
    if model.background {
        if let Some(noise) = model.noise {
            for (m, value) in background.iter_mut().enumerate() {
                *value = crate::analytic::background(
                    m as f64,
                    n,
                    model.amplitude,
                    model.omega_p,
                    model.phi_r,
                    model.t_ramsey,
                    model.t_cycle,
                    noise,
                    model.background_options,
                )?;
            }
        }
    }
    let white = if model.white { white_floor(model.amplitude, model.phi_r, model.cf2)? } else { 0.0 };
    Ok(SpectrumPrediction { n, peaks, background, white })
}
