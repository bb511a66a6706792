//! Recovery of modulation parameters from measured spectra: resonant peak
//! fits, broadened-peak widths and tail exponents.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::TAU;

use crate::analytic::{coherent_record_kernel, peak_bracket, CoherenceFactor};
use crate::bessel::{bessel_j, bessel_j_derivative, first_maximum};
use crate::error::FitError;
use crate::estimation::{median_floor, peak_area, PowerSpectrum};

// ── Bounded Levenberg-Marquardt ─────────────────────────────────────

struct Solution {
    x: Vec<f64>,
    residuals: DVector<f64>,
    jacobian: DMatrix<f64>,
    iterations: usize,
    converged: bool,
}

/// Minimizes `|r(x)|^2` inside the box `[lower, upper]`.
fn levenberg_marquardt(
    residuals: &dyn Fn(&[f64]) -> DVector<f64>,
    jacobian: &dyn Fn(&[f64]) -> DMatrix<f64>,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_iterations: usize,
    tolerance: f64,
) -> Solution {
    let clamp = |x: &mut Vec<f64>| {
        for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let mut r = residuals(&x);
    let mut cost = r.norm_squared();
    let mut j = jacobian(&x);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let mut gradient = j.transpose() * &r;
        // Parameters pinned at a bound by the descent direction are frozen.
        let pinned: Vec<bool> = (0..x.len())
            .map(|i| (x[i] <= lower[i] && gradient[i] > 0.0) || (x[i] >= upper[i] && gradient[i] < 0.0))
            .collect();
        for (i, &p) in pinned.iter().enumerate() {
            if p {
                gradient[i] = 0.0;
            }
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..x.len() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            for (i, &p) in pinned.iter().enumerate() {
                if p {
                    a.row_mut(i).fill(0.0);
                    a.column_mut(i).fill(0.0);
                    a[(i, i)] = 1.0;
                }
            }
            let Some(step) = a.lu().solve(&(-&gradient)) else {
                lambda *= 10.0;
                continue;
            };
            let mut candidate: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut candidate);
            let r_new = residuals(&candidate);
            let cost_new = r_new.norm_squared();
            if cost_new.is_finite() && cost_new <= cost {
                let moved: f64 = candidate.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let scale: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt() + tolerance;
                x = candidate;
                r = r_new;
                let relative_gain = (cost - cost_new) / cost.max(f64::MIN_POSITIVE);
                cost = cost_new;
                j = jacobian(&x);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if moved <= tolerance * scale || relative_gain < 1e-15 || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction left: the iterate is stationary.
            converged = true;
        }
        if converged {
            break;
        }
    }
    Solution { x, residuals: r, jacobian: j, iterations, converged }
}

/// One-sigma standard errors `sqrt(diag(s^2 (J^T J)^-1))` with `s^2 = |r|^2 / (n - p)`.
fn standard_errors(jacobian: &DMatrix<f64>, residuals: &DVector<f64>) -> Vec<f64> {
    let (n, p) = jacobian.shape();
    let dof = n.saturating_sub(p).max(1) as f64;
    let s2 = residuals.norm_squared() / dof;
    match (jacobian.transpose() * jacobian).try_inverse() {
        Some(inv) => (0..p).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect(),
        None => vec![f64::INFINITY; p],
    }
}

fn central_difference(f: &dyn Fn(&[f64]) -> DVector<f64>, x: &[f64], rows: usize) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(rows, x.len());
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1e-3);
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let d = (f(&plus) - f(&minus)) / (2.0 * h);
        jac.set_column(i, &d);
    }
    jac
}

// ── Amplitude from peak area ─────────────────────────────────────────

/// Solves `J_ell^2(A) = weight` for `A` on the first Bessel lobe.
pub fn invert_bessel_weight(ell: u32, weight: f64) -> Result<f64, FitError> {
    let top = first_maximum(ell)?;
    let peak = bessel_j(ell, top)?.powi(2);
    if !(weight >= 0.0) || weight > peak {
        return Err(FitError::AmbiguousAmplitude { ell, area: weight });
    }
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bessel_j(ell, mid)?.powi(2) < weight {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Amplitude from the integrated area (in spectrum units times bins) of
/// the `ell`th peak: `area = N J_ell^2(A) bracket / 8`.
pub fn amplitude_from_area(ell: u32, area: f64, n: usize, bracket: f64) -> Result<f64, FitError> {
    invert_bessel_weight(ell, 8.0 * area / (n as f64 * bracket))
        .map_err(|_| FitError::AmbiguousAmplitude { ell, area })
}

// ── Resonant peak fit ─────────────────────────────────────────────────

/// Known measurement parameters the spectrum was taken with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumContext {
    pub t_cycle: f64,
    pub phi_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakFitOptions {
    pub ell: u32,
    /// Bins fitted on each side of the peak.
    pub points_per_side: usize,
    /// Bins around the peak left out of the fit.
    pub excluded: usize,
    /// Coherence factor used in the parity bracket.
    pub coherence: CoherenceFactor,
    /// Adds the mirror image at `-ell omega_p` to the model.
    pub include_mirror: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for PeakFitOptions {
    fn default() -> Self {
        Self {
            ell: 1,
            points_per_side: 4,
            excluded: 3,
            coherence: CoherenceFactor::ONE,
            include_mirror: true,
            max_iterations: 200,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakFitResult {
    pub omega_p: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// One-sigma standard errors of `(omega_p, amplitude, offset)`.
    pub std_errors: [f64; 3],
    pub omega_bounds: (f64, f64),
    pub amplitude_bounds: (f64, f64),
    pub residual_norm: f64,
    pub points_used: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// `sin^2(ell N u / 2) [1/sin^2((theta_m - ell u)/2) (+ mirror)]`, `u = omega t_cyc`,
/// and its derivative in `u`.
fn resonant_shape(theta: f64, n: f64, lu: f64, mirror: bool) -> (f64, f64) {
    let s_half = (0.5 * n * lu).sin();
    let num = s_half * s_half;
    let dnum = 0.5 * n * (n * lu).sin();
    let (a, b) = (0.5 * (theta - lu), 0.5 * (theta + lu));
    let mut g = 1.0 / a.sin().powi(2);
    let mut dg = a.cos() / a.sin().powi(3);
    if mirror {
        g += 1.0 / b.sin().powi(2);
        dg -= b.cos() / b.sin().powi(3);
    }
    (num * g, dnum * g + num * dg)
}

/// Offset (in bins, within one bin) of the resonance that best explains
/// `observed` when the peak weight and floor are solved for linearly.
/// `sin^2(ell N u / 2)` vanishes on every bin, so the nominal bin itself is
/// a stationary point and cannot seed a gradient method.
fn seed_resonance(thetas: &[f64], observed: &[f64], n: f64, lu_per_bin: f64, lu0: f64, mirror: bool) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for step in -200..=200 {
        let offset = step as f64 / 200.0;
        let shapes: Vec<f64> = thetas.iter().map(|&t| resonant_shape(t, n, lu0 + offset * lu_per_bin, mirror).0).collect();
        let k = shapes.len() as f64;
        let (ms, my) = (shapes.iter().sum::<f64>() / k, observed.iter().sum::<f64>() / k);
        let sxx: f64 = shapes.iter().map(|x| (x - ms).powi(2)).sum();
        if !(sxx > 0.0) {
            continue;
        }
        let slope = shapes.iter().zip(observed).map(|(x, y)| (x - ms) * (y - my)).sum::<f64>() / sxx;
        if slope <= 0.0 {
            continue;
        }
        let cost: f64 = shapes.iter().zip(observed).map(|(x, y)| (my + slope * (x - ms) - y).powi(2)).sum();
        if cost < best.0 {
            best = (cost, offset);
        }
    }
    best.1
}

/// Fits `S(m) = bracket J_ell^2(A) shape(m; omega) / 8N + c` to the bins
/// around `m_peak`, skipping the `excluded` bins nearest to it.
pub fn fit_peak(
    ps: &PowerSpectrum,
    m_peak: usize,
    context: SpectrumContext,
    options: PeakFitOptions,
) -> Result<PeakFitResult, FitError> {
    let n = ps.n();
    let nf = n as f64;
    let ell = options.ell;
    let lf = ell as f64;
    let inner = options.excluded / 2 + 1;
    let outer = inner + options.points_per_side;
    if options.points_per_side == 0 {
        return Err(FitError::TooFewPoints(0));
    }
    if m_peak < outer + 1 || m_peak + outer > n / 2 {
        return Err(FitError::DegenerateWindow { m: m_peak });
    }
    let points: Vec<usize> = (m_peak - outer + 1..=m_peak - inner).chain(m_peak + inner..m_peak + outer).collect();
    if points.len() < 4 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    let bracket = peak_bracket(ell as i32, options.coherence, context.phi_r);

    // Starting values and bounds.
    let bin_omega = TAU / (nf * context.t_cycle);
    let omega0 = m_peak as f64 * bin_omega / lf;
    let omega_bounds = (omega0 - bin_omega, omega0 + bin_omega);
    let reach = ((m_peak as f64 / lf) * 0.5).floor().max(outer as f64) as usize;
    let floor0 = median_floor(ps, &[m_peak], reach);
    let area = peak_area(ps, m_peak, reach, floor0);
    let amplitude0 = amplitude_from_area(ell, area, n, bracket)?;
    let amplitude_bounds = (0.5 * amplitude0, 1.5 * amplitude0);

    // Normalized parameters: omega in bins, amplitude relative, offset in floor units.
    let c_scale = floor0.abs().max(1e-12);
    let to_physical = |p: &[f64]| (omega0 + p[0] * bin_omega, amplitude0 * (1.0 + p[1]), p[2] * c_scale);
    let thetas: Vec<f64> = points.iter().map(|&m| TAU * m as f64 / nf).collect();
    let observed = DVector::from_iterator(points.len(), points.iter().map(|&m| ps.values[m]));

    let model = |p: &[f64]| -> Result<(DVector<f64>, DMatrix<f64>), FitError> {
        let (omega, amp, c) = to_physical(p);
        let lu = lf * omega * context.t_cycle;
        let j = bessel_j(ell, amp)?;
        let dj = bessel_j_derivative(ell, amp)?;
        let weight = bracket / (8.0 * nf);
        let mut values = DVector::zeros(points.len());
        let mut jac = DMatrix::zeros(points.len(), 3);
        for (i, &theta) in thetas.iter().enumerate() {
            let (shape, dshape) = resonant_shape(theta, nf, lu, options.include_mirror);
            values[i] = weight * j * j * shape + c;
            jac[(i, 0)] = weight * j * j * dshape * lf * context.t_cycle * bin_omega;
            jac[(i, 1)] = weight * 2.0 * j * dj * shape * amplitude0;
            jac[(i, 2)] = c_scale;
        }
        Ok((values, jac))
    };
    // Validate the model once so evaluation errors surface before the loop.
    model(&[0.0, 0.0, 1.0])?;
    let residuals = |p: &[f64]| model(p).map(|(v, _)| v - &observed).unwrap_or_else(|_| DVector::from_element(points.len(), f64::INFINITY));
    let jacobian = |p: &[f64]| model(p).map(|(_, j)| j).unwrap_or_else(|_| DMatrix::zeros(points.len(), 3));
    let lower = [-1.0, -0.5, 0.0];
    let upper = [1.0, 0.5, f64::INFINITY];
    let start = seed_resonance(&thetas, observed.as_slice(), nf, lf * context.t_cycle * bin_omega, lf * context.t_cycle * omega0, options.include_mirror);
    let solution = levenberg_marquardt(&residuals, &jacobian, &[start, 0.0, 1.0], &lower, &upper, options.max_iterations, options.tolerance);
    if !solution.converged {
        return Err(FitError::NotConverged { iterations: solution.iterations });
    }
    let (omega_p, amplitude, offset) = to_physical(&solution.x);
    let se = standard_errors(&solution.jacobian, &solution.residuals);
    Ok(PeakFitResult {
        omega_p,
        amplitude,
        offset,
        std_errors: [se[0] * bin_omega, se[1] * amplitude0, se[2] * c_scale],
        omega_bounds,
        amplitude_bounds,
        residual_norm: solution.residuals.norm(),
        points_used: points,
        iterations: solution.iterations,
        converged: solution.converged,
    })
}

// ── Broadened peak width ─────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthFitOptions {
    pub ell: u32,
    /// Bins on each side of the peak included in the fit.
    pub half_window: usize,
    /// Fit `ln S` instead of `S`.
    pub log_scale: bool,
    pub include_mirror: bool,
    pub max_iterations: usize,
}

impl Default for WidthFitOptions {
    fn default() -> Self {
        Self { ell: 1, half_window: 12, log_scale: true, include_mirror: true, max_iterations: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidthFitResult {
    /// Per-cycle half-width `Gamma_ell`.
    pub gamma: f64,
    /// Fitted peak value at the resonance, above the floor.
    pub height: f64,
    /// Fitted `bracket J_ell^2`, the peak weight.
    pub weight: f64,
    pub centre_omega: f64,
    pub offset: f64,
    pub gamma_std_error: f64,
    /// `Gamma_ell N / 2 pi < 1`: the width is narrower than one bin and is
    /// inferred from the finite-record line shape rather than resolved.
    pub below_bin_resolution: bool,
    pub points_used: Vec<usize>,
    pub converged: bool,
}

/// Fits the finite-record broadened profile
/// `weight / 8N sum_{|d|<N} (N - |d|) exp(-Gamma |d| + i delta d) + c`
/// (a Lorentzian of half-width `Gamma` once `Gamma N >> 1`) around `m_peak`.
pub fn fit_lorentzian_width(
    ps: &PowerSpectrum,
    m_peak: usize,
    context: SpectrumContext,
    options: WidthFitOptions,
) -> Result<WidthFitResult, FitError> {
    let n = ps.n();
    let nf = n as f64;
    let lf = options.ell as f64;
    let w = options.half_window;
    if w < 3 {
        return Err(FitError::TooFewPoints(2 * w + 1));
    }
    if m_peak <= w || m_peak + w > n / 2 {
        return Err(FitError::DegenerateWindow { m: m_peak });
    }
    let points: Vec<usize> = (m_peak - w..=m_peak + w).collect();
    let floor0 = median_floor(ps, &[m_peak], (m_peak as f64 / (2.0 * lf)).floor() as usize);
    let bin_omega = TAU / (nf * context.t_cycle);
    let omega0 = m_peak as f64 * bin_omega / lf;
    let area = peak_area(ps, m_peak, w, floor0).max(1e-300);
    let weight0 = 8.0 * area / nf;
    let gamma0 = TAU / nf;

    // Parameters: centre offset in bins, ln(weight / weight0), ln(gamma / gamma0), c / floor0.
    let c_scale = floor0.abs().max(1e-12);
    let to_physical = |p: &[f64]| (omega0 + p[0] * bin_omega / lf, weight0 * p[1].exp(), gamma0 * p[2].exp(), p[3] * c_scale);
    let transform = |v: f64| if options.log_scale { v.max(1e-300).ln() } else { v };
    let observed: Vec<f64> = points.iter().map(|&m| transform(ps.values[m])).collect();
    let predict = |p: &[f64], m: usize| {
        let (omega, weight, gamma, c) = to_physical(p);
        let lu = lf * omega * context.t_cycle;
        let theta = TAU * m as f64 / nf;
        let mut kernel = coherent_record_kernel(n, gamma, theta - lu);
        if options.include_mirror {
            kernel += coherent_record_kernel(n, gamma, theta + lu);
        }
        weight / (8.0 * nf) * kernel + c
    };
    let residuals = |p: &[f64]| {
        DVector::from_iterator(points.len(), points.iter().zip(&observed).map(|(&m, &y)| transform(predict(p, m)) - y))
    };
    let jacobian = |p: &[f64]| central_difference(&residuals, p, points.len());
    let lower = [-1.5, -5.0, -12.0, 0.0];
    let upper = [1.5, 5.0, 6.0, 20.0];
    let solution = levenberg_marquardt(&residuals, &jacobian, &[0.0, 0.0, 0.0, 1.0], &lower, &upper, options.max_iterations, 1e-10);
    if !solution.converged {
        return Err(FitError::NotConverged { iterations: solution.iterations });
    }
    let (centre_omega, weight, gamma, offset) = to_physical(&solution.x);
    let se = standard_errors(&solution.jacobian, &solution.residuals);
    let height = predict(&solution.x, m_peak) - offset;
    Ok(WidthFitResult {
        gamma,
        height,
        weight,
        centre_omega,
        offset,
        gamma_std_error: gamma * se[2],
        below_bin_resolution: gamma * nf / TAU < 1.0,
        points_used: points,
        converged: solution.converged,
    })
}

// ── Tail exponent ─────────────────────────────────────────────────────

/// Least-squares slope of `ln(S(m) - background)` against `ln |epsilon|`,
/// `epsilon = 2 pi (m - resonance) / N`, over `bins`.
pub fn tail_exponent(ps: &PowerSpectrum, resonance: f64, bins: &[usize], background: f64) -> Result<f64, FitError> {
    let nf = ps.n() as f64;
    let pairs: Vec<(f64, f64)> = bins
        .iter()
        .filter_map(|&m| {
            let excess = ps.values[m] - background;
            let eps = (TAU * (m as f64 - resonance) / nf).abs();
            (excess > 0.0 && eps > 0.0).then(|| (eps.ln(), excess.ln()))
        })
        .collect();
    if pairs.len() < 3 {
        return Err(FitError::TooFewPoints(pairs.len()));
    }
    let k = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
