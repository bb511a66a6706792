//! Simulation through estimation and fitting at reduced scale.

use std::f64::consts::{FRAC_PI_2, TAU};

use ramsey_probe::estimation::{detect_peaks, median_floor, simulate_power_spectrum, DetectOptions};
use ramsey_probe::fit::{fit_peak, tail_exponent, PeakFitOptions, SpectrumContext};
use ramsey_probe::simulator::NoiseSpec;
use ramsey_probe::{MeasurementConfig, ModulationConfig, PhaseMode};

#[test]
fn simulated_tail_decays_as_inverse_square() {
    let meas = MeasurementConfig { phi_r: FRAC_PI_2, repetitions: 400, ..Default::default() };
    let ps = simulate_power_spectrum(&meas, &ModulationConfig::default(), &NoiseSpec::default(), 71, None).unwrap();
    let resonance = meas.n_outcomes as f64 * 1e-3 * meas.t_cycle / TAU;
    let floor = median_floor(&ps, &[48, 95, 143], 10);
    let bins: Vec<usize> = (38..=44).chain(52..=58).collect();
    let slope = tail_exponent(&ps, resonance, &bins, floor).unwrap();
    assert!((-2.3..=-1.7).contains(&slope), "slope {slope}");
}

#[test]
fn random_phase_runs_show_the_same_peaks() {
    let meas = MeasurementConfig { n_outcomes: 20_000, repetitions: 100, phi_r: 0.6, ..Default::default() };
    let modulation = ModulationConfig { omega: 5e-3, phase_mode: PhaseMode::UniformRandomPerRun, ..Default::default() };
    let ps = simulate_power_spectrum(&meas, &modulation, &NoiseSpec::default(), 72, None).unwrap();
    let peaks: Vec<usize> = detect_peaks(&ps, DetectOptions::default(), None)
        .unwrap()
        .iter()
        .map(|p| p.m_peak)
        .filter(|&m| m < 120)
        .collect();
    assert_eq!(peaks, vec![48, 95]);
}

#[test]
fn standard_errors_shrink_as_inverse_root_k() {
    // A shorter record with a faster drive keeps the first overtone at bin ~48.
    let modulation = ModulationConfig { omega: 1e-2, ..Default::default() };
    let ctx = SpectrumContext { t_cycle: 3.0, phi_r: FRAC_PI_2 };
    let replicas = 12;
    // Each fit estimates its scatter from five residual degrees of freedom,
    // so errors are pooled in quadrature over replicas.
    let pooled_se = |k: usize| -> [f64; 2] {
        let mut acc = [0.0; 2];
        for r in 0..replicas {
            let meas = MeasurementConfig { n_outcomes: 10_000, repetitions: k, phi_r: FRAC_PI_2, ..Default::default() };
            let ps = simulate_power_spectrum(&meas, &modulation, &NoiseSpec::default(), 1000 * k as u64 + r, None).unwrap();
            let fit = fit_peak(&ps, 48, ctx, PeakFitOptions::default()).unwrap();
            acc[0] += fit.std_errors[0].powi(2) / replicas as f64;
            acc[1] += fit.std_errors[1].powi(2) / replicas as f64;
        }
        acc.map(f64::sqrt)
    };
    let se: Vec<[f64; 2]> = [100, 400, 1600].iter().map(|&k| pooled_se(k)).collect();
    for pair in se.windows(2) {
        for p in 0..2 {
            let ratio = pair[0][p] / pair[1][p];
            assert!((ratio / 2.0 - 1.0).abs() <= 0.3, "parameter {p}: ratio {ratio}");
        }
    }
}
