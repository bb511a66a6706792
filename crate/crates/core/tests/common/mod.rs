#![allow(dead_code)]

use num_complex::Complex64;
use std::f64::consts::TAU;

/// `J_n(x) = (1/2 pi) int_0^{2 pi} cos(n t - x sin t) dt` by the trapezoid
/// rule, which converges geometrically for periodic integrands.
pub fn bessel_quadrature(n: u32, x: f64) -> f64 {
    let points = 1024;
    let h = TAU / points as f64;
    (0..points).map(|k| (n as f64 * k as f64 * h - x * (k as f64 * h).sin()).cos()).sum::<f64>() / points as f64
}

/// `O(N^2)` unitary DFT with the `exp(+2 pi i m n / N)` sign.
pub fn brute_force_dft(record: &[f64]) -> Vec<Complex64> {
    let n = record.len();
    (0..n)
        .map(|m| {
            record
                .iter()
                .enumerate()
                .map(|(k, &x)| Complex64::from_polar(x, TAU * ((m * k) % n) as f64 / n as f64))
                .sum::<Complex64>()
                / (n as f64).sqrt()
        })
        .collect()
}

/// Composite Simpson rule on `[a, b]` with `intervals` (even) pieces.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut sum = f(a) + f(b);
    for i in 1..intervals {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
