//! Averaged periodograms, tunable partial-sum transforms and peak detection.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

use crate::error::{EstimationError, NoiseError};
use crate::model::{MeasurementConfig, ModulationConfig};
use crate::noise::RngStream;
use crate::simulator::{run_sequence, with_parallelism, Experiment, NoiseSpec, OutcomeRun};

/// Runs summed sequentially before joining the running total. Even, so
/// runs pair up inside a chunk.
const CHUNK: usize = 32;
/// Chunks evaluated concurrently before folding into the total.
const WAVE: usize = 16;

/// `K`-averaged periodogram `S(m) = <|X(m)|^2>`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub values: Vec<f64>,
    pub repetitions: usize,
    /// Free-form identifier of the configuration that produced the data.
    pub fingerprint: Option<String>,
}

impl PowerSpectrum {
    pub fn n(&self) -> usize {
        self.values.len()
    }
}

/// Unitary-normalized DFT `X(m) = N^{-1/2} sum_n x_n exp(2 pi i m n / N)`.
pub fn dft(record: &[f64]) -> Vec<Complex64> {
    let n = record.len();
    let fft = FftPlanner::new().plan_fft(n, FftDirection::Inverse);
    let mut buffer: Vec<Complex64> = record.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.process(&mut buffer);
    let scale = 1.0 / (n as f64).sqrt();
    buffer.iter_mut().for_each(|z| *z *= scale);
    buffer
}

/// `|X(m)|^2` of one record.
pub fn periodogram(record: &[f64]) -> Vec<f64> {
    dft(record).iter().map(|z| z.norm_sqr()).collect()
}

/// Accumulates periodograms of equal-length 0/1 records.
pub struct SpectrumAccumulator {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    sum: Vec<f64>,
    count: usize,
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SpectrumAccumulator {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft(n, FftDirection::Inverse);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Self { n, fft, sum: vec![0.0; n], count: 0, buffer: vec![Complex64::default(); n], scratch }
    }

    fn check(&self, run: &OutcomeRun, index: usize) -> Result<(), EstimationError> {
        if run.len() != self.n {
            return Err(EstimationError::LengthMismatch { index, len: run.len(), expected: self.n });
        }
        Ok(())
    }

    /// Adds one run.
    pub fn push(&mut self, run: &OutcomeRun) -> Result<(), EstimationError> {
        self.check(run, self.count)?;
        for (n, z) in self.buffer.iter_mut().enumerate() {
            *z = Complex64::new(run.bit(n) as f64, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buffer, &mut self.scratch);
        let scale = 1.0 / self.n as f64;
        for (s, z) in self.sum.iter_mut().zip(&self.buffer) {
            *s += z.norm_sqr() * scale;
        }
        self.count += 1;
        Ok(())
    }

    /// Adds two runs with a single complex transform of `a + i b`.
    pub fn push_pair(&mut self, a: &OutcomeRun, b: &OutcomeRun) -> Result<(), EstimationError> {
        self.check(a, self.count)?;
        self.check(b, self.count + 1)?;
        for (n, z) in self.buffer.iter_mut().enumerate() {
            *z = Complex64::new(a.bit(n) as f64, b.bit(n) as f64);
        }
        self.fft.process_with_scratch(&mut self.buffer, &mut self.scratch);
        // |A(m)|^2 + |B(m)|^2 = (|Z(m)|^2 + |Z(-m)|^2) / 2
        let scale = 0.5 / self.n as f64;
        for m in 0..self.n {
            let mirror = (self.n - m) % self.n;
            self.sum[m] += (self.buffer[m].norm_sqr() + self.buffer[mirror].norm_sqr()) * scale;
        }
        self.count += 2;
        Ok(())
    }

    pub fn push_all(&mut self, runs: &[OutcomeRun]) -> Result<(), EstimationError> {
        let mut pairs = runs.chunks_exact(2);
        for pair in &mut pairs {
            self.push_pair(&pair[0], &pair[1])?;
        }
        if let [last] = pairs.remainder() {
            self.push(last)?;
        }
        Ok(())
    }

    /// Adds a partial sum produced by another accumulator of the same length.
    pub fn merge(&mut self, other: &SpectrumAccumulator) {
        assert_eq!(self.n, other.n);
        self.sum.iter_mut().zip(&other.sum).for_each(|(s, o)| *s += o);
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Result<PowerSpectrum, EstimationError> {
        if self.count == 0 {
            return Err(EstimationError::Empty);
        }
        let k = self.count as f64;
        Ok(PowerSpectrum { values: self.sum.into_iter().map(|s| s / k).collect(), repetitions: self.count, fingerprint: None })
    }
}

/// Folds per-chunk partial sums into a total in chunk order, evaluating
/// `WAVE` chunks at a time in parallel.
fn reduce_in_chunks<E: Send>(
    n: usize,
    k: usize,
    chunk_sum: impl Fn(std::ops::Range<usize>) -> Result<SpectrumAccumulator, E> + Sync,
) -> Result<SpectrumAccumulator, E> {
    let mut total = SpectrumAccumulator::new(n);
    let chunks: Vec<std::ops::Range<usize>> = (0..k).step_by(CHUNK).map(|s| s..(s + CHUNK).min(k)).collect();
    for wave in chunks.chunks(WAVE) {
        let partials: Vec<SpectrumAccumulator> = wave.par_iter().cloned().map(&chunk_sum).collect::<Result<_, E>>()?;
        for partial in &partials {
            total.merge(partial);
        }
    }
    Ok(total)
}

/// Averaged periodogram of an experiment.
pub fn power_spectrum(experiment: &Experiment, parallelism: Option<usize>) -> Result<PowerSpectrum, EstimationError> {
    power_spectrum_of_runs(&experiment.runs, parallelism)
}

pub fn power_spectrum_of_runs(runs: &[OutcomeRun], parallelism: Option<usize>) -> Result<PowerSpectrum, EstimationError> {
    let n = runs.first().ok_or(EstimationError::Empty)?.len();
    if let Some((index, run)) = runs.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(EstimationError::LengthMismatch { index, len: run.len(), expected: n });
    }
    let total = with_parallelism(parallelism, || {
        reduce_in_chunks(n, runs.len(), |range| {
            let mut acc = SpectrumAccumulator::new(n);
            acc.push_all(&runs[range])?;
            Ok(acc)
        })
    })?;
    total.finish()
}

/// Simulates and transforms runs on the fly without keeping the outcomes.
/// Identical to `power_spectrum(run_experiment(..))` for the same seed.
pub fn simulate_power_spectrum(
    meas: &MeasurementConfig,
    modulation: &ModulationConfig,
    noise: &NoiseSpec,
    master_seed: u64,
    parallelism: Option<usize>,
) -> Result<PowerSpectrum, NoiseError> {
    meas.validate()?;
    modulation.validate()?;
    noise.validate()?;
    let n = meas.n_outcomes;
    let total = with_parallelism(parallelism, || {
        reduce_in_chunks(n, meas.repetitions, |range| {
            let runs = range
                .map(|id| run_sequence(meas, modulation, noise, RngStream::new(master_seed, id as u64)))
                .collect::<Result<Vec<_>, _>>()?;
            let mut acc = SpectrumAccumulator::new(n);
            acc.push_all(&runs).expect("runs share one length");
            Ok::<_, NoiseError>(acc)
        })
    })?;
    Ok(total.finish().expect("at least one repetition"))
}

// ── Tunable Fourier transform ───────────────────────────────────────

/// `Y(nu; M) = N^{-1} sum_{n<M} exp(i nu n) x_n`.
pub fn tunable_ft(record: &[f64], nu: f64, partial: usize) -> Result<Complex64, EstimationError> {
    let n = record.len();
    if partial > n {
        return Err(EstimationError::PartialSumTooLong { m: partial, n });
    }
    let sum: Complex64 = record[..partial].iter().enumerate().map(|(k, &x)| Complex64::from_polar(x, nu * k as f64)).sum();
    Ok(sum / n as f64)
}

/// How scans over several runs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanAveraging {
    /// `|mean_k Y_k|`: phase-coherent average, meaningful for synchronized runs.
    Coherent,
    /// `mean_k |Y_k|`.
    Magnitude,
}

/// `|Y(nu; M)|` on a grid; `magnitudes[i][j]` belongs to `nus[i]`, `partials[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TunableScan {
    pub nus: Vec<f64>,
    pub partials: Vec<usize>,
    pub magnitudes: Vec<Vec<f64>>,
}

fn scan_complex(record: &[f64], nus: &[f64], partials: &[usize]) -> Vec<Vec<Complex64>> {
    let n = record.len() as f64;
    nus.iter()
        .map(|&nu| {
            let step = Complex64::from_polar(1.0, nu);
            let mut order: Vec<usize> = (0..partials.len()).collect();
            order.sort_by_key(|&j| partials[j]);
            let mut out = vec![Complex64::default(); partials.len()];
            let (mut sum, mut phase, mut k) = (Complex64::default(), Complex64::new(1.0, 0.0), 0usize);
            for j in order {
                while k < partials[j] {
                    // Re-anchor the phasor periodically to bound drift.
                    if k % 4096 == 0 {
                        phase = Complex64::from_polar(1.0, nu * k as f64);
                    }
                    sum += phase * record[k];
                    phase *= step;
                    k += 1;
                }
                out[j] = sum / n;
            }
            out
        })
        .collect()
}

/// Scan of a single record.
pub fn tunable_scan(record: &[f64], nus: &[f64], partials: &[usize]) -> Result<TunableScan, EstimationError> {
    if let Some(&m) = partials.iter().find(|&&m| m > record.len()) {
        return Err(EstimationError::PartialSumTooLong { m, n: record.len() });
    }
    let magnitudes = scan_complex(record, nus, partials).into_iter().map(|row| row.iter().map(|z| z.norm()).collect()).collect();
    Ok(TunableScan { nus: nus.to_vec(), partials: partials.to_vec(), magnitudes })
}

/// Scan averaged over every run of `runs`.
pub fn tunable_scan_runs(
    runs: &[OutcomeRun],
    nus: &[f64],
    partials: &[usize],
    averaging: ScanAveraging,
) -> Result<TunableScan, EstimationError> {
    let n = runs.first().ok_or(EstimationError::Empty)?.len();
    if let Some(&m) = partials.iter().find(|&&m| m > n) {
        return Err(EstimationError::PartialSumTooLong { m, n });
    }
    if let Some((index, run)) = runs.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(EstimationError::LengthMismatch { index, len: run.len(), expected: n });
    }
    let per_run: Vec<Vec<Vec<Complex64>>> = runs
        .par_iter()
        .map(|run| {
            let mut record = vec![0.0; n];
            run.write_f64(&mut record);
            scan_complex(&record, nus, partials)
        })
        .collect();
    let k = runs.len() as f64;
    let magnitudes = (0..nus.len())
        .map(|i| {
            (0..partials.len())
                .map(|j| match averaging {
                    ScanAveraging::Coherent => (per_run.iter().map(|s| s[i][j]).sum::<Complex64>() / k).norm(),
                    ScanAveraging::Magnitude => per_run.iter().map(|s| s[i][j].norm()).sum::<f64>() / k,
                })
                .collect()
        })
        .collect();
    Ok(TunableScan { nus: nus.to_vec(), partials: partials.to_vec(), magnitudes })
}

// ── Peaks and floor ───────────────────────────────────────────────────

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mid = values.len() / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if values.len() % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median of `S(m)` over `1 <= m <= N/2`, skipping bins within `half_width`
/// of any of `exclude`.
pub fn median_floor(ps: &PowerSpectrum, exclude: &[usize], half_width: usize) -> f64 {
    let mut kept: Vec<f64> = (1..=ps.n() / 2)
        .filter(|&m| exclude.iter().all(|&c| m.abs_diff(c) > half_width))
        .map(|m| ps.values[m])
        .collect();
    median(&mut kept)
}

/// Half-width of the neighbourhood a peak must dominate when no spacing is given.
const DEFAULT_PEAK_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    /// Required ratio of peak height to background.
    pub threshold: f64,
    /// Expected distance between overtones in bins.
    pub spacing: Option<f64>,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self { threshold: 10.0, spacing: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedPeak {
    /// Highest bin of the peak.
    pub m_peak: usize,
    /// Contiguous above-threshold bins around the peak, within its neighbourhood.
    pub span: (usize, usize),
    pub height: f64,
    pub local_background: f64,
    /// `sum (S(m) - background)` over `m_peak +- spacing / 2`.
    pub area: f64,
}

/// Finds peaks in `1 <= m <= N/2` rising `threshold` times above the
/// background. `background` defaults to the median of the spectrum; a
/// per-bin curve may be supplied instead.
pub fn detect_peaks(
    ps: &PowerSpectrum,
    options: DetectOptions,
    background: Option<&[f64]>,
) -> Result<Vec<DetectedPeak>, EstimationError> {
    let n = ps.n();
    if n < 16 {
        return Err(EstimationError::TooShort(n));
    }
    let global = median_floor(ps, &[], 0);
    let bg = |m: usize| background.map_or(global, |b| b[m]);
    let half = n / 2;
    let above = |m: usize| ps.values[m] > options.threshold * bg(m);
    // A peak is an above-threshold bin that dominates its neighbourhood, so
    // overtones joined by slowly decaying tails still separate.
    let window = options.spacing.map_or(DEFAULT_PEAK_WINDOW, |s| ((0.5 * s).floor() as usize).max(1));
    let maxima: Vec<usize> = (1..=half)
        .filter(|&m| {
            above(m)
                && (m.saturating_sub(window).max(1)..m).all(|i| ps.values[i] < ps.values[m])
                && (m + 1..=(m + window).min(half)).all(|i| ps.values[i] <= ps.values[m])
        })
        .collect();
    let spans: Vec<(usize, usize)> = maxima
        .iter()
        .map(|&m| {
            let lo_limit = m.saturating_sub(window).max(1);
            let hi_limit = (m + window).min(half);
            let mut lo = m;
            while lo > lo_limit && above(lo - 1) {
                lo -= 1;
            }
            let mut hi = m;
            while hi < hi_limit && above(hi + 1) {
                hi += 1;
            }
            (lo, hi)
        })
        .collect();
    let spacing = options.spacing.unwrap_or_else(|| match maxima.as_slice() {
        [] => 0.0,
        [only] => *only as f64,
        many => {
            let mut gaps: Vec<f64> = many.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
            median(&mut gaps)
        }
    });
    let reach = (0.5 * spacing).floor().max(1.0) as usize;
    Ok(spans
        .iter()
        .zip(&maxima)
        .map(|(&span, &m_peak)| {
            let lo = m_peak.saturating_sub(reach).max(1);
            let hi = (m_peak + reach).min(n - 1);
            let area = (lo..=hi).map(|m| ps.values[m] - bg(m)).sum();
            DetectedPeak { m_peak, span, height: ps.values[m_peak], local_background: bg(m_peak), area }
        })
        .collect())
}

/// `sum_m (S(m) - background)` for `|m - centre| <= half_width`.
pub fn peak_area(ps: &PowerSpectrum, centre: usize, half_width: usize, background: f64) -> f64 {
    let lo = centre.saturating_sub(half_width).max(1);
    let hi = (centre + half_width).min(ps.n() - 1);
    (lo..=hi).map(|m| ps.values[m] - background).sum()
}
