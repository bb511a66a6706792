use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

use ramsey_probe::analytic::{
    gamma_ell, gamma_tilde_ell, gaussian_coherence_factor, ou_window_phase_variance, tls_coherence_factor, total_spectrum,
    CoherenceFactor, FrequencyNoise, OuNoise, PeakRendering, SpectrumModel, TelegraphNoise,
};
use ramsey_probe::estimation::{
    detect_peaks, periodogram, power_spectrum_of_runs, tunable_scan_runs, DetectOptions, PowerSpectrum, ScanAveraging,
};
use ramsey_probe::fit::{fit_lorentzian_width, fit_peak, PeakFitOptions, SpectrumContext, WidthFitOptions};
use ramsey_probe::model::derive_modulation;
use ramsey_probe::simulator::run_experiment;

use crate::config::{effective_parallelism, RunConfig};
use crate::error::{CliError, CliResult};
use crate::format::{read_outcomes, read_spectrum_csv, write_csv, write_outcomes, write_spectrum_csv, Cell};
use crate::manifest::{unix_now, write_json, FileDigest, RunManifest, GIT_DESCRIBE, TOOL, VERSION};

#[derive(Debug, Parser)]
#[command(name = "ramsey-probe", version, about = "Detect periodic qubit-frequency modulation from repeated Ramsey outcomes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate K runs of N Ramsey outcomes and write them as packed bits.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `execution.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Manifest path; defaults to `<out>.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Worker threads; overrides `execution.parallelism`.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Average the periodograms of an outcome file into `m,S` CSV.
    Spectrum {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Check the Parseval identity run by run.
        #[arg(long)]
        parseval: bool,
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Evaluate the analytic spectrum for a configuration.
    Predict {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "peaks,background,white")]
        components: Vec<Component>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a spectral peak.
    Fit {
        #[arg(long)]
        spectrum: PathBuf,
        /// Supplies `t_cycle` and `phi_r`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        ell: u32,
        /// Peak bin; the tallest detected peak when omitted.
        #[arg(long)]
        peak: Option<usize>,
        #[arg(long, value_enum, default_value = "resonant")]
        model: FitModel,
        /// Report path; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Tunable Fourier transform |Y(nu; M)| over a grid.
    ScanYft {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        nu_grid: Vec<f64>,
        /// Read `nu` in units of `omega_p t_cyc` taken from this config.
        #[arg(long)]
        relative_to: Option<PathBuf>,
        /// Explicit partial-sum lengths.
        #[arg(long, value_delimiter = ',', conflicts_with = "m_steps")]
        m_grid: Vec<usize>,
        /// `S + 1` evenly spaced lengths from 0 to N.
        #[arg(long)]
        m_steps: Option<usize>,
        #[arg(long, value_enum, default_value = "coherent")]
        averaging: Averaging,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Component {
    Peaks,
    Background,
    White,
    /// Draws peaks as Lorentzians broadened by the configured noise.
    Lorentzian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitModel {
    Resonant,
    Lorentzian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Averaging {
    Coherent,
    Magnitude,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, seed, out, manifest, parallel } => simulate(&config, seed, &out, manifest, parallel),
        Command::Spectrum { input, out, parseval, parallel } => spectrum(&input, &out, parseval, parallel),
        Command::Predict { config, components, out } => predict(&config, &components, &out),
        Command::Fit { spectrum, config, ell, peak, model, report } => fit(&spectrum, &config, ell, peak, model, report),
        Command::ScanYft { input, nu_grid, relative_to, m_grid, m_steps, averaging, out } => {
            scan_yft(&input, &nu_grid, relative_to, m_grid, m_steps, averaging, &out)
        }
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn simulate(config_path: &Path, seed: Option<u64>, out: &Path, manifest: Option<PathBuf>, parallel: Option<usize>) -> CliResult<()> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.execution.seed = seed;
    }
    if parallel == Some(0) {
        return Err(CliError::Config("--parallel must be at least 1".into()));
    }
    let threads = effective_parallelism(parallel.or(config.execution.parallelism))?;
    let started = unix_now();
    let experiment =
        run_experiment(&config.measurement, &config.modulation, &config.noise, config.execution.seed, threads)?;
    write_outcomes(out, config.measurement.n_outcomes, &experiment.runs)?;
    let manifest_path = manifest.unwrap_or_else(|| sidecar(out, ".manifest.json"));
    let record = RunManifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        git_describe: GIT_DESCRIBE.into(),
        master_seed: config.execution.seed,
        threads,
        n_outcomes: config.measurement.n_outcomes,
        repetitions: experiment.runs.len(),
        config,
        started_unix_s: started,
        finished_unix_s: unix_now(),
        outputs: vec![FileDigest::of(out)?],
    };
    write_json(&manifest_path, &record)
}

#[derive(Debug, Serialize)]
struct SpectrumSidecar {
    tool: &'static str,
    version: &'static str,
    git_describe: &'static str,
    n: usize,
    repetitions: usize,
    source: FileDigest,
    csv: FileDigest,
    /// Largest relative Parseval deviation over runs, when checked.
    parseval_max_relative_error: Option<f64>,
}

pub const PARSEVAL_TOLERANCE: f64 = 1e-9;

fn spectrum(input: &Path, out: &Path, parseval: bool, parallel: Option<usize>) -> CliResult<()> {
    let (n, runs) = read_outcomes(input)?;
    let threads = effective_parallelism(parallel)?;
    let ps = power_spectrum_of_runs(&runs, threads)?;
    let parseval_error = parseval.then(|| {
        let mut record = vec![0.0; n];
        runs.iter()
            .map(|run| {
                run.write_f64(&mut record);
                let energy: f64 = record.iter().map(|x| x * x).sum();
                let spectral: f64 = periodogram(&record).iter().sum();
                if energy == 0.0 {
                    spectral.abs()
                } else {
                    (spectral / energy - 1.0).abs()
                }
            })
            .fold(0.0, f64::max)
    });
    write_spectrum_csv(out, &ps)?;
    let record = SpectrumSidecar {
        tool: TOOL,
        version: VERSION,
        git_describe: GIT_DESCRIBE,
        n,
        repetitions: runs.len(),
        source: FileDigest::of(input)?,
        csv: FileDigest::of(out)?,
        parseval_max_relative_error: parseval_error,
    };
    write_json(&sidecar(out, ".json"), &record)?;
    if let Some(err) = parseval_error {
        println!("parseval: max relative error {err:.3e}");
        if !(err <= PARSEVAL_TOLERANCE) {
            return Err(CliError::Numeric(format!("Parseval identity violated: {err:.3e}")));
        }
    }
    Ok(())
}

/// Sum of independent frequency noises.
struct CombinedNoise<'a>(Vec<Box<dyn FrequencyNoise + 'a>>);

impl FrequencyNoise for CombinedNoise<'_> {
    fn spectrum(&self, omega: f64) -> f64 {
        self.0.iter().map(|n| n.spectrum(omega)).sum()
    }

    fn autocorrelation(&self, t: f64) -> f64 {
        self.0.iter().map(|n| n.autocorrelation(t)).sum()
    }
}

fn predict(config_path: &Path, components: &[Component], out: &Path) -> CliResult<()> {
    let config = RunConfig::load(config_path)?;
    let meas = &config.measurement;
    let derived = derive_modulation(&config.modulation, meas);
    let contrast = meas.t2.contrast(meas.t_ramsey);

    let mut cf = Complex64::new(contrast, 0.0);
    let mut cf2 = Complex64::new(contrast * contrast, 0.0);
    let mut sources: Vec<Box<dyn FrequencyNoise>> = Vec::new();
    if let Some(tls) = &config.noise.tls {
        cf *= tls_coherence_factor(tls, meas.t_ramsey, 1).value;
        cf2 *= tls_coherence_factor(tls, meas.t_ramsey, 2).value;
        sources.push(Box::new(TelegraphNoise(tls)));
    }
    if let Some(ou) = &config.noise.qubit_gaussian {
        let variance = ou_window_phase_variance(ou, meas.t_ramsey);
        cf *= gaussian_coherence_factor(0.5 * variance).value;
        cf2 *= gaussian_coherence_factor(2.0 * variance).value;
        sources.push(Box::new(OuNoise(*ou)));
    }
    let noise = CombinedNoise(sources);

    let lorentzian = components.contains(&Component::Lorentzian);
    let rendering = if lorentzian {
        let mut gamma_1 = gamma_ell(&config.noise.modulation_frequency, meas.t_cycle, 1);
        if let Some(jitter) = &config.noise.cycle_jitter {
            gamma_1 += gamma_tilde_ell(jitter, config.modulation.omega, 1);
        }
        if !(gamma_1 > 0.0) {
            return Err(CliError::Config(
                "lorentzian peaks need noise.modulation_frequency or noise.cycle_jitter".into(),
            ));
        }
        PeakRendering::Lorentzian { gamma_1 }
    } else {
        PeakRendering::Exact
    };
    let model = SpectrumModel {
        cf: CoherenceFactor::new(cf),
        cf2,
        noise: (!noise.0.is_empty()).then_some(&noise as &dyn FrequencyNoise),
        rendering,
        peaks: components.contains(&Component::Peaks) || lorentzian,
        background: components.contains(&Component::Background),
        white: components.contains(&Component::White),
        ..SpectrumModel::noiseless(
            meas.n_outcomes,
            meas.t_ramsey,
            meas.t_cycle,
            meas.phi_r,
            derived.amplitude,
            config.modulation.omega,
        )
    };
    let prediction = total_spectrum(&model)?;

    let mut header = vec!["m"];
    if model.peaks {
        header.push("peaks");
    }
    if model.background {
        header.push("background");
    }
    if model.white {
        header.push("white");
    }
    header.push("total");
    write_csv(
        out,
        &header,
        (0..prediction.n).map(|m| {
            let mut row = vec![Cell::Int(m)];
            if model.peaks {
                row.push(Cell::Float(prediction.peaks[m]));
            }
            if model.background {
                row.push(Cell::Float(prediction.background[m]));
            }
            if model.white {
                row.push(Cell::Float(prediction.white));
            }
            row.push(Cell::Float(prediction.total(m)));
            row
        }),
    )
}

#[derive(Debug, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
enum FitReport {
    Resonant {
        spectrum: FileDigest,
        ell: u32,
        peak_bin: usize,
        omega_p: f64,
        amplitude: f64,
        offset: f64,
        std_errors: [f64; 3],
        omega_bounds: (f64, f64),
        amplitude_bounds: (f64, f64),
        residual_norm: f64,
        points_used: Vec<usize>,
        iterations: usize,
        converged: bool,
    },
    Lorentzian {
        spectrum: FileDigest,
        ell: u32,
        peak_bin: usize,
        gamma: f64,
        gamma_std_error: f64,
        height: f64,
        centre_omega: f64,
        offset: f64,
        below_bin_resolution: bool,
        points_used: Vec<usize>,
        converged: bool,
    },
}

fn tallest_peak(ps: &PowerSpectrum) -> CliResult<usize> {
    let peaks = detect_peaks(ps, DetectOptions::default(), None)?;
    peaks
        .iter()
        .max_by(|a, b| a.height.total_cmp(&b.height))
        .map(|p| p.m_peak)
        .ok_or_else(|| CliError::Numeric("no peak exceeds the detection threshold".into()))
}

fn fit(
    spectrum_path: &Path,
    config_path: &Path,
    ell: u32,
    peak: Option<usize>,
    model: FitModel,
    report: Option<PathBuf>,
) -> CliResult<()> {
    let config = RunConfig::load(config_path)?;
    let ps = read_spectrum_csv(spectrum_path)?;
    if ell == 0 {
        return Err(CliError::Config("--ell must be at least 1".into()));
    }
    let peak_bin = match peak {
        Some(m) if m == 0 || m >= ps.n() => {
            return Err(CliError::Config(format!("--peak {m} is outside 1..{}", ps.n())));
        }
        Some(m) => m,
        None => tallest_peak(&ps)?,
    };
    let ctx = SpectrumContext { t_cycle: config.measurement.t_cycle, phi_r: config.measurement.phi_r };
    let spectrum = FileDigest::of(spectrum_path)?;
    let result = match model {
        FitModel::Resonant => {
            let r = fit_peak(&ps, peak_bin, ctx, PeakFitOptions { ell, ..Default::default() })?;
            FitReport::Resonant {
                spectrum,
                ell,
                peak_bin,
                omega_p: r.omega_p,
                amplitude: r.amplitude,
                offset: r.offset,
                std_errors: r.std_errors,
                omega_bounds: r.omega_bounds,
                amplitude_bounds: r.amplitude_bounds,
                residual_norm: r.residual_norm,
                points_used: r.points_used,
                iterations: r.iterations,
                converged: r.converged,
            }
        }
        FitModel::Lorentzian => {
            let r = fit_lorentzian_width(&ps, peak_bin, ctx, WidthFitOptions { ell, ..Default::default() })?;
            FitReport::Lorentzian {
                spectrum,
                ell,
                peak_bin,
                gamma: r.gamma,
                gamma_std_error: r.gamma_std_error,
                height: r.height,
                centre_omega: r.centre_omega,
                offset: r.offset,
                below_bin_resolution: r.below_bin_resolution,
                points_used: r.points_used,
                converged: r.converged,
            }
        }
    };
    match report {
        Some(path) => write_json(&path, &result),
        None => {
            let text = serde_json::to_string_pretty(&result).map_err(|e| CliError::Numeric(e.to_string()))?;
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io("<stdout>", e)),
                _ => Ok(()),
            }
        }
    }
}

fn scan_yft(
    input: &Path,
    nu_grid: &[f64],
    relative_to: Option<PathBuf>,
    m_grid: Vec<usize>,
    m_steps: Option<usize>,
    averaging: Averaging,
    out: &Path,
) -> CliResult<()> {
    let (n, runs) = read_outcomes(input)?;
    let unit = match relative_to {
        Some(path) => {
            let config = RunConfig::load(&path)?;
            config.modulation.omega * config.measurement.t_cycle
        }
        None => 1.0,
    };
    let nus: Vec<f64> = nu_grid.iter().map(|v| v * unit).collect();
    let partials = match (m_steps, m_grid.is_empty()) {
        (Some(0), _) => return Err(CliError::Config("--m-steps must be at least 1".into())),
        (Some(steps), _) => (0..=steps).map(|i| (i as u128 * n as u128 / steps as u128) as usize).collect(),
        (None, false) => m_grid,
        (None, true) => return Err(CliError::Config("one of --m-grid or --m-steps is required".into())),
    };
    if let Some(&m) = partials.iter().find(|&&m| m > n) {
        return Err(CliError::Config(format!("partial length {m} exceeds N = {n}")));
    }
    let averaging = match averaging {
        Averaging::Coherent => ScanAveraging::Coherent,
        Averaging::Magnitude => ScanAveraging::Magnitude,
    };
    let scan = tunable_scan_runs(&runs, &nus, &partials, averaging)?;
    write_csv(
        out,
        &["nu", "M", "abs_Y"],
        scan.nus.iter().zip(&scan.magnitudes).flat_map(|(&nu, row)| {
            scan.partials.iter().zip(row).map(move |(&m, &y)| vec![Cell::Float(nu), Cell::Int(m), Cell::Float(y)])
        }),
    )
}
