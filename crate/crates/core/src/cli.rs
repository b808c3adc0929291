//! The `microcomb` command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning                                        |
//! |------|------------------------------------------------|
//! | 0    | success                                        |
//! | 1    | I/O failure or unreadable bundle               |
//! | 2    | invalid config or invalid command-line request |
//! | 3    | dispersion table or fit error                  |
//! | 4    | temporal step size collapsed                   |
//! | 5    | steady-state Newton solve did not converge     |
//! | 6    | snapshot index out of range                    |
//!
//! Standard output only carries the paths of written files. Progress,
//! warnings and errors go to standard error.

use std::ffi::OsString;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::{self, AnalysisError};
use crate::dispersion::{extrapolated_zero_crossings, parse_dispersion_file, DispersionFit, DispersionProfile};
use crate::lle::{build_plan, solve_temporal, SimulationPlan, TemporalError};
use crate::persistence::{load_config, load_results, save_results, BundleContent, ResultsBundle, SessionConfig};
use crate::steady::{solve_steady_state, SteadyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DISPERSION: i32 = 3;
pub const EXIT_STEP_COLLAPSE: i32 = 4;
pub const EXIT_NO_CONVERGENCE: i32 = 5;
pub const EXIT_INDEX: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "microcomb", version, about = "Kerr microresonator frequency comb simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the dispersion table and write D_int as CSV.
    Analyze {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the temporal detuning scan and write a results bundle.
    Solve {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the noise seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Suppress the progress line.
        #[arg(long)]
        quiet: bool,
    },
    /// Solve for a stationary state at fixed detuning and write a bundle.
    Steady {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Detuning in rad/s, or in Hz with an `hz` suffix (e.g. `-5e9hz`).
        /// Defaults to the config's `δω`/`domega`.
        #[arg(long, allow_hyphen_values = true)]
        detuning: Option<Detuning>,
    },
    /// Write plot-ready CSV from a results bundle.
    Export {
        bundle: PathBuf,
        #[arg(long, value_enum)]
        what: ExportKind,
        /// Snapshot index for `spectra` and `time`; defaults to the last one.
        #[arg(long)]
        ind: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Spectra,
    Combpower,
    Time,
}

/// Angular detuning in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detuning(pub f64);

impl FromStr for Detuning {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        let (number, scale) = match lower.strip_suffix("hz") {
            Some(head) => (head.trim_end(), 2.0 * PI),
            None => (lower.as_str(), 1.0),
        };
        let value: f64 = number.parse().map_err(|_| format!("not a detuning: '{s}'"))?;
        if !value.is_finite() {
            return Err(format!("detuning must be finite: '{s}'"));
        }
        Ok(Detuning(value * scale))
    }
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl ToString) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(command: Command) -> Outcome {
    match command {
        Command::Analyze { config, out } => cmd_analyze(&config, &out),
        Command::Solve {
            config,
            out,
            seed,
            quiet,
        } => cmd_solve(&config, &out, seed, quiet),
        Command::Steady { config, out, detuning } => cmd_steady(&config, &out, detuning),
        Command::Export { bundle, what, ind, out } => cmd_export(&bundle, what, ind, &out),
    }
}

fn check_output(out: &Path) -> Outcome {
    let dir = match out.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    if !dir.is_dir() {
        return Err(Failure::new(
            EXIT_IO,
            format!("output directory {} does not exist", dir.display()),
        ));
    }
    if out.is_dir() {
        return Err(Failure::new(EXIT_IO, format!("{} is a directory", out.display())));
    }
    Ok(())
}

fn read_config(path: &Path) -> Result<SessionConfig, Failure> {
    load_config(path).map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn fit(config: &SessionConfig, config_path: &Path) -> Result<(DispersionFit, Vec<(i64, f64)>, DispersionProfile), Failure> {
    let disp = |e| Failure::new(EXIT_DISPERSION, e);
    let table = parse_dispersion_file(config.dispfile_path(config_path)).map_err(disp)?;
    let fit = DispersionFit::new(&table, config.sim.f_pmp, config.sim.mu_fit).map_err(disp)?;
    let raw = fit.raw_dint(&table);
    let profile = fit.profile(config.sim.mu_sim, config.res.radius).map_err(disp)?;
    Ok((fit, raw, profile))
}

fn plan_for(config: &SessionConfig, config_path: &Path) -> Result<SimulationPlan, Failure> {
    let (_, _, profile) = fit(config, config_path)?;
    build_plan(&config.res, &config.sim, &profile, config.solver).map_err(|e| Failure::new(EXIT_CONFIG, e))
}

fn write_text(out: &Path, text: &str) -> Outcome {
    fs::write(out, text).map_err(|e| Failure::new(EXIT_IO, format!("cannot write {}: {e}", out.display())))?;
    println!("{}", out.display());
    Ok(())
}

fn write_bundle(out: &Path, bundle: &ResultsBundle) -> Outcome {
    save_results(bundle, out).map_err(|e| Failure::new(EXIT_IO, e))?;
    println!("{}", out.display());
    Ok(())
}

pub fn cmd_analyze(config_path: &Path, out: &Path) -> Outcome {
    check_output(out)?;
    let config = read_config(config_path)?;
    let (fit, raw, profile) = fit(&config, config_path)?;

    let mut csv = String::from("series,mu,dint_rads\n");
    for (mu, dint) in raw {
        let _ = writeln!(csv, "raw,{mu},{dint:e}");
    }
    for mu in fit.fit_window().iter() {
        let _ = writeln!(csv, "fit,{mu},{:e}", fit.dint(mu as f64));
    }
    for (mu, dint) in profile.mu_grid.iter().zip(&profile.dint) {
        let _ = writeln!(csv, "sim,{mu},{dint:e}");
    }
    for (a, b) in extrapolated_zero_crossings(&profile) {
        eprintln!("warning: extrapolated D_int changes sign between mu={a} and mu={b}; the fit may be unreliable there");
    }
    eprintln!(
        "pump mode m0={} f0={:.6e} Hz, FSR={:.6e} Hz, neff={:.5}, ng={:.5}",
        profile.m0,
        profile.omega0 / (2.0 * PI),
        profile.d1 / (2.0 * PI),
        profile.neff_pmp,
        profile.ng_pmp
    );
    write_text(out, &csv)
}

fn progress_line(quiet: bool) -> impl FnMut(f64) {
    let mut last = -1i64;
    move |fraction: f64| {
        if quiet {
            return;
        }
        let permille = (fraction * 1000.0).round() as i64;
        if permille != last {
            last = permille;
            let mut err = io::stderr().lock();
            let _ = write!(err, "\rsolving {:5.1}%", permille as f64 / 10.0);
            if permille >= 1000 {
                let _ = writeln!(err);
            }
            let _ = err.flush();
        }
    }
}

pub fn cmd_solve(config_path: &Path, out: &Path, seed: Option<u64>, quiet: bool) -> Outcome {
    check_output(out)?;
    let mut config = read_config(config_path)?;
    if let Some(seed) = seed {
        config.sim.seed = seed;
    }
    let plan = plan_for(&config, config_path)?;
    let mut progress = progress_line(quiet);
    match solve_temporal(&plan, &mut progress) {
        Ok(record) => write_bundle(out, &ResultsBundle::temporal(record, Some(config))),
        Err(e @ TemporalError::StepCollapse { .. }) => {
            if !quiet {
                eprintln!();
            }
            let message = e.to_string();
            let TemporalError::StepCollapse { record, .. } = e;
            write_bundle(out, &ResultsBundle::temporal(*record, Some(config)))?;
            Err(Failure::new(EXIT_STEP_COLLAPSE, message))
        }
    }
}

pub fn cmd_steady(config_path: &Path, out: &Path, detuning: Option<Detuning>) -> Outcome {
    check_output(out)?;
    let config = read_config(config_path)?;
    let delta_omega = match (detuning, config.sim.domega) {
        (Some(Detuning(d)), _) => d,
        (None, Some(d)) => d,
        (None, None) => {
            return Err(Failure::new(
                EXIT_CONFIG,
                "no detuning given: pass --detuning or set δω/domega in the config",
            ))
        }
    };
    let plan = plan_for(&config, config_path)?;
    match solve_steady_state(&plan, delta_omega, None) {
        Ok(solution) => {
            eprintln!(
                "converged in {} iterations, residual {:.3e}",
                solution.iterations, solution.residual_norm
            );
            write_bundle(out, &ResultsBundle::steady(plan, solution, Some(config)))
        }
        Err(e) => {
            let message = e.to_string();
            match e {
                SteadyError::NoConvergence { best } | SteadyError::SingularJacobian { best, .. } => {
                    write_bundle(out, &ResultsBundle::steady(plan, *best, Some(config)))?;
                    Err(Failure::new(EXIT_NO_CONVERGENCE, message))
                }
                SteadyError::GuessLength { .. } => Err(Failure::new(EXIT_CONFIG, message)),
            }
        }
    }
}

fn index_failure(e: AnalysisError) -> Failure {
    match e {
        AnalysisError::IndexOutOfRange { .. } => Failure::new(EXIT_INDEX, e),
        AnalysisError::EmptyRecord => Failure::new(EXIT_IO, e),
    }
}

pub fn cmd_export(bundle_path: &Path, what: ExportKind, ind: Option<usize>, out: &Path) -> Outcome {
    check_output(out)?;
    let bundle = load_results(bundle_path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", bundle_path.display())))?;
    let plan = bundle.plan();

    let modal = match (&bundle.content, what) {
        (BundleContent::Temporal(record), ExportKind::Combpower) => {
            let norm = analysis::comb_power(record).map_err(index_failure)?;
            let mut csv = String::from("step,comb_power_norm,detuning_rads\n");
            for ((step, p), d) in record.steps.iter().zip(&norm).zip(&record.detuning_trace) {
                let _ = writeln!(csv, "{step},{p:e},{d:e}");
            }
            return write_text(out, &csv);
        }
        (BundleContent::Steady { .. }, ExportKind::Combpower) => {
            return Err(Failure::new(EXIT_CONFIG, "combpower export needs a temporal bundle"));
        }
        (BundleContent::Temporal(record), _) => {
            let k = ind.unwrap_or(record.len().saturating_sub(1));
            record
                .snapshots
                .get(k)
                .ok_or(AnalysisError::IndexOutOfRange { ind: k, len: record.len() })
                .map_err(index_failure)?
        }
        (BundleContent::Steady { solution, .. }, _) => match ind {
            Some(k) if k != 0 => return Err(index_failure(AnalysisError::IndexOutOfRange { ind: k, len: 1 })),
            _ => &solution.modal,
        },
    };

    let mut csv = String::new();
    if what == ExportKind::Spectra {
        let s = analysis::spectrum_of(modal, plan);
        csv.push_str("freq_hz,s_ring_dbm,s_wg_dbm\n");
        for ((f, r), w) in s.freq.iter().zip(&s.s_ring).zip(&s.s_wg) {
            let _ = writeln!(csv, "{f:e},{r:e},{w:e}");
        }
    } else {
        let t = analysis::fast_time_of(modal, plan);
        csv.push_str("tau_s,intensity_w\n");
        for (tau, i) in t.tau.iter().zip(&t.intensity) {
            let _ = writeln!(csv, "{tau:e},{i:e}");
        }
    }
    write_text(out, &csv)
}
