use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use spinnoise::config::{ExperimentConfig, ScanAxis};
use spinnoise::scan::{
    absorption_scan, oscillation_mode_report, point_seed, run_point, run_scan, trajectory_signals,
    write_absorption_csv, InitialState, ScanResult,
};
use spinnoise::Error;

const PRESETS: [(&str, &str); 5] = [
    ("fig3_rnd", include_str!("../presets/fig3_rnd.cfg")),
    ("fig3_end", include_str!("../presets/fig3_end.cfg")),
    ("fig6_rnd", include_str!("../presets/fig6_rnd.cfg")),
    ("fig6_end", include_str!("../presets/fig6_end.cfg")),
    (
        "fig5_absorption",
        include_str!("../presets/fig5_absorption.cfg"),
    ),
];

#[derive(Parser)]
#[command(
    name = "spinnoise",
    version,
    about = "Spin-noise spectroscopy simulator"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single operating point: one time series and averaged spectra.
    Simulate(Common),
    /// Spectra along the configured scan axis.
    Scan(Common),
    /// Free oscillation modes of the ground state.
    Modes {
        /// Larmor frequency, Hz.
        #[arg(long, default_value_t = 1e6)]
        omega_l_hz: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Steady-state absorption versus polarization angle.
    Absorption(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration, applied before --config.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
enum Failure {
    UnknownKey(String),
    MissingFile(PathBuf),
    InvalidRange(String),
    Config(String),
    Partial(usize),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::UnknownKey(_) => 3,
            Failure::MissingFile(_) => 4,
            Failure::InvalidRange(_) => 5,
            Failure::Config(_) => 6,
            Failure::Partial(_) => 7,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::UnknownKey(k) => write!(f, "unknown configuration key `{k}`"),
            Failure::MissingFile(p) => write!(f, "configuration file not found: {}", p.display()),
            Failure::InvalidRange(m) => write!(f, "invalid scan range: {m}"),
            Failure::Config(m) => write!(f, "{m}"),
            Failure::Partial(n) => write!(f, "{n} scan point(s) failed; partial results written"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownKey(k) => Failure::UnknownKey(k),
            Error::InvalidRange(m) => Failure::InvalidRange(m),
            e @ Error::Config { .. } => Failure::Config(e.to_string()),
            e => Failure::Other(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<Error>() {
            Ok(inner) => inner.into(),
            Err(e) => Failure::Other(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

fn resolve(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::default();
    if let Some(name) = &common.preset {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| n == name || format!("{n}.cfg") == *name)
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
                Failure::Config(format!(
                    "unknown preset `{name}` (available: {})",
                    names.join(", ")
                ))
            })?;
        cfg.apply_text(text)?;
    }
    if let Some(path) = &common.config {
        if !path.is_file() {
            return Err(Failure::MissingFile(path.clone()));
        }
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text)?;
    }
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_manifest(dir: &Path, header: &str, cfg: &ExperimentConfig) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("run_manifest.cfg"))?);
    writeln!(w, "# {header}")?;
    w.write_all(cfg.to_manifest().as_bytes())?;
    w.flush()?;
    Ok(())
}

fn finish_scan(result: &ScanResult, out: &Path) -> Result<(), Failure> {
    let files = result.write(out)?;
    log::info!("wrote {} files to {}", files.len(), out.display());
    for f in &result.failures {
        eprintln!("error at axis value {}: {}", f.axis_value, f.error);
    }
    if result.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Partial(result.failures.len()))
    }
}

fn simulate(common: &Common) -> Result<(), Failure> {
    let mut cfg = resolve(common)?;
    cfg.axis = ScanAxis::None;
    write_manifest(&common.out, "simulate", &cfg)?;
    let theta = cfg.axis_values()?[0];
    let params = cfg.params_at(theta)?;
    let modes = cfg.mode.modes();
    let (series, _) =
        trajectory_signals(&cfg, &params, &modes, point_seed(cfg.master_seed, theta), 0)?;
    let mut w = BufWriter::new(File::create(common.out.join("timeseries.csv"))?);
    let names: Vec<&str> = modes.iter().map(|m| m.as_str()).collect();
    writeln!(w, "t_s,{}", names.join(","))?;
    let dt = cfg.trajectory.dt * cfg.trajectory.record_stride as f64;
    for k in 0..series[0].len() {
        write!(w, "{:e}", k as f64 * dt)?;
        for s in &series {
            write!(w, ",{:e}", s[k])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    let point = run_point(&cfg, theta)?;
    let result = ScanResult {
        axis: ScanAxis::None,
        points: vec![point],
        failures: Vec::new(),
    };
    finish_scan(&result, &common.out)
}

fn scan(common: &Common) -> Result<(), Failure> {
    let cfg = resolve(common)?;
    write_manifest(&common.out, "scan", &cfg)?;
    let result = run_scan(&cfg)?;
    finish_scan(&result, &common.out)
}

fn absorption(common: &Common) -> Result<(), Failure> {
    let cfg = resolve(common)?;
    write_manifest(&common.out, "absorption", &cfg)?;
    let thetas = cfg.axis_values()?;
    let points = absorption_scan(&cfg, &thetas)?;
    let mut w = BufWriter::new(File::create(common.out.join("absorption.csv"))?);
    write_absorption_csv(&points, &mut w)?;
    w.flush()?;
    Ok(())
}

fn modes(omega_l_hz: f64, out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out)?;
    let omega_l = 2.0 * std::f64::consts::PI * omega_l_hz;
    let mut summary = BufWriter::new(File::create(out.join("modes_summary.csv"))?);
    writeln!(
        summary,
        "initial_state,dominant_frequency_hz,expected_hz,file"
    )?;
    for init in InitialState::ALL {
        let report = oscillation_mode_report(omega_l, init)?;
        let name = format!("mode_{}.csv", init.as_str());
        let mut w = BufWriter::new(File::create(out.join(&name))?);
        report.write_csv(&mut w)?;
        w.flush()?;
        let expected = init.harmonic() as f64 * omega_l_hz;
        writeln!(
            summary,
            "{},{},{},{}",
            init.as_str(),
            report.dominant_frequency_hz,
            expected,
            name
        )?;
        println!(
            "{}: dominant frequency {} Hz",
            init.as_str(),
            report.dominant_frequency_hz
        );
    }
    summary.flush()?;
    let mut m = BufWriter::new(File::create(out.join("run_manifest.cfg"))?);
    writeln!(m, "# modes\nomega_l_hz = {omega_l_hz}")?;
    m.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let outcome = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Scan(c) => scan(c),
        Command::Absorption(c) => absorption(c),
        Command::Modes { omega_l_hz, out } => modes(*omega_l_hz, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
