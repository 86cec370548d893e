//! Measurements used by the acceptance checks: experiment presets, Larmor
//! line powers and a small pass/fail report.

use std::fmt;

use spinnoise::config::{AxisRange, ExperimentConfig, ModeSelection, ScanAxis};
use spinnoise::detection::DetectionMode;
use spinnoise::scan::{ScanPoint, ScanResult};
use spinnoise::spectral::{find_peak, Floor, PeakReport};
use spinnoise::Result;

/// Far-detuned operating point: 1.5 GHz, Ω/2π = 40 MHz.
pub fn far_detuned() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.physics.delta_hz = 1.5e9;
    cfg.physics.rabi_hz = 40e6;
    cfg
}

/// Near-resonant operating point: 0.3 GHz, Ω/2π = 30 MHz.
pub fn near_resonant() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.physics.delta_hz = 0.3e9;
    cfg.physics.rabi_hz = 30e6;
    cfg
}

/// Polarization scan of both detection channels.
pub fn theta_scan(
    mut cfg: ExperimentConfig,
    range: AxisRange,
    n_trajectories: usize,
    seed: u64,
) -> Result<ScanResult> {
    cfg.axis = ScanAxis::Theta;
    cfg.range = range;
    cfg.mode = ModeSelection::Both;
    cfg.n_trajectories = n_trajectories;
    cfg.master_seed = seed;
    spinnoise::scan::run_scan(&cfg)
}

pub fn larmor_hz(point: &ScanPoint) -> f64 {
    point.params.omega_l / (2.0 * std::f64::consts::PI)
}

/// Integrated line at `harmonic` times the Larmor frequency, over a window
/// of half a Larmor frequency on either side. The floor is the shot-noise
/// level when it was added to the spectrum and zero otherwise.
pub fn line(
    point: &ScanPoint,
    mode: DetectionMode,
    harmonic: usize,
    with_shot_noise: bool,
) -> Result<PeakReport> {
    let f_l = larmor_hz(point);
    let spec = point
        .spectrum(mode)
        .ok_or_else(|| spinnoise::Error::Domain(format!("no {mode} spectrum")))?;
    let floor = if with_shot_noise {
        point.shot_floor
    } else {
        0.0
    };
    find_peak(
        spec,
        harmonic as f64 * f_l,
        0.5 * f_l,
        Floor::Constant(floor),
    )
}

/// Half the relative spread, `(max - min) / (max + min)`; a value of 0.25
/// means the data lie within ±25 % of their mid-range.
pub fn variation(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / (max + min)
}

/// Index and value of the largest entry.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
}

pub fn argmin(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
}

#[derive(Debug, Clone)]
pub struct Check {
    pub id: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {:<5} {}", self.id, self.detail)
    }
}

/// Ordered list of checks, printed as they are recorded.
#[derive(Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn record(&mut self, id: &str, pass: bool, detail: impl Into<String>) {
        let check = Check {
            id: id.to_string(),
            pass,
            detail: detail.into(),
        };
        println!("{check}");
        self.checks.push(check);
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}
