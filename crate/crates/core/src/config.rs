//! Experiment configuration and its flat `key=value` text form.
//!
//! Files hold one `key = value` pair per line; `#` starts a comment.
//! Frequencies are given in Hz (not rad/s), angles in degrees and fields
//! in gauss. [`ExperimentConfig::to_manifest`] writes every key, so a
//! manifest read back with [`ExperimentConfig::parse`] reproduces the
//! configuration exactly.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::detection::{DetectionMode, DetectorParams};
use crate::error::{Error, Result};
use crate::integrator::TrajectoryConfig;
use crate::spin::{atoms_in_beam, larmor_from_field, SystemParams};

/// Physical operating point in laboratory units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsConfig {
    pub theta_deg: f64,
    pub b_gauss: f64,
    pub delta_hz: f64,
    pub rabi_hz: f64,
    pub gamma0_hz: f64,
    pub gamma_opt_hz: f64,
    pub gamma_t_hz: f64,
    pub gamma_r_hz: f64,
    pub n_atoms: f64,
    pub kappa: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            theta_deg: 0.0,
            b_gauss: 1.0,
            delta_hz: 1.5e9,
            rabi_hz: 40e6,
            gamma0_hz: 1.6e6,
            gamma_opt_hz: 0.8e9,
            gamma_t_hz: 30e3,
            gamma_r_hz: 30e3,
            n_atoms: atoms_in_beam(2e11, 0.6e-3, 0.06),
            kappa: 1.0,
        }
    }
}

impl PhysicsConfig {
    pub fn to_params(&self) -> Result<SystemParams> {
        let w = |hz: f64| 2.0 * PI * hz;
        let p = SystemParams {
            omega_l: larmor_from_field(self.b_gauss)?,
            rabi: w(self.rabi_hz),
            theta: self.theta_deg.to_radians(),
            delta: w(self.delta_hz),
            gamma0: w(self.gamma0_hz),
            gamma_opt: w(self.gamma_opt_hz),
            gamma_t: w(self.gamma_t_hz),
            gamma_r: w(self.gamma_r_hz),
            n_atoms: self.n_atoms,
            kappa: self.kappa,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanAxis {
    /// Polarization angle, degrees.
    Theta,
    /// Magnetic field, gauss.
    BField,
    /// Optical detuning, Hz.
    Detuning,
    /// A single point at the configured operating point.
    None,
}

impl ScanAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScanAxis::Theta => "theta",
            ScanAxis::BField => "b_field",
            ScanAxis::Detuning => "detuning",
            ScanAxis::None => "none",
        }
    }
}

impl FromStr for ScanAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta" => Ok(ScanAxis::Theta),
            "b_field" => Ok(ScanAxis::BField),
            "detuning" => Ok(ScanAxis::Detuning),
            "none" => Ok(ScanAxis::None),
            _ => Err(Error::config(
                "scan_axis",
                format!("expected theta, b_field, detuning or none, got `{s}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSelection {
    Rnd,
    End,
    Both,
}

impl ModeSelection {
    pub fn modes(&self) -> Vec<DetectionMode> {
        match self {
            ModeSelection::Rnd => vec![DetectionMode::Rnd],
            ModeSelection::End => vec![DetectionMode::End],
            ModeSelection::Both => vec![DetectionMode::Rnd, DetectionMode::End],
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModeSelection::Rnd => "rnd",
            ModeSelection::End => "end",
            ModeSelection::Both => "both",
        }
    }
}

impl FromStr for ModeSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnd" => Ok(ModeSelection::Rnd),
            "end" => Ok(ModeSelection::End),
            "both" => Ok(ModeSelection::Both),
            _ => Err(Error::config(
                "mode",
                format!("expected rnd, end or both, got `{s}`"),
            )),
        }
    }
}

/// Inclusive range of axis values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

/// Axis values are resolved to `1 / AXIS_RESOLUTION` of their unit.
pub const AXIS_RESOLUTION: f64 = 1e6;

impl AxisRange {
    pub fn single(value: f64) -> Self {
        Self {
            start: value,
            stop: value,
            step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.start.is_finite() || !self.stop.is_finite() || !self.step.is_finite() {
            return Err(Error::InvalidRange(
                "start, stop and step must be finite".into(),
            ));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidRange(format!(
                "step must be > 0, got {}",
                self.step
            )));
        }
        if self.stop < self.start {
            return Err(Error::InvalidRange(format!(
                "empty range: stop ({}) < start ({})",
                self.stop, self.start
            )));
        }
        if (self.stop - self.start) / self.step > 1e7 {
            return Err(Error::InvalidRange("more than 10^7 points".into()));
        }
        Ok(())
    }

    /// Axis values, snapped to the axis resolution.
    pub fn values(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n)
            .map(|i| snap(self.start + i as f64 * self.step))
            .collect())
    }
}

/// Rounds an axis value to the axis resolution.
pub fn snap(value: f64) -> f64 {
    axis_key(value) as f64 / AXIS_RESOLUTION
}

/// Integer identity of an axis value.
pub fn axis_key(value: f64) -> i64 {
    (value * AXIS_RESOLUTION).round() as i64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub physics: PhysicsConfig,
    pub axis: ScanAxis,
    pub range: AxisRange,
    pub mode: ModeSelection,
    pub trajectory: TrajectoryConfig,
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub detector: DetectorParams,
    pub rbw_hz: f64,
    pub vbw_hz: f64,
    /// Amplitude of the transmitted probe field multiplying the signals.
    pub mean_field: f64,
    /// Add the shot-noise floor to every spectrum.
    pub add_shot_noise: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            physics: PhysicsConfig::default(),
            axis: ScanAxis::None,
            range: AxisRange::single(0.0),
            mode: ModeSelection::Both,
            trajectory: TrajectoryConfig::default(),
            n_trajectories: 64,
            master_seed: 1,
            detector: DetectorParams::default(),
            rbw_hz: 91e3,
            vbw_hz: 91e3,
            mean_field: 1.0,
            add_shot_noise: false,
        }
    }
}

/// Every recognised key, in manifest order.
pub const KEYS: [&str; 31] = [
    "theta_deg",
    "b_gauss",
    "delta_hz",
    "rabi_hz",
    "gamma0_hz",
    "gamma_opt_hz",
    "gamma_t_hz",
    "gamma_r_hz",
    "n_atoms",
    "kappa",
    "dt_s",
    "n_steps",
    "burn_in_steps",
    "record_stride",
    "scheme",
    "noise",
    "n_trajectories",
    "master_seed",
    "responsivity_A_per_W",
    "transimpedance_V_per_A",
    "bandwidth_Hz",
    "input_power_W",
    "scan_axis",
    "scan_start",
    "scan_stop",
    "scan_step",
    "mode",
    "rbw_hz",
    "vbw_hz",
    "mean_field",
    "add_shot_noise",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(
            key,
            format!("expected true or false, got `{value}`"),
        )),
    }
}

impl ExperimentConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let f = || parse_value::<f64>(key, value);
        let u = || parse_value::<usize>(key, value);
        match key {
            "theta_deg" => self.physics.theta_deg = f()?,
            "b_gauss" => self.physics.b_gauss = f()?,
            "delta_hz" => self.physics.delta_hz = f()?,
            "rabi_hz" => self.physics.rabi_hz = f()?,
            "gamma0_hz" => self.physics.gamma0_hz = f()?,
            "gamma_opt_hz" => self.physics.gamma_opt_hz = f()?,
            "gamma_t_hz" => self.physics.gamma_t_hz = f()?,
            "gamma_r_hz" => self.physics.gamma_r_hz = f()?,
            "n_atoms" => self.physics.n_atoms = f()?,
            "kappa" => self.physics.kappa = f()?,
            "dt_s" => self.trajectory.dt = f()?,
            "n_steps" => self.trajectory.n_steps = u()?,
            "burn_in_steps" => self.trajectory.burn_in_steps = u()?,
            "record_stride" => self.trajectory.record_stride = u()?,
            "scheme" => self.trajectory.scheme = value.parse()?,
            "noise" => self.trajectory.noise = parse_bool(key, value)?,
            "n_trajectories" => self.n_trajectories = u()?,
            "master_seed" => self.master_seed = parse_value(key, value)?,
            "responsivity_A_per_W" => self.detector.responsivity = f()?,
            "transimpedance_V_per_A" => self.detector.transimpedance = f()?,
            "bandwidth_Hz" => self.detector.bandwidth = f()?,
            "input_power_W" => self.detector.input_power = f()?,
            "scan_axis" => self.axis = value.parse()?,
            "scan_start" => self.range.start = f()?,
            "scan_stop" => self.range.stop = f()?,
            "scan_step" => self.range.step = f()?,
            "mode" => self.mode = value.parse()?,
            "rbw_hz" => self.rbw_hz = f()?,
            "vbw_hz" => self.vbw_hz = f()?,
            "mean_field" => self.mean_field = f()?,
            "add_shot_noise" => self.add_shot_noise = parse_bool(key, value)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(line, format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must have the form key=value"))?;
        self.set(key.trim(), value)
    }

    /// Defaults overlaid with `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Textual value of `key`.
    pub fn get(&self, key: &str) -> Result<String> {
        let p = &self.physics;
        let t = &self.trajectory;
        let d = &self.detector;
        Ok(match key {
            "theta_deg" => p.theta_deg.to_string(),
            "b_gauss" => p.b_gauss.to_string(),
            "delta_hz" => p.delta_hz.to_string(),
            "rabi_hz" => p.rabi_hz.to_string(),
            "gamma0_hz" => p.gamma0_hz.to_string(),
            "gamma_opt_hz" => p.gamma_opt_hz.to_string(),
            "gamma_t_hz" => p.gamma_t_hz.to_string(),
            "gamma_r_hz" => p.gamma_r_hz.to_string(),
            "n_atoms" => p.n_atoms.to_string(),
            "kappa" => p.kappa.to_string(),
            "dt_s" => t.dt.to_string(),
            "n_steps" => t.n_steps.to_string(),
            "burn_in_steps" => t.burn_in_steps.to_string(),
            "record_stride" => t.record_stride.to_string(),
            "scheme" => t.scheme.to_string(),
            "noise" => t.noise.to_string(),
            "n_trajectories" => self.n_trajectories.to_string(),
            "master_seed" => self.master_seed.to_string(),
            "responsivity_A_per_W" => d.responsivity.to_string(),
            "transimpedance_V_per_A" => d.transimpedance.to_string(),
            "bandwidth_Hz" => d.bandwidth.to_string(),
            "input_power_W" => d.input_power.to_string(),
            "scan_axis" => self.axis.as_str().to_string(),
            "scan_start" => self.range.start.to_string(),
            "scan_stop" => self.range.stop.to_string(),
            "scan_step" => self.range.step.to_string(),
            "mode" => self.mode.as_str().to_string(),
            "rbw_hz" => self.rbw_hz.to_string(),
            "vbw_hz" => self.vbw_hz.to_string(),
            "mean_field" => self.mean_field.to_string(),
            "add_shot_noise" => self.add_shot_noise.to_string(),
            _ => return Err(Error::UnknownKey(key.to_string())),
        })
    }

    /// Fully resolved configuration, one key per line.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.get(key).expect("KEYS lists only known keys");
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let base = self.physics.to_params()?;
        self.detector.validate()?;
        self.range.validate()?;
        if self.n_trajectories == 0 {
            return Err(Error::config("n_trajectories", "must be >= 1"));
        }
        for (key, v) in [
            ("rbw_hz", self.rbw_hz),
            ("vbw_hz", self.vbw_hz),
            ("mean_field", self.mean_field),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(
                    key,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        if self.vbw_hz > self.rbw_hz {
            return Err(Error::config("vbw_hz", "must not exceed rbw_hz"));
        }
        self.trajectory.validate(&base)?;
        Ok(())
    }

    /// Axis values of the scan; the single theta of the operating point when
    /// no axis is scanned.
    pub fn axis_values(&self) -> Result<Vec<f64>> {
        match self.axis {
            ScanAxis::None => Ok(vec![snap(self.physics.theta_deg)]),
            _ => self.range.values(),
        }
    }

    /// Physics settings with the scanned quantity replaced by `value`.
    pub fn physics_at(&self, value: f64) -> PhysicsConfig {
        let mut p = self.physics;
        match self.axis {
            ScanAxis::Theta | ScanAxis::None => p.theta_deg = value,
            ScanAxis::BField => p.b_gauss = value,
            ScanAxis::Detuning => p.delta_hz = value,
        }
        p
    }

    pub fn params_at(&self, value: f64) -> Result<SystemParams> {
        self.physics_at(value).to_params()
    }
}
