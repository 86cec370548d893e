//! Experiment orchestration: polarization, field and detuning scans,
//! absorption curves and the free oscillation modes of the ground state.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::config::{axis_key, snap, ExperimentConfig, ScanAxis};
use crate::detection::{
    shot_noise_floor, signal, transmission, transmission_from_state, DetectionMode, FieldMap,
    Transmission,
};
use crate::error::{Error, Result};
use crate::integrator::{evolve_with, free_evolve_ground, steady_state, GroundState3};
use crate::noise::trajectory_rng;
use crate::spectral::{
    average_spectra, video_average, SpectrumMeta, SpectrumRecord, WelchEstimator,
};
use crate::spin::{SystemParams, C64};

/// Results at one axis value.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub axis_value: f64,
    pub params: SystemParams,
    pub transmission: Transmission,
    /// Shot-noise PSD at the detected power, V²/Hz.
    pub shot_floor: f64,
    /// One averaged spectrum per detection mode, in the configured order.
    pub spectra: Vec<SpectrumRecord>,
    /// Smallest density-matrix eigenvalue met across all trajectories.
    pub min_eigenvalue: f64,
}

impl ScanPoint {
    pub fn spectrum(&self, mode: DetectionMode) -> Option<&SpectrumRecord> {
        self.spectra.iter().find(|s| s.meta.mode == Some(mode))
    }
}

#[derive(Debug)]
pub struct ScanFailure {
    pub axis_value: f64,
    pub error: Error,
}

#[derive(Debug)]
pub struct ScanResult {
    pub axis: ScanAxis,
    /// Successful points in axis order.
    pub points: Vec<ScanPoint>,
    pub failures: Vec<ScanFailure>,
}

impl ScanResult {
    pub fn axis_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.axis_value).collect()
    }

    pub fn point(&self, axis_value: f64) -> Option<&ScanPoint> {
        let key = axis_key(axis_value);
        self.points.iter().find(|p| axis_key(p.axis_value) == key)
    }

    /// Writes one CSV per point and mode plus `manifest.csv`; returns the
    /// paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let manifest_path = dir.join("manifest.csv");
        let mut manifest = BufWriter::new(File::create(&manifest_path)?);
        writeln!(
            manifest,
            "axis_value,mode,transmission,shot_floor_v2_per_hz,file"
        )?;
        for p in &self.points {
            for spec in &p.spectra {
                let mode = spec.meta.mode.map_or("none", |m| m.as_str());
                let name = format!("{}_{}_{}.csv", self.axis.as_str(), p.axis_value, mode);
                let path = dir.join(&name);
                let mut w = BufWriter::new(File::create(&path)?);
                spec.write_csv(&mut w)?;
                w.flush()?;
                writeln!(
                    manifest,
                    "{},{},{},{:e},{}",
                    p.axis_value, mode, p.transmission.transmission, p.shot_floor, name
                )?;
                written.push(path);
            }
        }
        manifest.flush()?;
        written.push(manifest_path);
        Ok(written)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of every trajectory at an axis value. Depends only on the master
/// seed and the value itself, so a point gives the same spectra whichever
/// range it is computed in.
pub fn point_seed(master_seed: u64, axis_value: f64) -> u64 {
    master_seed ^ splitmix64(axis_key(axis_value) as u64)
}

/// Detection signals of one trajectory, one series per mode.
pub fn trajectory_signals(
    cfg: &ExperimentConfig,
    params: &SystemParams,
    modes: &[DetectionMode],
    seed: u64,
    index: usize,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let rho0 = steady_state(params)?;
    let map = FieldMap::new(params);
    let t = &cfg.trajectory;
    let mut out: Vec<Vec<f64>> = modes
        .iter()
        .map(|_| Vec::with_capacity(t.n_recorded()))
        .collect();
    let mut rng = trajectory_rng(seed, index as u64);
    let sample_dt = t.dt * t.record_stride as f64;
    let t0 = t.burn_in_steps as f64 * t.dt;
    let summary = evolve_with(&rho0, params, t, &mut rng, |k, x| {
        let s = map.sample_state(x, t0 + k as f64 * sample_dt);
        for (series, &m) in out.iter_mut().zip(modes) {
            series.push(signal(m, &s, cfg.mean_field));
        }
    })?;
    Ok((out, summary.min_eigenvalue))
}

/// Runs every trajectory at one axis value and averages their spectra.
pub fn run_point(cfg: &ExperimentConfig, axis_value: f64) -> Result<ScanPoint> {
    let axis_value = snap(axis_value);
    let params = cfg.params_at(axis_value)?;
    cfg.trajectory.validate(&params)?;
    let modes = cfg.mode.modes();
    let rho0 = steady_state(&params)?;
    let trans = transmission_from_state(&rho0, &params, &cfg.detector);
    let floor = shot_noise_floor(&cfg.detector, trans.transmission);
    let est = WelchEstimator::new(
        cfg.trajectory.dt * cfg.trajectory.record_stride as f64,
        cfg.rbw_hz,
    )?;
    let seed = point_seed(cfg.master_seed, axis_value);

    let per_traj: Vec<(Vec<SpectrumRecord>, f64)> = (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let (series, min_eig) = trajectory_signals(cfg, &params, &modes, seed, i)?;
            let spectra = series
                .iter()
                .map(|s| est.estimate(s))
                .collect::<Result<Vec<_>>>()?;
            Ok((spectra, min_eig))
        })
        .collect::<Result<_>>()?;

    let min_eigenvalue = per_traj
        .iter()
        .map(|(_, e)| *e)
        .fold(f64::INFINITY, f64::min);
    let mut spectra = Vec::with_capacity(modes.len());
    for (j, &mode) in modes.iter().enumerate() {
        let group: Vec<SpectrumRecord> = per_traj.iter().map(|(s, _)| s[j].clone()).collect();
        let mut avg = average_spectra(&group)?;
        if cfg.vbw_hz < avg.rbw {
            avg = video_average(&avg, cfg.vbw_hz)?;
        }
        if cfg.add_shot_noise {
            avg.add_floor(floor);
        }
        let p = cfg.physics_at(axis_value);
        avg.meta = SpectrumMeta {
            theta_deg: p.theta_deg,
            b_gauss: p.b_gauss,
            delta_hz: p.delta_hz,
            mode: Some(mode),
            seed: cfg.master_seed,
        };
        spectra.push(avg);
    }
    Ok(ScanPoint {
        axis_value,
        params,
        transmission: trans,
        shot_floor: floor,
        spectra,
        min_eigenvalue,
    })
}

/// Runs the configured scan. Points are independent; a point that fails is
/// reported in [`ScanResult::failures`] and the others are kept.
pub fn run_scan(cfg: &ExperimentConfig) -> Result<ScanResult> {
    cfg.validate()?;
    let values = cfg.axis_values()?;
    let outcomes: Vec<(f64, Result<ScanPoint>)> =
        values.par_iter().map(|&v| (v, run_point(cfg, v))).collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (axis_value, outcome) in outcomes {
        match outcome {
            Ok(p) => points.push(p),
            Err(error) => {
                log::error!("{} = {axis_value}: {error}", cfg.axis.as_str());
                failures.push(ScanFailure { axis_value, error });
            }
        }
    }
    Ok(ScanResult {
        axis: cfg.axis,
        points,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorptionPoint {
    pub theta_deg: f64,
    pub absorption: f64,
    pub transmission: f64,
    pub shot_floor: f64,
}

/// Steady-state absorbed fraction at each polarization angle.
pub fn absorption_scan(cfg: &ExperimentConfig, thetas_deg: &[f64]) -> Result<Vec<AbsorptionPoint>> {
    cfg.detector.validate()?;
    thetas_deg
        .par_iter()
        .map(|&theta_deg| {
            let mut p = cfg.physics;
            p.theta_deg = theta_deg;
            let t = transmission(&p.to_params()?, &cfg.detector)?;
            Ok(AbsorptionPoint {
                theta_deg,
                absorption: t.absorbed,
                transmission: t.transmission,
                shot_floor: shot_noise_floor(&cfg.detector, t.transmission),
            })
        })
        .collect()
}

pub fn write_absorption_csv<W: Write>(points: &[AbsorptionPoint], mut w: W) -> Result<()> {
    writeln!(w, "theta_deg,absorption,transmission,shot_floor_v2_per_hz")?;
    for p in points {
        writeln!(
            w,
            "{},{:e},{},{:e}",
            p.theta_deg, p.absorption, p.transmission, p.shot_floor
        )?;
    }
    Ok(())
}

/// Initial ground states of the three free oscillation modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// `|-1>_z`.
    Minus1Z,
    /// `|x> = (|-1>_z + |+1>_z)/√2`.
    X,
    /// `|-π/4> = (e^{iπ/4}|-1>_z + e^{-iπ/4}|+1>_z)/√2`.
    MinusPi4,
}

impl InitialState {
    pub const ALL: [InitialState; 3] = [
        InitialState::Minus1Z,
        InitialState::X,
        InitialState::MinusPi4,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            InitialState::Minus1Z => "minus1_z",
            InitialState::X => "x",
            InitialState::MinusPi4 => "minus_pi_4",
        }
    }

    /// Expected oscillation frequency in units of the Larmor frequency.
    pub fn harmonic(&self) -> usize {
        match self {
            InitialState::X => 2,
            _ => 1,
        }
    }

    pub fn ket(&self) -> [C64; 3] {
        self.basis()[0].1
    }

    /// Basis the populations are reported in; the first vector is the
    /// initial state.
    pub fn basis(&self) -> [(&'static str, [C64; 3]); 3] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let r = |v: f64| C64::new(v, 0.0);
        let phase = |a: f64| C64::from_polar(s, a);
        let q = std::f64::consts::FRAC_PI_4;
        match self {
            InitialState::Minus1Z => [
                ("m-1_z", [one, z, z]),
                ("m0_z", [z, one, z]),
                ("m+1_z", [z, z, one]),
            ],
            InitialState::X => [
                ("x", [r(s), z, r(s)]),
                ("y", [C64::new(0.0, s), z, C64::new(0.0, -s)]),
                ("m0_z", [z, one, z]),
            ],
            InitialState::MinusPi4 => [
                ("minus_pi_4", [phase(q), z, phase(-q)]),
                ("pi_4", [phase(-q), z, phase(q)]),
                ("m0_z", [z, one, z]),
            ],
        }
    }
}

impl std::str::FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InitialState::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown initial state `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    pub initial: InitialState,
    pub times: Vec<f64>,
    pub basis_labels: [&'static str; 3],
    pub populations: [Vec<f64>; 3],
    /// Strongest nonzero frequency of each population, Hz; `None` for a
    /// constant population.
    pub dominant_hz: [Option<f64>; 3],
    /// Frequency carrying the largest oscillation amplitude overall, Hz.
    pub dominant_frequency_hz: f64,
    /// Bin spacing of the analysis, Hz.
    pub resolution_hz: f64,
}

impl ModeReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# initial_state={}", self.initial.as_str())?;
        writeln!(w, "# dominant_frequency_hz={}", self.dominant_frequency_hz)?;
        let [a, b, c] = self.basis_labels;
        writeln!(w, "t_s,{a},{b},{c}")?;
        for (k, t) in self.times.iter().enumerate() {
            writeln!(
                w,
                "{t:e},{:e},{:e},{:e}",
                self.populations[0][k], self.populations[1][k], self.populations[2][k]
            )?;
        }
        Ok(())
    }
}

/// Samples per Larmor period in [`oscillation_mode_report`].
pub const MODE_SAMPLES: usize = 256;

/// Field-only evolution over one Larmor period from one of the three
/// reference states, with the dominant frequency of each population.
pub fn oscillation_mode_report(omega_l: f64, initial: InitialState) -> Result<ModeReport> {
    if !(omega_l > 0.0) || !omega_l.is_finite() {
        return Err(Error::domain(format!(
            "omega_L must be finite and > 0, got {omega_l}"
        )));
    }
    let period = 2.0 * std::f64::consts::PI / omega_l;
    let n = MODE_SAMPLES;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * period / n as f64).collect();
    let rho0 = GroundState3::pure(initial.ket())?;
    let states = free_evolve_ground(&rho0, omega_l, &times)?;
    let basis = initial.basis();
    let populations: [Vec<f64>; 3] = std::array::from_fn(|j| {
        states
            .iter()
            .map(|s| s.population_of(&basis[j].1))
            .collect()
    });

    let fft = FftPlanner::new().plan_fft_forward(n);
    let resolution_hz = 1.0 / period;
    let mut best = (0.0, 0.0);
    let mut dominant_hz = [None; 3];
    for (j, pops) in populations.iter().enumerate() {
        let mut buf: Vec<rustfft::num_complex::Complex<f64>> = pops
            .iter()
            .map(|&p| rustfft::num_complex::Complex::new(p, 0.0))
            .collect();
        fft.process(&mut buf);
        let (k, amp) = (1..=n / 2)
            .map(|k| (k, buf[k].norm() / n as f64))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if amp > 1e-9 {
            let f = k as f64 * resolution_hz;
            dominant_hz[j] = Some(f);
            if amp > best.1 {
                best = (f, amp);
            }
        }
    }
    Ok(ModeReport {
        initial,
        times,
        basis_labels: basis.map(|b| b.0),
        populations,
        dominant_hz,
        dominant_frequency_hz: best.0,
        resolution_hz,
    })
}
