//! Balanced polarimetric detection of the transmitted probe.
//!
//! The output field is a real mean field `E` along `e_θ` plus a small
//! fluctuation `e(t)`. Without a wave plate the balanced detector reads
//! `2E Re(e_⊥)` (rotation noise, RND); with the quarter-wave plate it reads
//! `2E Im(e_⊥)` (ellipticity noise, END).

use num_complex::Complex64;

use crate::error::Result;
use crate::integrator::{steady_state, StateVector};
use crate::spin::{circular_unit_vectors, DensityMatrix, SystemParams, C64, EXCITED};

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
const PLANCK: f64 = 6.626_070_15e-34;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Vacuum wavelength of the probe on the helium D0 line, m.
pub const PROBE_WAVELENGTH_M: f64 = 1.083e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectionMode {
    /// Rotation noise: in-phase part of the orthogonal fluctuation.
    Rnd,
    /// Ellipticity noise: quadrature part, after a quarter-wave plate.
    End,
}

impl DetectionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetectionMode::Rnd => "rnd",
            DetectionMode::End => "end",
        }
    }
}

impl std::fmt::Display for DetectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Transmitted-field fluctuation at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub e_plus: C64,
    pub e_minus: C64,
    pub e_par: C64,
    pub e_perp: C64,
    pub t: f64,
}

impl FieldSample {
    /// Cartesian `(x, y)` components.
    pub fn cartesian(&self) -> [C64; 2] {
        let [up, um] = circular_unit_vectors();
        [
            self.e_plus * up[0] + self.e_minus * um[0],
            self.e_plus * up[1] + self.e_minus * um[1],
        ]
    }
}

/// Projection of circular field components onto the frame of the mean
/// polarization at angle `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationFrame {
    par: [C64; 2],
    perp: [C64; 2],
}

impl PolarizationFrame {
    pub fn new(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let par_axis = [c, s];
        let perp_axis = [-s, c];
        let units = circular_unit_vectors();
        let dot = |axis: [f64; 2], u: [C64; 2]| u[0] * axis[0] + u[1] * axis[1];
        Self {
            par: [dot(par_axis, units[0]), dot(par_axis, units[1])],
            perp: [dot(perp_axis, units[0]), dot(perp_axis, units[1])],
        }
    }

    #[inline]
    pub fn project(&self, e_plus: C64, e_minus: C64) -> (C64, C64) {
        (
            e_plus * self.par[0] + e_minus * self.par[1],
            e_plus * self.perp[0] + e_minus * self.perp[1],
        )
    }
}

/// Field radiated by the optical coherences of a thin medium.
///
/// `e_+ = iκ ρ_{e,-1}/√3`, `e_- = -iκ ρ_{e,+1}/√3`, then reframed onto the
/// axes parallel and perpendicular to the input polarization.
#[derive(Debug, Clone, Copy)]
pub struct FieldMap {
    frame: PolarizationFrame,
    scale: f64,
}

impl FieldMap {
    pub fn new(params: &SystemParams) -> Self {
        Self {
            frame: PolarizationFrame::new(params.theta),
            scale: params.kappa / 3f64.sqrt(),
        }
    }

    #[inline]
    fn field(&self, rho_em1: C64, rho_ep1: C64, t: f64) -> FieldSample {
        let i = Complex64::i();
        let e_plus = i * self.scale * rho_em1;
        let e_minus = -i * self.scale * rho_ep1;
        let (e_par, e_perp) = self.frame.project(e_plus, e_minus);
        FieldSample {
            e_plus,
            e_minus,
            e_par,
            e_perp,
            t,
        }
    }

    pub fn sample(&self, rho: &DensityMatrix, t: f64) -> FieldSample {
        self.field(rho.get(EXCITED, 0), rho.get(EXCITED, 2), t)
    }

    #[inline]
    pub fn sample_state(&self, x: &StateVector, t: f64) -> FieldSample {
        self.field(x.element(EXCITED, 0), x.element(EXCITED, 2), t)
    }
}

pub fn field_from_coherences(rho: &DensityMatrix, params: &SystemParams) -> FieldSample {
    FieldMap::new(params).sample(rho, 0.0)
}

/// Rotation-noise signal `2E Re(e_⊥)`, first order in the fluctuation.
pub fn rnd_signal(sample: &FieldSample, mean_field: f64) -> f64 {
    2.0 * mean_field * sample.e_perp.re
}

/// Ellipticity-noise signal `2E Im(e_⊥)`.
pub fn end_signal(sample: &FieldSample, mean_field: f64) -> f64 {
    2.0 * mean_field * sample.e_perp.im
}

pub fn signal(mode: DetectionMode, sample: &FieldSample, mean_field: f64) -> f64 {
    match mode {
        DetectionMode::Rnd => rnd_signal(sample, mean_field),
        DetectionMode::End => end_signal(sample, mean_field),
    }
}

/// Balanced photodetector constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Responsivity, A/W.
    pub responsivity: f64,
    /// Transimpedance gain, V/A.
    pub transimpedance: f64,
    /// Electrical bandwidth, Hz.
    pub bandwidth: f64,
    /// Probe power entering the cell, W.
    pub input_power: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            responsivity: 0.7,
            transimpedance: 5e3,
            bandwidth: 9e6,
            input_power: 1e-3,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("responsivity_A_per_W", self.responsivity),
            ("transimpedance_V_per_A", self.transimpedance),
            ("bandwidth_Hz", self.bandwidth),
            ("input_power_W", self.input_power),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(crate::Error::config(key, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    /// Transmitted fraction `1 - absorbed`.
    pub transmission: f64,
    /// Absorbed fraction after clamping to `[0, 1]`.
    pub absorbed: f64,
    /// Set when the thin-medium estimate fell outside `[0, 1]`.
    pub clamped: bool,
}

/// Photon energy of the probe, J.
pub fn photon_energy() -> f64 {
    PLANCK * SPEED_OF_LIGHT / PROBE_WAVELENGTH_M
}

/// Thin-medium transmission from the scattered power `ħω Γ0 ρ_ee N̄`.
pub fn transmission(params: &SystemParams, det: &DetectorParams) -> Result<Transmission> {
    det.validate()?;
    let rho = steady_state(params)?;
    Ok(transmission_from_state(&rho, params, det))
}

pub fn transmission_from_state(
    rho: &DensityMatrix,
    params: &SystemParams,
    det: &DetectorParams,
) -> Transmission {
    let scattered = photon_energy() * params.gamma0 * rho.population(EXCITED) * params.n_atoms;
    let raw = scattered / det.input_power;
    let absorbed = raw.clamp(0.0, 1.0);
    let clamped = absorbed != raw;
    if clamped {
        log::warn!(
            "absorbed fraction {raw:.3} outside [0, 1] at theta = {:.1} deg; thin-medium estimate clamped",
            params.theta.to_degrees()
        );
    }
    Transmission {
        transmission: 1.0 - absorbed,
        absorbed,
        clamped,
    }
}

/// Shot-noise voltage PSD of the balanced detector, V²/Hz (one-sided).
pub fn shot_noise_floor(det: &DetectorParams, transmission: f64) -> f64 {
    let detected_power = transmission * det.input_power;
    2.0 * ELEMENTARY_CHARGE * det.responsivity * detected_power * det.transimpedance.powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::CMatrix4;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn near_resonant(theta_deg: f64) -> SystemParams {
        SystemParams {
            theta: theta_deg.to_radians(),
            delta: 2.0 * PI * 0.3e9,
            rabi: 2.0 * PI * 30e6,
            ..SystemParams::default()
        }
    }

    #[test]
    fn no_coherence_no_field() {
        let s = field_from_coherences(&DensityMatrix::equilibrium(), &SystemParams::default());
        assert_eq!(s.e_plus, C64::new(0.0, 0.0));
        assert_eq!(s.e_perp, C64::new(0.0, 0.0));
    }

    #[test]
    fn static_rotation_vanishes_at_zero_angle() {
        for delta_hz in [0.3e9, 1.5e9] {
            let p = SystemParams {
                theta: 0.0,
                delta: 2.0 * PI * delta_hz,
                ..SystemParams::default()
            };
            let rho = steady_state(&p).unwrap();
            let s = field_from_coherences(&rho, &p);
            assert!(s.e_par.norm() > 1e-6);
            assert!(s.e_perp.norm() < 1e-9 * s.e_par.norm());
        }
    }

    #[test]
    fn field_is_linear_in_kappa() {
        let p = SystemParams {
            theta: 0.4,
            ..SystemParams::default()
        };
        let rho = steady_state(&p).unwrap();
        let a = field_from_coherences(&rho, &p);
        let b = field_from_coherences(&rho, &SystemParams { kappa: 2.0, ..p });
        assert!((b.e_plus - a.e_plus * 2.0).norm() < 1e-15);
        assert!((b.e_perp - a.e_perp * 2.0).norm() < 1e-15);
    }

    fn sample_with_perp(e_perp: C64, e_par: C64) -> FieldSample {
        FieldSample {
            e_plus: C64::new(0.0, 0.0),
            e_minus: C64::new(0.0, 0.0),
            e_par,
            e_perp,
            t: 0.0,
        }
    }

    #[test]
    fn detection_quadratures() {
        let real = sample_with_perp(C64::new(0.3, 0.0), C64::new(0.0, 0.0));
        assert_eq!(rnd_signal(&real, 2.0), 1.2);
        assert_eq!(end_signal(&real, 2.0), 0.0);

        let imag = sample_with_perp(C64::new(0.0, 0.3), C64::new(0.0, 0.0));
        assert_eq!(rnd_signal(&imag, 2.0), 0.0);
        assert_eq!(end_signal(&imag, 2.0), 1.2);

        let parallel_only = sample_with_perp(C64::new(0.0, 0.0), C64::new(0.7, -0.2));
        assert_eq!(rnd_signal(&parallel_only, 1.0), 0.0);
        assert_eq!(end_signal(&parallel_only, 1.0), 0.0);
    }

    #[test]
    fn absorption_vanishes_without_light() {
        let p = SystemParams {
            rabi: 0.0,
            ..near_resonant(30.0)
        };
        let t = transmission(&p, &DetectorParams::default()).unwrap();
        assert_eq!(t.transmission, 1.0);
        assert!(!t.clamped);
    }

    #[test]
    fn absorption_peaks_at_magic_angle_and_dips_at_zero() {
        let det = DetectorParams::default();
        let angles: Vec<f64> = (0..=180).map(|k| k as f64 * 0.5).collect();
        let absorbed: Vec<f64> = angles
            .iter()
            .map(|&a| transmission(&near_resonant(a), &det).unwrap().absorbed)
            .collect();
        let (imax, _) = absorbed
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let (imin, _) = absorbed
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!(
            (52.0..=58.0).contains(&angles[imax]),
            "argmax {}",
            angles[imax]
        );
        assert_eq!(angles[imin], 0.0);
    }

    #[test]
    fn absorption_grows_with_probe_intensity_when_weak() {
        let det = DetectorParams::default();
        let mut last = 0.0;
        for k in 1..=10 {
            let p = SystemParams {
                rabi: 2.0 * PI * 0.2e6 * k as f64,
                ..near_resonant(40.0)
            };
            let a = transmission(&p, &det).unwrap().absorbed;
            assert!(a > last);
            last = a;
        }
    }

    #[test]
    fn shot_noise_reference_level() {
        let det = DetectorParams::default();
        let floor = shot_noise_floor(&det, 1.0);
        let want = 2.0 * 1.602e-19 * 0.7 * 1e-3 * 5e3 * 5e3;
        assert!((floor - want).abs() < 1e-3 * want);
        assert!((floor - 5.6e-15).abs() < 0.03 * 5.6e-15);
        assert_eq!(shot_noise_floor(&det, 0.0), 0.0);
        assert!((shot_noise_floor(&det, 0.37) - 0.37 * floor).abs() < 1e-28);
    }

    proptest! {
        #[test]
        fn reframing_preserves_norm(re_p in -1.0f64..1.0, im_p in -1.0f64..1.0,
                                    re_m in -1.0f64..1.0, im_m in -1.0f64..1.0,
                                    theta in -7.0f64..7.0) {
            let ep = C64::new(re_p, im_p);
            let em = C64::new(re_m, im_m);
            let (par, perp) = PolarizationFrame::new(theta).project(ep, em);
            let lhs = par.norm_sqr() + perp.norm_sqr();
            let rhs = ep.norm_sqr() + em.norm_sqr();
            prop_assert!((lhs - rhs).abs() < 1e-13);
        }

        #[test]
        fn quadratures_recombine(re in -1.0f64..1.0, im in -1.0f64..1.0, e in 0.1f64..10.0) {
            let s = sample_with_perp(C64::new(re, im), C64::new(0.0, 0.0));
            let r = rnd_signal(&s, e);
            let q = end_signal(&s, e);
            prop_assert!((r * r + q * q - 4.0 * e * e * s.e_perp.norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn cartesian_view_agrees_with_frame() {
        let mut m = CMatrix4::zeros();
        m[(3, 0)] = C64::new(0.01, 0.02);
        m[(0, 3)] = m[(3, 0)].conj();
        m[(3, 2)] = C64::new(-0.03, 0.005);
        m[(2, 3)] = m[(3, 2)].conj();
        let theta = 0.7;
        let p = SystemParams {
            theta,
            ..SystemParams::default()
        };
        let s = field_from_coherences(&DensityMatrix::new(m).unwrap(), &p);
        let [ex, ey] = s.cartesian();
        let perp = ex * (-theta.sin()) + ey * theta.cos();
        assert!((perp - s.e_perp).norm() < 1e-15);
    }
}
