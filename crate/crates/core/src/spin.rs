//! Spin-1 ground state coupled to a J=0 excited level.
//!
//! States are written in the basis `{|-1>_z, |0>_z, |+1>_z, |e>}` with the
//! quantization axis along the probe propagation direction `z`. The static
//! magnetic field lies along `x`, and the probe polarization makes an angle
//! `theta` with it. All frequencies are angular (rad/s).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{Matrix3, Matrix4};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix4 = Matrix4<C64>;
pub type CMatrix3 = Matrix3<C64>;

/// Index of the excited level.
pub const EXCITED: usize = 3;

/// Zeeman shift of the `m = ±1` sublevels, Hz per gauss.
pub const ZEEMAN_HZ_PER_GAUSS: f64 = 2.8e6;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const HERMITIAN_RTOL: f64 = 1e-9;

/// Angular Larmor frequency for a field of `gauss`.
pub fn larmor_from_field(gauss: f64) -> Result<f64> {
    if !(gauss >= 0.0) || !gauss.is_finite() {
        return Err(Error::domain(format!(
            "magnetic field must be finite and >= 0 G, got {gauss}"
        )));
    }
    Ok(2.0 * PI * ZEEMAN_HZ_PER_GAUSS * gauss)
}

/// 4x4 density matrix over the three ground sublevels and the excited level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(CMatrix4);

impl DensityMatrix {
    /// Wraps `m`, rejecting it if it is not Hermitian.
    pub fn new(m: CMatrix4) -> Result<Self> {
        check_hermitian(&m)?;
        Ok(Self(m))
    }

    /// Wraps `m` after replacing it with its Hermitian part `(m + m^H) / 2`.
    pub fn hermitized(m: CMatrix4) -> Self {
        Self(hermitian_part(&m))
    }

    /// Isotropic ground-state mixture `diag(1/3, 1/3, 1/3, 0)`.
    pub fn equilibrium() -> Self {
        let third = C64::new(1.0 / 3.0, 0.0);
        let mut m = CMatrix4::zeros();
        for j in 0..3 {
            m[(j, j)] = third;
        }
        Self(m)
    }

    /// Projector onto the normalized state `psi`.
    pub fn pure(psi: [C64; 4]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::domain(
                "cannot build a pure state from a zero vector",
            ));
        }
        let mut m = CMatrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] = psi[i] * psi[j].conj() / (norm * norm);
            }
        }
        Ok(Self::hermitized(m))
    }

    /// Population of the basis state `|j><j|`.
    pub fn basis(j: usize) -> Self {
        let mut m = CMatrix4::zeros();
        m[(j, j)] = C64::new(1.0, 0.0);
        Self(m)
    }

    pub fn matrix(&self) -> &CMatrix4 {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix4 {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn population(&self, j: usize) -> f64 {
        self.0[(j, j)].re
    }

    pub fn trace(&self) -> f64 {
        (0..4).map(|j| self.0[(j, j)].re).sum()
    }

    /// Restriction to the three ground sublevels.
    pub fn ground_block(&self) -> CMatrix3 {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Largest absolute deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.0)
    }

    /// Smallest eigenvalue; negative values flag a loss of positivity.
    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn hermitian_part(m: &CMatrix4) -> CMatrix4 {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub(crate) fn hermiticity_error(m: &CMatrix4) -> f64 {
    (m - m.adjoint())
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

fn check_hermitian(m: &CMatrix4) -> Result<()> {
    let dev = hermiticity_error(m);
    let scale = m.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if dev.is_nan() || dev > HERMITIAN_RTOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian { deviation: dev });
    }
    Ok(())
}

/// Physical parameters of a single operating point. Rates are in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Larmor angular frequency.
    pub omega_l: f64,
    /// Total probe Rabi frequency.
    pub rabi: f64,
    /// Polarization angle from the magnetic field axis, radians.
    pub theta: f64,
    /// Optical detuning, the excited-level energy in the rotating frame.
    pub delta: f64,
    /// Spontaneous decay rate of the excited level.
    pub gamma0: f64,
    /// Optical coherence decay rate, standing in for the Doppler width.
    pub gamma_opt: f64,
    /// Transit rate through the probe beam.
    pub gamma_t: f64,
    /// Ground-state Zeeman coherence decay rate.
    pub gamma_r: f64,
    /// Mean number of atoms in the probed volume.
    pub n_atoms: f64,
    /// Scale of the radiated field per unit optical coherence.
    pub kappa: f64,
}

/// Mean number of atoms in a cylinder of the given diameter and length.
pub fn atoms_in_beam(density_per_cm3: f64, beam_diameter_m: f64, length_m: f64) -> f64 {
    let radius_cm = 0.5 * beam_diameter_m * 100.0;
    density_per_cm3 * PI * radius_cm * radius_cm * length_m * 100.0
}

impl Default for SystemParams {
    /// Far-detuned helium operating point at 1 G.
    fn default() -> Self {
        let two_pi = 2.0 * PI;
        Self {
            omega_l: two_pi * ZEEMAN_HZ_PER_GAUSS,
            rabi: two_pi * 40e6,
            theta: 0.0,
            delta: two_pi * 1.5e9,
            gamma0: two_pi * 1.6e6,
            gamma_opt: two_pi * 0.8e9,
            gamma_t: two_pi * 30e3,
            gamma_r: two_pi * 30e3,
            n_atoms: atoms_in_beam(2e11, 0.6e-3, 0.06),
            kappa: 1.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("omega_l", self.omega_l),
            ("rabi", self.rabi),
            ("gamma0", self.gamma0),
            ("gamma_opt", self.gamma_opt),
            ("gamma_t", self.gamma_t),
            ("gamma_r", self.gamma_r),
            ("kappa", self.kappa),
        ];
        for (name, v) in rates {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !self.theta.is_finite() || !self.delta.is_finite() {
            return Err(Error::domain("theta and delta must be finite"));
        }
        if !(self.n_atoms > 0.0) || !self.n_atoms.is_finite() {
            return Err(Error::domain(format!(
                "n_atoms must be finite and > 0, got {}",
                self.n_atoms
            )));
        }
        Ok(())
    }

    /// Largest rate entering the explicit stability bound.
    pub fn fastest_coherent_rate(&self) -> f64 {
        self.gamma_opt
            .max(self.delta.abs())
            .max(self.rabi)
            .max(self.omega_l)
    }

    /// Largest rate of any kind; used to make residuals dimensionless.
    pub fn rate_scale(&self) -> f64 {
        self.fastest_coherent_rate()
            .max(self.gamma0 + self.gamma_t)
            .max(self.gamma_r)
            .max(f64::MIN_POSITIVE)
    }

    pub fn couplings(&self) -> CircularCouplings {
        decompose_polarization(self.rabi, self.theta)
    }
}

/// Rabi frequencies of the two circular components of the probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularCouplings {
    pub omega_plus: C64,
    pub omega_minus: C64,
}

/// Circular unit vectors `e_± = (x ± i y)/√2` as Cartesian `(x, y)` pairs.
///
/// With this phase choice x-polarized light couples the ground state to the
/// excited level through `(|-1> - |+1>)/√2`, the `m_x = 0` eigenstate of the
/// field Hamiltonian.
pub fn circular_unit_vectors() -> [[C64; 2]; 2] {
    let s = FRAC_1_SQRT_2;
    [
        [C64::new(s, 0.0), C64::new(0.0, s)],
        [C64::new(s, 0.0), C64::new(0.0, -s)],
    ]
}

/// Splits a linear polarization at `theta` into σ± Rabi frequencies.
///
/// `Ω± = (e_±^* · e_θ) Ω = (Ω/√2) e^{∓iθ}`.
pub fn decompose_polarization(rabi: f64, theta: f64) -> CircularCouplings {
    let amp = rabi * FRAC_1_SQRT_2;
    CircularCouplings {
        omega_plus: C64::from_polar(amp, -theta),
        omega_minus: C64::from_polar(amp, theta),
    }
}

/// Spin-1 `J_x` in the `{|-1>, |0>, |+1>}` basis.
pub fn spin1_jx() -> CMatrix3 {
    let a = C64::new(FRAC_1_SQRT_2, 0.0);
    let z = C64::new(0.0, 0.0);
    CMatrix3::new(z, a, z, a, z, a, z, a, z)
}

/// Hamiltonian divided by ħ, in rad/s.
pub fn build_hamiltonian(params: &SystemParams) -> CMatrix4 {
    let inv_sqrt3 = 1.0 / 3f64.sqrt();
    let CircularCouplings {
        omega_plus,
        omega_minus,
    } = params.couplings();
    let zeeman = C64::new(params.omega_l / SQRT_2, 0.0);

    let mut h = CMatrix4::zeros();
    h[(0, 1)] = zeeman;
    h[(1, 0)] = zeeman;
    h[(1, 2)] = zeeman;
    h[(2, 1)] = zeeman;
    h[(0, 3)] = omega_plus.conj() * inv_sqrt3;
    h[(3, 0)] = omega_plus * inv_sqrt3;
    h[(2, 3)] = -omega_minus.conj() * inv_sqrt3;
    h[(3, 2)] = -omega_minus * inv_sqrt3;
    h[(3, 3)] = C64::new(params.delta, 0.0);
    h
}

/// Relaxation part of the master equation.
///
/// The excited level decays at `Γ0` into the three ground sublevels with
/// equal branching; transit relaxes every population toward the isotropic
/// mixture at `γ_t` and removes excited atoms at the same rate; optical
/// coherences decay at `Γ`; ground Zeeman coherences decay at `γ_R`.
pub fn apply_dissipator(rho: &CMatrix4, params: &SystemParams) -> Result<CMatrix4> {
    check_hermitian(rho)?;
    Ok(dissipator_unchecked(rho, params))
}

fn dissipator_unchecked(rho: &CMatrix4, p: &SystemParams) -> CMatrix4 {
    let mut d = CMatrix4::zeros();
    let rho_ee = rho[(EXCITED, EXCITED)].re;
    d[(EXCITED, EXCITED)] = C64::new(-(p.gamma0 + p.gamma_t) * rho_ee, 0.0);
    for j in 0..3 {
        let pop = rho[(j, j)].re;
        d[(j, j)] = C64::new(p.gamma0 / 3.0 * rho_ee - p.gamma_t * (pop - 1.0 / 3.0), 0.0);
        d[(j, EXCITED)] = -p.gamma_opt * rho[(j, EXCITED)];
        d[(EXCITED, j)] = -p.gamma_opt * rho[(EXCITED, j)];
        for i in 0..3 {
            if i != j {
                d[(i, j)] = -p.gamma_r * rho[(i, j)];
            }
        }
    }
    d
}

/// Deterministic right-hand side `-i[H, ρ] + D(ρ)`.
pub fn liouville_rhs(rho: &CMatrix4, params: &SystemParams) -> Result<CMatrix4> {
    check_hermitian(rho)?;
    Ok(liouville_rhs_unchecked(rho, params))
}

pub(crate) fn liouville_rhs_unchecked(rho: &CMatrix4, params: &SystemParams) -> CMatrix4 {
    let h = build_hamiltonian(params);
    let commutator = h * rho - rho * h;
    commutator * C64::new(0.0, -1.0) + dissipator_unchecked(rho, params)
}
