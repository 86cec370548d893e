//! Time integration of the noisy master equation.
//!
//! A trajectory advances `ρ ← ρ + dt·(-i[H,ρ] + D(ρ)) + F` where `F` is a
//! transit-noise increment. Two schemes are available for the deterministic
//! part:
//!
//! * [`Scheme::Euler`]: the explicit first-order update. It is only stable
//!   when `dt · max(Γ, |Δ|, Ω, ω_L) < 0.1`, which rules it out at the
//!   nanosecond steps needed for megahertz spectra with gigahertz optical
//!   rates.
//! * [`Scheme::Exponential`]: the exact affine propagator of the
//!   deterministic equation over one step, `ρ ← e^{L dt} ρ + ∫ e^{L s} c ds`.
//!   Noise still enters additively once per step.
//!
//! Internally the Hermitian state is stored as 16 real coordinates, so both
//! schemes reduce to a real 16x16 affine map per step.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{SMatrix, SVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::noise::{noise_stats, sample_increment, NoiseStats};
use crate::spin::{
    hermitian_part, liouville_rhs, liouville_rhs_unchecked, CMatrix3, CMatrix4, DensityMatrix,
    SystemParams, C64,
};

/// Explicit-step stability bound on `dt · max(Γ, |Δ|, Ω, ω_L)`.
pub const EULER_STABILITY_BOUND: f64 = 0.1;

/// Number of real coordinates of a 4x4 Hermitian matrix.
pub const DIM: usize = 16;

/// Upper-triangle pairs in coordinate order. Pair `n` occupies coordinates
/// `4 + 2n` (real part) and `5 + 2n` (imaginary part).
const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Steps between positivity checks.
const POSITIVITY_CHECK_INTERVAL: usize = 4096;

type Mat16 = SMatrix<f64, DIM, DIM>;
type Vec16 = SVector<f64, DIM>;

fn pair_index(i: usize, j: usize) -> usize {
    PAIRS
        .iter()
        .position(|&p| p == (i, j))
        .expect("pair must be strictly upper triangular")
}

/// Real coordinates of a Hermitian 4x4 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector(pub [f64; DIM]);

impl StateVector {
    pub fn from_matrix(m: &CMatrix4) -> Self {
        let mut x = [0.0; DIM];
        for j in 0..4 {
            x[j] = m[(j, j)].re;
        }
        for (n, &(i, j)) in PAIRS.iter().enumerate() {
            x[4 + 2 * n] = m[(i, j)].re;
            x[5 + 2 * n] = m[(i, j)].im;
        }
        Self(x)
    }

    pub fn to_matrix(&self) -> CMatrix4 {
        let x = &self.0;
        let mut m = CMatrix4::zeros();
        for j in 0..4 {
            m[(j, j)] = C64::new(x[j], 0.0);
        }
        for (n, &(i, j)) in PAIRS.iter().enumerate() {
            let c = C64::new(x[4 + 2 * n], x[5 + 2 * n]);
            m[(i, j)] = c;
            m[(j, i)] = c.conj();
        }
        m
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::hermitized(self.to_matrix())
    }

    /// Matrix element `ρ_ij`.
    #[inline]
    pub fn element(&self, i: usize, j: usize) -> C64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => C64::new(self.0[i], 0.0),
            Less => {
                let n = pair_index(i, j);
                C64::new(self.0[4 + 2 * n], self.0[5 + 2 * n])
            }
            Greater => {
                let n = pair_index(j, i);
                C64::new(self.0[4 + 2 * n], -self.0[5 + 2 * n])
            }
        }
    }

    pub fn trace(&self) -> f64 {
        self.0[..4].iter().sum()
    }

    fn is_finite(&self) -> bool {
        self.0.iter().sum::<f64>().is_finite()
    }
}

/// `dρ/dt = L ρ + c` in real coordinates.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub matrix: Mat16,
    pub offset: Vec16,
}

impl Liouvillian {
    pub fn new(params: &SystemParams) -> Self {
        let offset = Vec16::from(
            StateVector::from_matrix(&liouville_rhs_unchecked(&CMatrix4::zeros(), params)).0,
        );
        let mut matrix = Mat16::zeros();
        for k in 0..DIM {
            let mut e = [0.0; DIM];
            e[k] = 1.0;
            let basis = StateVector(e).to_matrix();
            let image = StateVector::from_matrix(&liouville_rhs_unchecked(&basis, params)).0;
            for r in 0..DIM {
                matrix[(r, k)] = image[r] - offset[r];
            }
        }
        Self { matrix, offset }
    }

    /// One-step affine map `(A, b)` for the chosen scheme.
    fn step_map(&self, scheme: Scheme, dt: f64) -> (Mat16, Vec16) {
        match scheme {
            Scheme::Euler => (Mat16::identity() + self.matrix * dt, self.offset * dt),
            Scheme::Exponential => {
                let mut aug = SMatrix::<f64, 17, 17>::zeros();
                aug.fixed_view_mut::<DIM, DIM>(0, 0)
                    .copy_from(&(self.matrix * dt));
                aug.fixed_view_mut::<DIM, 1>(0, DIM)
                    .copy_from(&(self.offset * dt));
                let e = aug.exp();
                (
                    e.fixed_view::<DIM, DIM>(0, 0).into_owned(),
                    e.fixed_view::<DIM, 1>(0, DIM).into_owned(),
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Exponential,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "exponential" | "exp" => Ok(Scheme::Exponential),
            other => Err(Error::config(
                "scheme",
                format!("expected `euler` or `exponential`, got `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Exponential => "exponential",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub burn_in_steps: usize,
    pub record_stride: usize,
    pub scheme: Scheme,
    /// Whether transit noise is injected.
    pub noise: bool,
}

impl Default for TrajectoryConfig {
    /// 2^17 recorded samples at 1 s / 18e6 after a 512-step burn-in.
    fn default() -> Self {
        Self {
            dt: 1.0 / 18e6,
            n_steps: (1 << 17) + 512,
            burn_in_steps: 512,
            record_stride: 1,
            scheme: Scheme::Exponential,
            noise: true,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config(
                "dt_s",
                format!("must be > 0, got {}", self.dt),
            ));
        }
        if self.n_steps < self.burn_in_steps {
            return Err(Error::config(
                "n_steps",
                format!(
                    "n_steps ({}) must not be smaller than burn_in_steps ({})",
                    self.n_steps, self.burn_in_steps
                ),
            ));
        }
        if self.record_stride == 0 {
            return Err(Error::config("record_stride", "must be >= 1"));
        }
        if self.scheme == Scheme::Euler {
            check_euler_stability(params, self.dt)?;
        }
        Ok(())
    }

    /// Number of states recorded by [`evolve`].
    pub fn n_recorded(&self) -> usize {
        let n = self.n_steps.saturating_sub(self.burn_in_steps);
        n.div_ceil(self.record_stride)
    }
}

fn check_euler_stability(params: &SystemParams, dt: f64) -> Result<()> {
    let product = dt * params.fastest_coherent_rate();
    if product >= EULER_STABILITY_BOUND {
        return Err(Error::Stability {
            product,
            bound: EULER_STABILITY_BOUND,
        });
    }
    Ok(())
}

/// Noise statistics for a step, or silence when transit is switched off.
fn step_noise(params: &SystemParams, dt: f64, enabled: bool) -> Result<NoiseStats> {
    if enabled && params.gamma_t > 0.0 {
        noise_stats(params.gamma_t, dt, params.n_atoms)
    } else {
        Ok(NoiseStats::silent())
    }
}

/// One explicit stochastic step on the full complex matrix.
pub fn step<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    params: &SystemParams,
    dt: f64,
    rng: &mut R,
) -> Result<DensityMatrix> {
    check_euler_stability(params, dt)?;
    let stats = step_noise(params, dt, true)?;
    let drift = liouville_rhs(rho.matrix(), params)?;
    let inc = sample_increment(&stats, dt, rng);
    let next = rho.matrix() + drift * C64::new(dt, 0.0) + inc.entries;
    if next.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite { step: 1 });
    }
    Ok(DensityMatrix::hermitized(hermitian_part(&next)))
}

/// Precomputed single-step affine map plus noise statistics.
#[derive(Debug, Clone)]
pub struct Stepper {
    a: [[f64; DIM]; DIM],
    b: [f64; DIM],
    noise: NoiseStats,
    noisy: bool,
}

impl Stepper {
    pub fn new(params: &SystemParams, cfg: &TrajectoryConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate(params)?;
        let (a, b) = Liouvillian::new(params).step_map(cfg.scheme, cfg.dt);
        let noise = step_noise(params, cfg.dt, cfg.noise)?;
        let mut rows = [[0.0; DIM]; DIM];
        for (r, row) in rows.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = a[(r, c)];
            }
        }
        let mut offset = [0.0; DIM];
        offset.copy_from_slice(b.as_slice());
        Ok(Self {
            a: rows,
            b: offset,
            noise,
            noisy: noise.sigma_sq > 0.0,
        })
    }

    #[inline]
    pub fn advance<R: Rng + ?Sized>(&self, x: &mut StateVector, rng: &mut R) {
        let mut next = self.b;
        for (r, row) in self.a.iter().enumerate() {
            let mut acc = 0.0;
            for (aij, xj) in row.iter().zip(x.0.iter()) {
                acc += aij * xj;
            }
            next[r] += acc;
        }
        if self.noisy {
            let f = self.noise.draw(rng);
            next[0] += f[0];
            next[1] += f[1];
            next[2] += f[2];
            // lower-triangle increments k_{rc}; the stored upper entry gets k*
            for (n, slot) in [0usize, 1, 3].iter().enumerate() {
                next[4 + 2 * slot] += f[3 + 2 * n];
                next[5 + 2 * slot] -= f[4 + 2 * n];
            }
        }
        x.0 = next;
    }
}

/// Summary diagnostics of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySummary {
    /// Smallest eigenvalue seen at the periodic positivity checks.
    pub min_eigenvalue: f64,
    pub steps: usize,
}

/// Runs a trajectory, handing every recorded state to `record`.
pub fn evolve_with<R, F>(
    rho0: &DensityMatrix,
    params: &SystemParams,
    cfg: &TrajectoryConfig,
    rng: &mut R,
    mut record: F,
) -> Result<TrajectorySummary>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &StateVector),
{
    let stepper = Stepper::new(params, cfg)?;
    let mut x = StateVector::from_matrix(rho0.matrix());
    let mut min_eig = rho0.min_eigenvalue();
    let mut recorded = 0;
    for k in 1..=cfg.n_steps {
        stepper.advance(&mut x, rng);
        if !x.is_finite() {
            return Err(Error::NonFinite { step: k });
        }
        if k > cfg.burn_in_steps && (k - cfg.burn_in_steps - 1).is_multiple_of(cfg.record_stride) {
            record(recorded, &x);
            recorded += 1;
        }
        if k % POSITIVITY_CHECK_INTERVAL == 0 {
            min_eig = min_eig.min(x.density().min_eigenvalue());
        }
    }
    if min_eig < 0.0 {
        log::debug!("trajectory visited non-positive states (min eigenvalue {min_eig:e})");
    }
    Ok(TrajectorySummary {
        min_eigenvalue: min_eig,
        steps: cfg.n_steps,
    })
}

/// Runs a trajectory and returns the recorded states.
pub fn evolve<R: Rng + ?Sized>(
    rho0: &DensityMatrix,
    params: &SystemParams,
    cfg: &TrajectoryConfig,
    rng: &mut R,
) -> Result<Vec<DensityMatrix>> {
    let mut out = Vec::with_capacity(cfg.n_recorded());
    evolve_with(rho0, params, cfg, rng, |_, x| out.push(x.density()))?;
    Ok(out)
}

/// Norm of the deterministic right-hand side in units of the fastest rate.
pub fn steady_state_residual(rho: &DensityMatrix, params: &SystemParams) -> Result<f64> {
    let r = liouville_rhs(rho.matrix(), params)?;
    Ok(r.norm() / params.rate_scale())
}

/// Stationary state of the deterministic equation with unit trace.
pub fn steady_state(params: &SystemParams) -> Result<DensityMatrix> {
    params.validate()?;
    if params.gamma0 <= 0.0 && params.gamma_t <= 0.0 {
        return Err(Error::NoUniqueSteadyState(
            "both the excited decay and the transit rate are zero".into(),
        ));
    }
    let scale = params.rate_scale();
    let lv = Liouvillian::new(params);
    let mut m = lv.matrix / scale;
    let mut rhs = -lv.offset / scale;
    // the excited-population equation follows from the others and the
    // trace condition, so it is replaced by Tr ρ = 1
    for c in 0..DIM {
        m[(3, c)] = if c < 4 { 1.0 } else { 0.0 };
    }
    rhs[3] = 1.0;

    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(Error::NoUniqueSteadyState(format!(
            "stationary equations are singular (condition {:.1e})",
            smax / smin
        )));
    }
    let mut x = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::NoUniqueSteadyState(e.to_string()))?;
    for _ in 0..2 {
        let resid = rhs - m * x;
        let dx = svd
            .solve(&resid, 0.0)
            .map_err(|e| Error::NoUniqueSteadyState(e.to_string()))?;
        x += dx;
    }
    let mut coords = [0.0; DIM];
    coords.copy_from_slice(x.as_slice());
    Ok(StateVector(coords).density())
}

/// Density matrix of the three ground sublevels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundState3(CMatrix3);

impl GroundState3 {
    pub fn new(m: CMatrix3) -> Result<Self> {
        let dev = (m - m.adjoint())
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if dev > 1e-12 {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let tr = m.trace().re;
        if (tr - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "ground state must have unit trace, got {tr}"
            )));
        }
        let min_eig = m.symmetric_eigenvalues().min();
        if min_eig < -1e-12 {
            return Err(Error::domain(format!(
                "ground state must be positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self(m))
    }

    pub fn pure(psi: [C64; 3]) -> Result<Self> {
        let v = nalgebra::Vector3::from(psi);
        let norm = v.norm();
        if !(norm > 0.0) {
            return Err(Error::domain(
                "cannot build a pure state from a zero vector",
            ));
        }
        let v = v / C64::new(norm, 0.0);
        Self::new(v * v.adjoint())
    }

    pub fn matrix(&self) -> &CMatrix3 {
        &self.0
    }

    pub fn population(&self, j: usize) -> f64 {
        self.0[(j, j)].re
    }

    /// Population of the normalized state `psi`.
    pub fn population_of(&self, psi: &[C64; 3]) -> f64 {
        let v = nalgebra::Vector3::from(*psi);
        (v.adjoint() * self.0 * v)[(0, 0)].re / v.norm_squared()
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }
}

/// Field-only evolution of the ground manifold, `ρ(t) = U ρ0 U†` with
/// `U = exp(-i ω_L J_x t)`.
pub fn free_evolve_ground(
    rho0: &GroundState3,
    omega_l: f64,
    times: &[f64],
) -> Result<Vec<GroundState3>> {
    if !(omega_l >= 0.0) || !omega_l.is_finite() {
        return Err(Error::domain(format!(
            "omega_L must be finite and >= 0, got {omega_l}"
        )));
    }
    // Jx eigenvectors for eigenvalues -1, 0, +1
    let h = 0.5;
    let s = FRAC_1_SQRT_2;
    let modes: [(f64, [f64; 3]); 3] = [(-1.0, [h, -s, h]), (0.0, [s, 0.0, -s]), (1.0, [h, s, h])];
    let projectors: Vec<(f64, CMatrix3)> = modes
        .iter()
        .map(|&(lambda, v)| {
            let v = nalgebra::Vector3::from(v.map(|c| C64::new(c, 0.0)));
            (lambda, v * v.adjoint())
        })
        .collect();
    Ok(times
        .iter()
        .map(|&t| {
            let u = projectors
                .iter()
                .fold(CMatrix3::zeros(), |acc, (lambda, p)| {
                    acc + p * C64::from_polar(1.0, -lambda * omega_l * t)
                });
            GroundState3(u * rho0.0 * u.adjoint())
        })
        .collect())
}
