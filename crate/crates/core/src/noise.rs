//! Transit-noise increments of the ground-state density matrix.
//!
//! Atoms crossing the probe beam make the ground-state populations and
//! Zeeman coherences fluctuate. Each step receives a Hermitian increment
//! whose excited row and column vanish. Population increments have variance
//! `σ² = 2 γ_t dt / (3 N̄)`; the real and imaginary parts of each coherence
//! increment have variance `3σ²/4`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spin::{CMatrix4, C64};

/// Pairs `(row, col)` with `row > col` that carry the coherence increments,
/// in the order they are drawn.
pub const COHERENCE_PAIRS: [(usize, usize); 3] = [(1, 0), (2, 0), (2, 1)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseStats {
    /// Variance of each population increment.
    pub sigma_sq: f64,
    /// Variance of the real (and of the imaginary) part of each coherence
    /// increment.
    pub offdiag_var: f64,
}

pub fn noise_stats(gamma_t: f64, dt: f64, n_atoms: f64) -> Result<NoiseStats> {
    for (name, v) in [("gamma_t", gamma_t), ("dt", dt), ("n_atoms", n_atoms)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::domain(format!(
                "{name} must be finite and > 0, got {v}"
            )));
        }
    }
    let sigma_sq = 2.0 * gamma_t * dt / (3.0 * n_atoms);
    Ok(NoiseStats {
        sigma_sq,
        offdiag_var: 0.75 * sigma_sq,
    })
}

impl NoiseStats {
    /// Statistics that produce identically zero increments.
    pub fn silent() -> Self {
        Self {
            sigma_sq: 0.0,
            offdiag_var: 0.0,
        }
    }

    /// Draws the nine real Gaussian variates of one increment:
    /// `[f_-1, f_0, f_+1, Re k_10, Im k_10, Re k_20, Im k_20, Re k_21, Im k_21]`.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 9] {
        let sd_pop = self.sigma_sq.sqrt();
        let sd_coh = self.offdiag_var.sqrt();
        let mut out = [0.0; 9];
        for (k, v) in out.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *v = z * if k < 3 { sd_pop } else { sd_coh };
        }
        out
    }
}

/// One Hermitian noise increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseIncrement {
    pub entries: CMatrix4,
    pub step_dt: f64,
}

impl NoiseIncrement {
    pub fn from_draw(draw: &[f64; 9], step_dt: f64) -> Self {
        let mut m = CMatrix4::zeros();
        for j in 0..3 {
            m[(j, j)] = C64::new(draw[j], 0.0);
        }
        for (n, &(r, c)) in COHERENCE_PAIRS.iter().enumerate() {
            let k = C64::new(draw[3 + 2 * n], draw[4 + 2 * n]);
            m[(r, c)] = k;
            m[(c, r)] = k.conj();
        }
        Self {
            entries: m,
            step_dt,
        }
    }
}

pub fn sample_increment<R: Rng + ?Sized>(
    stats: &NoiseStats,
    step_dt: f64,
    rng: &mut R,
) -> NoiseIncrement {
    NoiseIncrement::from_draw(&stats.draw(rng), step_dt)
}

/// Independent generator for one trajectory.
///
/// `stream` identifies the trajectory within a run; the same
/// `(master_seed, stream)` pair always yields the same sequence.
pub fn trajectory_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}
