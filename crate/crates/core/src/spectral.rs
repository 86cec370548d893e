//! Power spectral density estimation and spectrum-analyzer emulation.
//!
//! Spectra are one-sided and normalized to power per hertz, so that summing
//! `psd * df` over all bins returns the mean square of the windowed signal.
//! A periodic Hann window with 50 % overlap is used; its equivalent noise
//! bandwidth is 1.5 bins, and the segment length is chosen so that this
//! equals the requested resolution bandwidth.

use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::detection::DetectionMode;
use crate::error::{Error, Result};

/// Equivalent noise bandwidth of the Hann window, in bins.
pub const HANN_ENBW_BINS: f64 = 1.5;

/// Operating point a spectrum was computed at.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumMeta {
    pub theta_deg: f64,
    pub b_gauss: f64,
    pub delta_hz: f64,
    pub mode: Option<DetectionMode>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRecord {
    /// Bin centres, Hz.
    pub freqs: Vec<f64>,
    /// One-sided PSD per bin.
    pub psd: Vec<f64>,
    /// Resolution bandwidth actually achieved, Hz.
    pub rbw: f64,
    /// Video bandwidth, Hz; equal to `rbw` when no smoothing was applied.
    pub vbw: f64,
    pub n_averages: usize,
    pub meta: SpectrumMeta,
}

impl SpectrumRecord {
    /// Bin spacing, Hz.
    pub fn df(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            self.rbw / HANN_ENBW_BINS
        }
    }

    /// Integral of the PSD over all bins.
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.df()
    }

    pub fn with_meta(mut self, meta: SpectrumMeta) -> Self {
        self.meta = meta;
        self
    }

    /// Adds a constant level to every bin.
    pub fn add_floor(&mut self, level: f64) {
        for p in &mut self.psd {
            *p += level;
        }
    }

    /// Writes the record as `#`-prefixed metadata lines followed by a
    /// `freq_hz,psd` table.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let m = &self.meta;
        writeln!(w, "# theta_deg={}", m.theta_deg)?;
        writeln!(w, "# b_gauss={}", m.b_gauss)?;
        writeln!(w, "# delta_hz={}", m.delta_hz)?;
        writeln!(w, "# mode={}", m.mode.map_or("none", |d| d.as_str()))?;
        writeln!(w, "# rbw_hz={}", self.rbw)?;
        writeln!(w, "# vbw_hz={}", self.vbw)?;
        writeln!(w, "# n_averages={}", self.n_averages)?;
        writeln!(w, "# seed={}", m.seed)?;
        writeln!(w, "freq_hz,psd")?;
        for (f, p) in self.freqs.iter().zip(&self.psd) {
            writeln!(w, "{f},{p:e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let bad = |msg: String| Error::config("spectrum csv", msg);
        let mut rec = SpectrumRecord {
            freqs: Vec::new(),
            psd: Vec::new(),
            rbw: 0.0,
            vbw: 0.0,
            n_averages: 0,
            meta: SpectrumMeta::default(),
        };
        let mut seen_header = false;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| bad(format!("malformed metadata line `{line}`")))?;
                let num = || v.parse::<f64>().map_err(|e| bad(format!("{k}: {e}")));
                match k {
                    "theta_deg" => rec.meta.theta_deg = num()?,
                    "b_gauss" => rec.meta.b_gauss = num()?,
                    "delta_hz" => rec.meta.delta_hz = num()?,
                    "rbw_hz" => rec.rbw = num()?,
                    "vbw_hz" => rec.vbw = num()?,
                    "n_averages" => {
                        rec.n_averages = v.parse().map_err(|e| bad(format!("{k}: {e}")))?
                    }
                    "seed" => rec.meta.seed = v.parse().map_err(|e| bad(format!("{k}: {e}")))?,
                    "mode" => {
                        rec.meta.mode = match v {
                            "rnd" => Some(DetectionMode::Rnd),
                            "end" => Some(DetectionMode::End),
                            _ => None,
                        }
                    }
                    _ => {}
                }
                continue;
            }
            if !seen_header {
                if line != "freq_hz,psd" {
                    return Err(bad(format!("expected header `freq_hz,psd`, got `{line}`")));
                }
                seen_header = true;
                continue;
            }
            let (f, p) = line
                .split_once(',')
                .ok_or_else(|| bad(format!("malformed row `{line}`")))?;
            rec.freqs
                .push(f.parse().map_err(|e| bad(format!("freq: {e}")))?);
            rec.psd
                .push(p.parse().map_err(|e| bad(format!("psd: {e}")))?);
        }
        Ok(rec)
    }
}

/// Segment length whose Hann ENBW is closest to `rbw`.
pub fn segment_length(dt: f64, rbw: f64) -> Result<usize> {
    if !(dt > 0.0) || !(rbw > 0.0) {
        return Err(Error::domain(format!(
            "dt and rbw must be > 0 (dt = {dt}, rbw = {rbw})"
        )));
    }
    let n = (HANN_ENBW_BINS / (rbw * dt)).round();
    if n < 4.0 {
        return Err(Error::domain(format!(
            "rbw {rbw} Hz is too wide for a {:.3e} Hz sample rate",
            1.0 / dt
        )));
    }
    Ok(n as usize)
}

/// Reusable Welch estimator for a fixed segment length and sample interval.
pub struct WelchEstimator {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    dt: f64,
    scale: f64,
}

impl std::fmt::Debug for WelchEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WelchEstimator")
            .field("segment", &self.window.len())
            .field("dt", &self.dt)
            .finish()
    }
}

impl WelchEstimator {
    pub fn new(dt: f64, rbw_target: f64) -> Result<Self> {
        let n = segment_length(dt, rbw_target)?;
        let window: Vec<f64> = (0..n)
            .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()))
            .collect();
        let power: f64 = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Self {
            fft,
            window,
            dt,
            scale: dt / power,
        })
    }

    pub fn segment_len(&self) -> usize {
        self.window.len()
    }

    pub fn hop(&self) -> usize {
        (self.window.len() / 2).max(1)
    }

    /// Shortest series that yields two overlapping segments.
    pub fn min_len(&self) -> usize {
        self.segment_len() + self.hop()
    }

    pub fn rbw(&self) -> f64 {
        HANN_ENBW_BINS / (self.segment_len() as f64 * self.dt)
    }

    pub fn freqs(&self) -> Vec<f64> {
        let n = self.segment_len();
        let df = 1.0 / (n as f64 * self.dt);
        (0..=n / 2).map(|k| k as f64 * df).collect()
    }

    pub fn estimate(&self, signal: &[f64]) -> Result<SpectrumRecord> {
        let n = self.segment_len();
        if signal.len() < self.min_len() {
            return Err(Error::TooShort {
                len: signal.len(),
                min_len: self.min_len(),
                segment: n,
            });
        }
        let hop = self.hop();
        let n_seg = (signal.len() - n) / hop + 1;
        let n_bins = n / 2 + 1;
        let mut acc = vec![0.0; n_bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for s in 0..n_seg {
            let seg = &signal[s * hop..s * hop + n];
            for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new(x * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
        }
        let norm = self.scale / n_seg as f64;
        let psd = acc
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let one_sided = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                    1.0
                } else {
                    2.0
                };
                a * norm * one_sided
            })
            .collect();
        let rbw = self.rbw();
        Ok(SpectrumRecord {
            freqs: self.freqs(),
            psd,
            rbw,
            vbw: rbw,
            n_averages: 1,
            meta: SpectrumMeta::default(),
        })
    }
}

/// Welch PSD of `signal` sampled every `dt` seconds.
pub fn welch_psd(signal: &[f64], dt: f64, rbw_target: f64) -> Result<SpectrumRecord> {
    WelchEstimator::new(dt, rbw_target)?.estimate(signal)
}

/// Smooths the trace with a centred moving average of about `rbw / vbw`
/// bins, shrinking the kernel symmetrically near the band edges.
pub fn video_average(spec: &SpectrumRecord, vbw: f64) -> Result<SpectrumRecord> {
    if !(vbw > 0.0) {
        return Err(Error::domain(format!("vbw must be > 0, got {vbw}")));
    }
    if vbw > spec.rbw * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "vbw ({vbw} Hz) must not exceed rbw ({} Hz)",
            spec.rbw
        )));
    }
    let len = spec.psd.len();
    let bins = (spec.rbw / vbw).round().max(1.0) as usize;
    let half = (bins / 2).min(len.saturating_sub(1) / 2);
    let mut out = spec.clone();
    if half > 0 {
        for (i, o) in out.psd.iter_mut().enumerate() {
            let h = half.min(i).min(len - 1 - i);
            let window = &spec.psd[i - h..=i + h];
            *o = window.iter().sum::<f64>() / window.len() as f64;
        }
    }
    out.vbw = vbw;
    Ok(out)
}

/// Pointwise mean of spectra sharing a frequency grid.
///
/// Each bin is summed in sorted order, so the result does not depend on the
/// order of `specs`.
pub fn average_spectra(specs: &[SpectrumRecord]) -> Result<SpectrumRecord> {
    let first = specs
        .first()
        .ok_or_else(|| Error::GridMismatch("no spectra to average".into()))?;
    for s in &specs[1..] {
        if s.freqs != first.freqs {
            return Err(Error::GridMismatch("frequency grids differ".into()));
        }
        if s.meta != first.meta || s.rbw != first.rbw || s.vbw != first.vbw {
            return Err(Error::GridMismatch("metadata or bandwidths differ".into()));
        }
    }
    let m = specs.len() as f64;
    let mut column = Vec::with_capacity(specs.len());
    let psd = (0..first.psd.len())
        .map(|k| {
            column.clear();
            column.extend(specs.iter().map(|s| s.psd[k]));
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / m
        })
        .collect();
    Ok(SpectrumRecord {
        psd,
        n_averages: specs.iter().map(|s| s.n_averages).sum(),
        ..first.clone()
    })
}

/// Background subtracted before integrating a peak.
#[derive(Debug, Clone, Copy)]
pub enum Floor<'a> {
    Constant(f64),
    Spectrum(&'a SpectrumRecord),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakReport {
    /// Power-weighted centroid, Hz.
    pub peak_freq: f64,
    /// Floor-subtracted integrated power, clamped at zero.
    pub peak_power: f64,
    /// Half-width of the integration window, Hz.
    pub window: f64,
}

/// Integrates `spec - floor` over `[around - halfwidth, around + halfwidth]`.
pub fn find_peak(
    spec: &SpectrumRecord,
    around: f64,
    halfwidth: f64,
    floor: Floor<'_>,
) -> Result<PeakReport> {
    let (lo, hi) = (around - halfwidth, around + halfwidth);
    let band_lo = spec.freqs.first().copied().unwrap_or(0.0);
    let band_hi = spec.freqs.last().copied().unwrap_or(0.0);
    if !(halfwidth > 0.0) || lo < band_lo || hi > band_hi {
        return Err(Error::domain(format!(
            "peak window [{lo:.4e}, {hi:.4e}] Hz lies outside the analysed band [{band_lo:.4e}, {band_hi:.4e}] Hz"
        )));
    }
    if let Floor::Spectrum(f) = floor {
        if f.freqs != spec.freqs {
            return Err(Error::GridMismatch(
                "floor spectrum uses a different grid".into(),
            ));
        }
    }
    let df = spec.df();
    let (mut net, mut weight, mut moment) = (0.0, 0.0, 0.0);
    for (k, (&f, &p)) in spec.freqs.iter().zip(&spec.psd).enumerate() {
        if f < lo || f > hi {
            continue;
        }
        let level = match floor {
            Floor::Constant(c) => c,
            Floor::Spectrum(s) => s.psd[k],
        };
        let excess = p - level;
        net += excess;
        if excess > 0.0 {
            weight += excess;
            moment += excess * f;
        }
    }
    Ok(PeakReport {
        peak_freq: if weight > 0.0 {
            moment / weight
        } else {
            around
        },
        peak_power: (net * df).max(0.0),
        window: halfwidth,
    })
}
