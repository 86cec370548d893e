//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits with a failure status if any check fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use spinnoise::config::{AxisRange, ExperimentConfig, ModeSelection, ScanAxis};
use spinnoise::detection::{shot_noise_floor, DetectionMode, DetectorParams};
use spinnoise::integrator::{
    evolve_with, steady_state, steady_state_residual, Scheme, TrajectoryConfig,
};
use spinnoise::noise::{noise_stats, sample_increment, trajectory_rng, COHERENCE_PAIRS};
use spinnoise::scan::{
    absorption_scan, oscillation_mode_report, run_point, run_scan, InitialState, ScanResult,
};
use spinnoise::spectral::welch_psd;
use spinnoise::spin::{DensityMatrix, SystemParams, C64, EXCITED};
use spinnoise_validation::{
    argmax, argmin, far_detuned, line, near_resonant, theta_scan, variation, Report,
};

const MAP_RANGE: AxisRange = AxisRange {
    start: 0.0,
    stop: 90.0,
    step: 7.5,
};
const MAP_TRAJECTORIES: usize = 64;
const MAP_SEED: u64 = 2024;

fn fmt_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.3e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn oscillation_modes(r: &mut Report) {
    let start = Instant::now();
    let omega_l = 2.0 * PI * 1e6;
    let mut found = Vec::new();
    let mut ok = true;
    for init in InitialState::ALL {
        match oscillation_mode_report(omega_l, init) {
            Ok(rep) => {
                let want = init.harmonic() as f64 * 1e6;
                ok &= (rep.dominant_frequency_hz - want).abs() <= rep.resolution_hz;
                found.push(format!(
                    "{}={:.3} MHz",
                    init.as_str(),
                    rep.dominant_frequency_hz / 1e6
                ));
            }
            Err(e) => {
                ok = false;
                found.push(format!("{}: {e}", init.as_str()));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    r.record(
        "1",
        ok && elapsed < 1.0,
        format!(
            "oscillation modes at 1 MHz: {} (expected 1, 2, 1 MHz within one bin); {:.3} s (< 1 s)",
            found.join(", "),
            elapsed
        ),
    );
}

fn peak_positions(r: &mut Report) {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for b in [0.5, 0.7, 1.0] {
        let f_l = 2.8e6 * b;
        for (mode, theta, harmonics) in [
            (DetectionMode::Rnd, 0.0, &[1usize][..]),
            (DetectionMode::End, 55.0, &[1, 2][..]),
        ] {
            let mut cfg = far_detuned();
            cfg.physics.b_gauss = b;
            cfg.physics.theta_deg = theta;
            cfg.axis = ScanAxis::None;
            cfg.mode = if mode == DetectionMode::Rnd {
                ModeSelection::Rnd
            } else {
                ModeSelection::End
            };
            cfg.n_trajectories = 32;
            cfg.master_seed = 7;
            let point = match run_point(&cfg, theta) {
                Ok(p) => p,
                Err(e) => {
                    ok = false;
                    parts.push(format!("B={b} {mode}: {e}"));
                    continue;
                }
            };
            let df = point.spectra[0].df();
            for &h in harmonics {
                match line(&point, mode, h, false) {
                    Ok(peak) => {
                        let err = peak.peak_freq - h as f64 * f_l;
                        ok &= err.abs() <= df;
                        parts.push(format!("B={b} {mode} {h}wL {:+.1} kHz", err / 1e3));
                    }
                    Err(e) => {
                        ok = false;
                        parts.push(format!("B={b} {mode} {h}wL: {e}"));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    r.record(
        "2",
        ok && elapsed < 300.0,
        format!(
            "peak centroid offsets from h*2.8*B MHz: {} (limit one bin, 60.6 kHz); {:.0} s (< 300 s)",
            parts.join("; "),
            elapsed
        ),
    );
}

/// Line powers of one map, indexed like the scan points.
struct MapLines {
    thetas: Vec<f64>,
    rnd1: Vec<f64>,
    rnd2: Vec<f64>,
    end1: Vec<f64>,
    end2: Vec<f64>,
}

fn map_lines(scan: &ScanResult) -> spinnoise::Result<MapLines> {
    let get = |mode, h| -> spinnoise::Result<Vec<f64>> {
        scan.points
            .iter()
            .map(|p| Ok(line(p, mode, h, false)?.peak_power))
            .collect()
    };
    Ok(MapLines {
        thetas: scan.axis_values(),
        rnd1: get(DetectionMode::Rnd, 1)?,
        rnd2: get(DetectionMode::Rnd, 2)?,
        end1: get(DetectionMode::End, 1)?,
        end2: get(DetectionMode::End, 2)?,
    })
}

fn at(lines: &MapLines, values: &[f64], theta: f64) -> f64 {
    let i = lines
        .thetas
        .iter()
        .position(|&t| t == theta)
        .expect("theta on the grid");
    values[i]
}

fn run_map(cfg: ExperimentConfig, label: &str) -> Option<MapLines> {
    let start = Instant::now();
    let scan = match theta_scan(cfg, MAP_RANGE, MAP_TRAJECTORIES, MAP_SEED) {
        Ok(s) => s,
        Err(e) => {
            println!("       {label} map failed: {e}");
            return None;
        }
    };
    for f in &scan.failures {
        println!(
            "       {label} map: theta = {} failed: {}",
            f.axis_value, f.error
        );
    }
    if !scan.failures.is_empty() {
        return None;
    }
    let lines = map_lines(&scan).ok()?;
    println!(
        "       {label} map: {} angles x {} trajectories in {:.0} s",
        lines.thetas.len(),
        MAP_TRAJECTORIES,
        start.elapsed().as_secs_f64()
    );
    println!("       theta     {}", fmt_list(&lines.thetas));
    println!("       RND wL    {}", fmt_list(&lines.rnd1));
    println!("       RND 2wL   {}", fmt_list(&lines.rnd2));
    println!("       END wL    {}", fmt_list(&lines.end1));
    println!("       END 2wL   {}", fmt_list(&lines.end2));
    Some(lines)
}

fn far_detuned_map(r: &mut Report) -> Option<MapLines> {
    let Some(m) = run_map(far_detuned(), "far-detuned (1.5 GHz, 40 MHz)") else {
        for id in ["3(a)", "3(b)", "3(c)"] {
            r.record(id, false, "far-detuned map could not be computed");
        }
        return None;
    };
    let v = variation(&m.rnd1);
    r.record(
        "3(a)",
        v < 0.25,
        format!(
            "far-detuned RND wL line varies by +/-{:.1} % over 0-90 deg (limit +/-25 %)",
            100.0 * v
        ),
    );

    let (imax, pmax) = argmax(&m.end2);
    let edge = at(&m, &m.end2, 0.0).max(at(&m, &m.end2, 90.0));
    let ratio = pmax / edge;
    r.record(
        "3(b)",
        ratio >= 10.0,
        format!(
            "far-detuned END 2wL line: max at {} deg is {:.1}x the larger of its 0 and 90 deg values (limit >= 10x; maximum expected in 40-60 deg)",
            m.thetas[imax], ratio
        ),
    );

    let ratio = at(&m, &m.end1, 0.0) / at(&m, &m.end1, 45.0);
    r.record(
        "3(c)",
        ratio >= 10.0,
        format!("far-detuned END wL line at 0 deg is {ratio:.2}x its 45 deg value (limit >= 10x)"),
    );
    Some(m)
}

fn near_resonance_map(r: &mut Report, far: Option<&MapLines>) {
    let Some(m) = run_map(near_resonant(), "near-resonant (0.3 GHz, 30 MHz)") else {
        for id in ["4(a)", "4(b)", "4(c)"] {
            r.record(id, false, "near-resonant map could not be computed");
        }
        return;
    };
    let v = variation(&m.end1);
    r.record(
        "4(a)",
        v < 0.35,
        format!(
            "near-resonant END wL line varies by +/-{:.1} % over 0-90 deg (limit +/-35 %)",
            100.0 * v
        ),
    );

    match far {
        Some(far) => {
            let near_max = argmax(&m.end2).1;
            let far_max = argmax(&far.end2).1;
            let ratio = near_max / far_max;
            r.record(
                "4(b)",
                ratio <= 0.1,
                format!("near-resonant END 2wL maximum is {ratio:.3} of the far-detuned one, same units (limit <= 0.1)"),
            );
        }
        None => r.record("4(b)", false, "needs the far-detuned map"),
    }

    let p45 = at(&m, &m.rnd2, 45.0);
    let ratio = p45 / at(&m, &m.rnd2, 90.0);
    r.record(
        "4(c)",
        p45 > 0.0 && ratio >= 5.0,
        format!("near-resonant RND 2wL line at 45 deg is {p45:.3e}, {ratio:.2}x its 90 deg value (limit >= 5x)"),
    );
}

fn absorption(r: &mut Report) {
    let thetas: Vec<f64> = (0..=900).map(|k| k as f64 * 0.1).collect();
    let near = absorption_scan(&near_resonant(), &thetas);
    let far = absorption_scan(&far_detuned(), &thetas);
    let (near, far) = match (near, far) {
        (Ok(n), Ok(f)) => (n, f),
        (Err(e), _) | (_, Err(e)) => {
            r.record("5", false, format!("absorption scan failed: {e}"));
            return;
        }
    };
    let a_near: Vec<f64> = near.iter().map(|p| p.absorption).collect();
    let a_far: Vec<f64> = far.iter().map(|p| p.absorption).collect();
    let (imax, _) = argmax(&a_near);
    let (imin, _) = argmin(&a_near);
    let below = a_far.iter().zip(&a_near).filter(|(f, n)| f < n).count();
    let ok = (thetas[imax] - 54.7).abs() <= 3.0 && imin == 0 && below == thetas.len();
    r.record(
        "5",
        ok,
        format!(
            "absorption at 0.3 GHz: max {:.4} at {:.1} deg (54.7 +/- 3), min {:.4} at {:.1} deg (0); 1.5 GHz below 0.3 GHz at {}/{} angles",
            a_near[imax],
            thetas[imax],
            a_near[imin],
            thetas[imin],
            below,
            thetas.len()
        ),
    );
}

fn shot_noise(r: &mut Report) {
    let det = DetectorParams {
        responsivity: 0.7,
        transimpedance: 5e3,
        bandwidth: 9e6,
        input_power: 1e-3,
    };
    let floor = shot_noise_floor(&det, 1.0);
    let rel = (floor / 5.6e-15 - 1.0).abs();
    r.record(
        "6(a)",
        rel <= 0.03,
        format!("shot-noise floor at 1 mW detected: {floor:.4e} V^2/Hz (5.6e-15 +/- 3 %)"),
    );

    let thetas: Vec<f64> = (0..=18).map(|k| 5.0 * k as f64).collect();
    let worst = match absorption_scan(&near_resonant(), &thetas) {
        Ok(points) => points
            .iter()
            .map(|p| (p.shot_floor / (floor * p.transmission) - 1.0).abs())
            .fold(0.0, f64::max),
        Err(e) => {
            r.record("6(b)", false, format!("absorption scan failed: {e}"));
            return;
        }
    };
    r.record(
        "6(b)",
        worst < 1e-12,
        format!("floor / T(theta) constant over 0-90 deg at 0.3 GHz: worst relative deviation {worst:.1e}"),
    );
}

fn noise_statistics(r: &mut Report) {
    let p = SystemParams::default();
    let dt = 1.0 / 18e6;
    let stats = match noise_stats(p.gamma_t, dt, p.n_atoms) {
        Ok(s) => s,
        Err(e) => {
            r.record("7", false, e.to_string());
            return;
        }
    };
    let n = 1_000_000;
    let mut rng = trajectory_rng(11, 0);
    let mut sum = [0.0f64; 9];
    let mut cross = [[0.0f64; 9]; 9];
    let mut hermitian = true;
    for _ in 0..n {
        let m = sample_increment(&stats, dt, &mut rng).entries;
        hermitian &= m == m.adjoint() && (0..4).all(|j| m[(EXCITED, j)] == C64::new(0.0, 0.0));
        let mut x = [
            m[(0, 0)].re,
            m[(1, 1)].re,
            m[(2, 2)].re,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
        ];
        for (k, &(a, b)) in COHERENCE_PAIRS.iter().enumerate() {
            x[3 + 2 * k] = m[(a, b)].re;
            x[4 + 2 * k] = m[(a, b)].im;
        }
        for i in 0..9 {
            sum[i] += x[i];
            for j in i..9 {
                cross[i][j] += x[i] * x[j];
            }
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let cov = |i: usize, j: usize| cross[i][j] / nf - mean[i] * mean[j];
    let rel_var: Vec<f64> = (0..9)
        .map(|i| {
            let want = if i < 3 {
                stats.sigma_sq
            } else {
                stats.offdiag_var
            };
            cov(i, i) / want - 1.0
        })
        .collect();
    let worst_var = rel_var.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut worst_z: f64 = 0.0;
    for i in 0..9 {
        for j in i + 1..9 {
            let rho = cov(i, j) / (cov(i, i) * cov(j, j)).sqrt();
            worst_z = worst_z.max(rho.abs() * nf.sqrt());
        }
    }
    let worst_mean_z = (0..9)
        .map(|i| (mean[i] / (cov(i, i) / nf).sqrt()).abs())
        .fold(0.0, f64::max);
    r.record(
        "7",
        worst_var < 0.02 && hermitian && worst_z < 4.0 && worst_mean_z < 4.0,
        format!(
            "10^6 increments: worst variance error {:.2} % (limit 2 %), Hermitian {hermitian}, worst cross-correlation {worst_z:.2} sigma, worst mean {worst_mean_z:.2} sigma (limit 4)",
            100.0 * worst_var
        ),
    );
}

fn parseval(r: &mut Report) {
    let dt = 1.0 / 18e6;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let n = 1 << 20;
    let white: Vec<f64> = (0..n).map(|_| gauss.sample(&mut rng)).collect();
    let mut red = vec![0.0; n];
    for k in 1..n {
        red[k] = 0.95 * red[k - 1] + white[k];
    }
    let tone: Vec<f64> = (0..n)
        .map(|k| {
            0.3 * gauss.sample(&mut rng) + 2.0 * (2.0 * PI * 2.8e6 * k as f64 * dt + 0.4).sin()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for x in [&white, &red, &tone] {
        let ms = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        match welch_psd(x, dt, 91e3) {
            Ok(s) => worst = worst.max((s.total_power() / ms - 1.0).abs()),
            Err(_) => worst = f64::INFINITY,
        }
    }
    r.record(
        "8(a)",
        worst < 0.01,
        format!("Parseval: integrated PSD vs mean square on white, red and tone signals, worst {:.3} % (limit 1 %)", 100.0 * worst),
    );
}

fn trace_conservation(r: &mut Report) {
    let p = SystemParams::default();
    let cfg = TrajectoryConfig {
        dt: 0.05 / p.fastest_coherent_rate(),
        n_steps: 1_000_000,
        burn_in_steps: 0,
        record_stride: 1,
        scheme: Scheme::Euler,
        noise: false,
    };
    let mut worst: f64 = 0.0;
    let mut rng = trajectory_rng(0, 0);
    let outcome = evolve_with(&DensityMatrix::equilibrium(), &p, &cfg, &mut rng, |_, x| {
        worst = worst.max((x.trace() - 1.0).abs());
    });
    r.record(
        "8(b)",
        outcome.is_ok() && worst < 1e-9,
        format!(
            "noise-free explicit Euler, 10^6 steps: max |Tr rho - 1| = {worst:.2e} (limit 1e-9)"
        ),
    );
}

fn steady_residual(r: &mut Report) {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for cfg in [far_detuned(), near_resonant()] {
        for theta in [0.0, 30.0, 54.7, 90.0] {
            let mut phys = cfg.physics;
            phys.theta_deg = theta;
            let res = phys
                .to_params()
                .and_then(|p| steady_state(&p).and_then(|rho| steady_state_residual(&rho, &p)));
            match res {
                Ok(v) => worst = worst.max(v),
                Err(_) => ok = false,
            }
        }
    }
    r.record(
        "8(c)",
        ok && worst < 1e-10,
        format!("steady-state residual |L rho|/max rate over 8 operating points: worst {worst:.2e} (limit 1e-10)"),
    );
}

fn trace_relaxation(r: &mut Report) {
    let p = SystemParams::default();
    let cfg = TrajectoryConfig {
        dt: 1.0 / 18e6,
        n_steps: 300,
        burn_in_steps: 0,
        record_stride: 1,
        scheme: Scheme::Exponential,
        noise: false,
    };
    let rho0 =
        DensityMatrix::hermitized(DensityMatrix::equilibrium().matrix() * C64::new(1.1, 0.0));
    let mut pts = Vec::new();
    let mut rng = trajectory_rng(0, 0);
    let outcome = evolve_with(&rho0, &p, &cfg, &mut rng, |k, x| {
        pts.push(((k + 1) as f64 * cfg.dt, (x.trace() - 1.0).ln()));
    });
    pts.insert(0, (0.0, 0.1f64.ln()));
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, &(x, y)| (a.0 + x, a.1 + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |a, &(x, y)| {
        (a.0 + (x - mx) * (y - my), a.1 + (x - mx) * (x - mx))
    });
    let rate = -sxy / sxx;
    let rel = rate / p.gamma_t - 1.0;
    r.record(
        "8(d)",
        outcome.is_ok() && rel.abs() < 0.01,
        format!(
            "trace relaxation from Tr rho = 1.1: fitted rate / gamma_t = {:.5} (limit 1 +/- 0.01)",
            1.0 + rel
        ),
    );
}

fn reproducibility(r: &mut Report) {
    let mut cfg = far_detuned();
    cfg.axis = ScanAxis::Theta;
    cfg.range = AxisRange {
        start: 0.0,
        stop: 90.0,
        step: 22.5,
    };
    cfg.n_trajectories = 3;
    cfg.trajectory.n_steps = 512 + (1 << 14);
    cfg.master_seed = 99;
    let run = |cfg: &ExperimentConfig| -> spinnoise::Result<(tempfile::TempDir, Vec<String>)> {
        let dir = tempfile::tempdir()?;
        let files = run_scan(cfg)?.write(dir.path())?;
        let names = files
            .iter()
            .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        Ok((dir, names))
    };
    let read = |dir: &tempfile::TempDir, name: &str| {
        std::fs::read(dir.path().join(name)).unwrap_or_default()
    };

    let outcome = (|| -> spinnoise::Result<(bool, bool, usize)> {
        let (a, names) = run(&cfg)?;
        let (b, _) = run(&cfg)?;
        let identical = names.iter().all(|n| read(&a, n) == read(&b, n));
        let mut sub = cfg.clone();
        sub.range = AxisRange {
            start: 22.5,
            stop: 67.5,
            step: 22.5,
        };
        let (c, sub_names) = run(&sub)?;
        let manifest =
            |d: &tempfile::TempDir| String::from_utf8(read(d, "manifest.csv")).unwrap_or_default();
        let full_rows = manifest(&a);
        let rows_match = manifest(&c)
            .lines()
            .all(|row| full_rows.lines().any(|f| f == row));
        let files_match = sub_names
            .iter()
            .filter(|n| n.as_str() != "manifest.csv")
            .all(|n| read(&a, n) == read(&c, n) && !read(&c, n).is_empty());
        Ok((identical, rows_match && files_match, names.len()))
    })();
    match outcome {
        Ok((identical, sub_ok, count)) => r.record(
            "9",
            identical && sub_ok,
            format!("repeat run byte-identical over {count} files: {identical}; sub-range rows equal full-scan rows: {sub_ok}"),
        ),
        Err(e) => r.record("9", false, format!("scan failed: {e}")),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut r = Report::default();
    oscillation_modes(&mut r);
    shot_noise(&mut r);
    noise_statistics(&mut r);
    parseval(&mut r);
    trace_conservation(&mut r);
    steady_residual(&mut r);
    trace_relaxation(&mut r);
    absorption(&mut r);
    reproducibility(&mut r);
    peak_positions(&mut r);
    let far = far_detuned_map(&mut r);
    near_resonance_map(&mut r, far.as_ref());

    let failed = r.failures();
    println!(
        "acceptance: {} of {} checks passed in {:.0} s",
        r.checks.len() - failed.len(),
        r.checks.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        let ids: Vec<&str> = failed.iter().map(|c| c.id.as_str()).collect();
        println!("failed: {}", ids.join(", "));
        ExitCode::FAILURE
    }
}
