use std::path::Path;
use std::process::{Command, Output};

fn spinnoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinnoise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const QUICK: [&str; 6] = [
    "--set",
    "n_trajectories=2",
    "--set",
    "n_steps=2560",
    "--set",
    "rbw_hz=200e3",
];

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn modes_report_larmor_harmonics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = spinnoise(&["modes", "--omega-l-hz", "1e6", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read(dir.path(), "modes_summary.csv");
    let freqs: Vec<f64> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(freqs, vec![1e6, 2e6, 1e6]);
    for name in ["mode_minus1_z.csv", "mode_x.csv", "mode_minus_pi_4.csv"] {
        assert!(dir.path().join(name).is_file());
    }
}

#[test]
fn scan_writes_one_spectrum_per_angle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["scan", "--preset", "fig3_end", "--out", out];
    args.extend(QUICK);
    let o = spinnoise(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = read(dir.path(), "manifest.csv");
    let rows: Vec<&str> = manifest.lines().skip(1).collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("end")));
    assert!(rows[0].starts_with("-4,"));
    assert!(dir.path().join("theta_44_end.csv").is_file());
    assert!(read(dir.path(), "run_manifest.cfg").contains("mode = end"));
}

#[test]
fn manifest_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut args = vec![
        "scan",
        "--preset",
        "fig6_rnd",
        "--set",
        "scan_start=40",
        "--set",
        "scan_stop=48",
        "--seed",
        "17",
        "--out",
        a.path().to_str().unwrap(),
    ];
    args.extend(QUICK);
    assert!(spinnoise(&args).status.success());
    let manifest = a.path().join("run_manifest.cfg");
    let o = spinnoise(&[
        "scan",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        b.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in [
        "manifest.csv",
        "theta_40_rnd.csv",
        "theta_44_rnd.csv",
        "theta_48_rnd.csv",
        "run_manifest.cfg",
    ] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn simulate_and_absorption_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["simulate", "--set", "theta_deg=55", "--out", out];
    args.extend(QUICK);
    let o = spinnoise(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let ts = read(dir.path(), "timeseries.csv");
    assert!(ts.starts_with("t_s,rnd,end\n"));
    assert_eq!(ts.lines().count(), 1 + 2048);
    assert!(dir.path().join("none_55_rnd.csv").is_file());

    let o = spinnoise(&["absorption", "--preset", "fig5_absorption", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(dir.path(), "absorption.csv").lines().count(), 1 + 91);
}

#[test]
fn config_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let unknown = spinnoise(&["scan", "--set", "theta_degrees=4", "--out", out]);
    let missing = spinnoise(&["scan", "--config", "/nonexistent/run.cfg", "--out", out]);
    let range = spinnoise(&[
        "scan",
        "--set",
        "scan_axis=theta",
        "--set",
        "scan_start=10",
        "--set",
        "scan_stop=0",
        "--out",
        out,
    ]);
    let codes: Vec<i32> = [&unknown, &missing, &range]
        .iter()
        .map(|o| o.status.code().unwrap())
        .collect();
    assert!(codes.iter().all(|&c| c != 0));
    assert_eq!(
        codes
            .iter()
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        3,
        "exit codes {codes:?}"
    );
    assert!(stderr(&unknown).contains("theta_degrees"));
    assert!(stderr(&missing).contains("/nonexistent/run.cfg"));
    assert!(stderr(&range).contains("invalid scan range"));

    let bad_value = spinnoise(&["scan", "--set", "rbw_hz=wide", "--out", out]);
    assert!(!bad_value.status.success());
    assert!(stderr(&bad_value).contains("rbw_hz"));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = spinnoise(&["transmogrify"]);
    assert!(!o.status.success());
    assert!(stderr(&o).to_lowercase().contains("usage"));
}
