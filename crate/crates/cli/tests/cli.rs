use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rsda::io;
use rsda::presets;
use tempfile::TempDir;

fn rsda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsda")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn value(out: &Output, key: &str) -> f64 {
    stdout(out)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {}", stdout(out)))
        .parse()
        .unwrap()
}

fn write(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Step to `peak` at 50 ms, release halfway through.
fn step_csv(peak: f64, duration: f64) -> String {
    let half = duration / 2.0;
    format!(
        "t_s,p_pa\n0,0\n0.05,{peak}\n{half},{peak}\n{},0\n{duration},0\n",
        half + 0.05
    )
}

const TRUTH: &str = "preset = \"dof8\"\n[simulation]\nrtol = 1e-10\natol = 1e-13\noutput_rate_hz = 100\n";

#[test]
fn steady_without_pressure_stays_straight() {
    let out = rsda(&["steady", "--config", "dof8", "--pressure-pa", "0"]);
    assert!(out.status.success());
    assert_eq!(value(&out, "theta_ss"), 0.0);
}

#[test]
fn steady_bends_further_with_more_pressure() {
    let low = rsda(&["steady", "--config", "dof8", "--pressure-pa", "150000"]);
    let high = rsda(&["steady", "--config", "dof8", "--pressure-pa", "270000"]);
    assert!(value(&high, "theta_ss") > value(&low, "theta_ss"));
    assert!(value(&low, "theta_ss") > 0.0);
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let pressure = write(&dir, "p.csv", &step_csv(270e3, 0.6));
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let run = rsda(&["simulate", "--config", "dof8", "--pressure", s(&pressure), "--out", s(out)]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let a = fs::read(&a).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, fs::read(&b).unwrap());
}

#[test]
fn fit_recovers_the_generating_coefficients() {
    let dir = TempDir::new().unwrap();
    let truth_cfg = write(&dir, "truth.toml", TRUTH);
    let pressure = write(&dir, "p.csv", &step_csv(270e3, 0.6));
    let traj = dir.path().join("traj.csv");
    let tips = dir.path().join("tips.csv");
    let run = rsda(&[
        "simulate", "--config", s(&truth_cfg), "--pressure", s(&pressure), "--out", s(&traj), "--tip-out", s(&tips),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let truth = presets::dof8().params;
    let guess_cfg = write(
        &dir,
        "guess.toml",
        &format!(
            "preset = \"dof8\"\n[params]\nk_0 = {}\nm_k = {}\nb_0_pos = {}\nb_0_neg = {}\nm_b_pos = {}\nm_b_neg = {}\nr_hyd = {}\n",
            truth.k_0 * 1.1,
            truth.m_k * 0.9,
            truth.b_0_pos * 0.9,
            truth.b_0_neg * 1.1,
            truth.m_b_pos * 1.1,
            truth.m_b_neg * 0.9,
            truth.r_hyd * 1.05,
        ),
    );
    let fitted = dir.path().join("fit.csv");
    let run = rsda(&[
        "fit", "--config", s(&guess_cfg), "--pressure", s(&pressure), "--measured", s(&tips), "--out", s(&fitted),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let got = io::load_params(&fitted, &truth).unwrap();
    let pairs = [
        (got.k_0, truth.k_0),
        (got.m_k, truth.m_k),
        (got.b_0_pos, truth.b_0_pos),
        (got.b_0_neg, truth.b_0_neg),
        (got.m_b_pos, truth.m_b_pos),
        (got.m_b_neg, truth.m_b_neg),
        (got.r_hyd, truth.r_hyd),
    ];
    for (g, t) in pairs {
        assert!(((g - t) / t).abs() < 0.05, "fitted {g} vs {t}");
    }

    // the fitted coefficients predict an unseen, lower-pressure run
    let other = write(&dir, "p220.csv", &step_csv(220e3, 0.6));
    let tips220 = dir.path().join("tips220.csv");
    let run = rsda(&[
        "simulate", "--config", s(&truth_cfg), "--pressure", s(&other), "--out", s(&traj), "--tip-out", s(&tips220),
    ]);
    assert!(run.status.success());
    let run = rsda(&[
        "validate", "--config", s(&truth_cfg), "--params", s(&fitted), "--pressure", s(&other), "--measured",
        s(&tips220), "--rms-max", "1e-3",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(value(&run, "rms_tip_error_m") < 1e-3);

    // a missing parameter file is a data error
    let run = rsda(&[
        "validate", "--config", s(&truth_cfg), "--params", s(&guess_cfg.with_extension("missing")), "--pressure",
        s(&other), "--measured", s(&tips220),
    ]);
    assert_eq!(run.status.code(), Some(3));
}

#[test]
fn validate_threshold_failure_exits_5() {
    let dir = TempDir::new().unwrap();
    let truth_cfg = write(&dir, "truth.toml", TRUTH);
    let pressure = write(&dir, "p.csv", &step_csv(270e3, 0.4));
    let traj = dir.path().join("traj.csv");
    let tips = dir.path().join("tips.csv");
    let run = rsda(&[
        "simulate", "--config", s(&truth_cfg), "--pressure", s(&pressure), "--out", s(&traj), "--tip-out", s(&tips),
    ]);
    assert!(run.status.success());
    let mut wrong = presets::dof8().params;
    wrong.k_0 *= 1.5;
    let params = dir.path().join("params.csv");
    io::write_params(&wrong, &params, io::AngleUnit::Rad).unwrap();
    let run = rsda(&[
        "validate", "--config", s(&truth_cfg), "--params", s(&params), "--pressure", s(&pressure), "--measured",
        s(&tips), "--rms-max", "1e-6",
    ]);
    assert_eq!(run.status.code(), Some(5));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let unknown = write(&dir, "a.toml", "preset = \"dof8\"\n[params]\nk0 = 1.0\n");
    let missing = write(&dir, "b.toml", "[geometry]\nsegment_count = 4\n");
    for cfg in [&unknown, &missing] {
        let run = rsda(&["steady", "--config", s(cfg), "--pressure-pa", "1e5"]);
        assert_eq!(run.status.code(), Some(2));
        assert!(!run.stderr.is_empty());
    }
    let run = rsda(&["steady", "--config", "dof8", "--pressure-pa", "-1"]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "p.csv", "t_s,p_pa\n0,0\n0.1,oops\n");
    let out = dir.path().join("out.csv");
    let run = rsda(&["simulate", "--config", "dof8", "--pressure", s(&bad), "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&run.stderr).contains('3'), "line number reported");

    let run = rsda(&["steady", "--config", s(&dir.path().join("nope.toml")), "--pressure-pa", "1e5"]);
    assert_eq!(run.status.code(), Some(3));
}
