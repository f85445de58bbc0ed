use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oca_core::field::{stark_shift, DEFAULT_ALPHA};
use oca_core::harness::ScenarioConfig;

fn oca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oca"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs under `out` and returns the single run directory created there.
fn run_in(out: &Path, args: &[&str]) -> (Output, PathBuf) {
    let mut full = args.to_vec();
    let out_s = out.to_str().unwrap();
    full.extend(["--out", out_s]);
    let before: Vec<PathBuf> = list(out);
    let o = oca(&full);
    let created: Vec<PathBuf> = list(out)
        .into_iter()
        .filter(|p| !before.contains(p))
        .collect();
    assert_eq!(created.len(), 1, "{}\n{}", stdout(&o), stderr(&o));
    (o, created[0].clone())
}

fn list(dir: &Path) -> Vec<PathBuf> {
    match fs::read_dir(dir) {
        Ok(rd) => rd.map(|e| e.unwrap().path()).collect(),
        Err(_) => Vec::new(),
    }
}

fn indexed(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fs::read_to_string(dir.join("index.txt"))
        .unwrap()
        .lines()
        .map(|l| (l.to_string(), fs::read(dir.join(l)).unwrap()))
        .collect()
}

fn short_config(dir: &Path) -> PathBuf {
    let mut cfg = ScenarioConfig::baseline();
    cfg.scenario_name = "short".into();
    cfg.field.f_sig = 33.0;
    cfg.acquisition.duration = 4.0;
    cfg.analysis.rbw = 3.0;
    cfg.analysis.exclusion_halfwidth = 4.5;
    let path = dir.join("short.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    assert!(oca(&["--help"]).status.success());
    assert!(oca(&["--version"]).status.success());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(oca(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        oca(&["--mode", "sideways", "config"]).status.code(),
        Some(1)
    );
}

#[test]
fn invalid_config_reports_the_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::baseline();
    cfg.field.a_sig = cfg.field.e_dc;
    let path = tmp.path().join("bad.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    let o = oca(&[
        "--config",
        path.to_str().unwrap(),
        "simulate",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("field.a_sig"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_a_config_error() {
    assert_eq!(
        oca(&["--config", "/nonexistent/oca.toml", "config"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn config_round_trips_through_the_binary() {
    let o = oca(&["--seed", "42", "--mode", "oca", "config"]);
    assert!(o.status.success());
    let cfg = ScenarioConfig::from_toml(&stdout(&o)).unwrap();
    assert_eq!(cfg.noise.seed, 42);
    assert_eq!(cfg.mode, oca_core::harness::Mode::Oca);
}

#[test]
fn simulate_writes_indexed_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path());
    let out = tmp.path().join("runs");
    let (o, dir) = run_in(&out, &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir
        .file_name()
        .unwrap()
        .to_str()
        .unwrap()
        .starts_with("short_"));
    let names: Vec<String> = indexed(&dir).into_iter().map(|(n, _)| n).collect();
    for want in [
        "config.toml",
        "report.csv",
        "spectra/direct.csv",
        "spectra/oca.csv",
        "traces/pd.ocat",
    ] {
        assert!(
            names.iter().any(|n| n == want),
            "{want} missing from {names:?}"
        );
    }
    assert!(stdout(&o).contains("enhancement_db"));
}

#[test]
fn direct_mode_skips_the_lockin_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path());
    let (o, dir) = run_in(
        &tmp.path().join("runs"),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--mode",
            "direct",
            "simulate",
        ],
    );
    assert!(o.status.success());
    let names: Vec<String> = indexed(&dir).into_iter().map(|(n, _)| n).collect();
    assert!(names.iter().any(|n| n == "spectra/direct.csv"));
    assert!(!names.iter().any(|n| n.starts_with("traces/demod")));
}

#[test]
fn suite_runs_with_one_seed_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::baseline();
    cfg.acquisition.duration = 12.0;
    let path = tmp.path().join("suite.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    let out = tmp.path().join("runs");
    let (a, dir_a) = run_in(
        &out,
        &["--config", path.to_str().unwrap(), "--seed", "9", "suite"],
    );
    let (b, dir_b) = run_in(
        &out,
        &[
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "9",
            "--sequential",
            "suite",
        ],
    );
    assert!(a.status.success() && b.status.success());
    assert_ne!(dir_a, dir_b);
    let (ta, tb) = (indexed(&dir_a), indexed(&dir_b));
    assert!(ta.iter().any(|(n, _)| n == "comparison.csv"));
    assert_eq!(ta, tb);
    assert_eq!(
        fs::read(dir_a.join("index.txt")).unwrap(),
        fs::read(dir_b.join("index.txt")).unwrap()
    );
}

#[test]
fn dynamics_writes_a_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, dir) = run_in(tmp.path(), &["dynamics", "--t-end", "2e-3"]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.join("traces/trajectory.csv")).unwrap();
    assert!(csv.lines().count() > 800);
    assert!(stdout(&o).contains("depleted: true"));
}

#[test]
fn calibrate_recovers_the_factor() {
    let tmp = tempfile::tempdir().unwrap();
    let f_true = 0.9568;
    let mut csv = String::from("# synthetic\nvoltage_v,measured_shift_mhz\n");
    for i in 1..=8 {
        let v = 0.25 * i as f64;
        csv.push_str(&format!(
            "{v},{}\n",
            stark_shift(f_true * v / 1.8, DEFAULT_ALPHA)
        ));
    }
    let path = tmp.path().join("cal.csv");
    fs::write(&path, csv).unwrap();
    let (o, dir) = run_in(
        &tmp.path().join("runs"),
        &["calibrate", path.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.join("calibration.txt")).unwrap();
    let f: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("factor_f: "))
        .expect(&report)
        .trim()
        .parse()
        .unwrap();
    assert!((f / f_true - 1.0).abs() < 1e-9, "{f}");
}

#[test]
fn malformed_calibration_file_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cal.csv");
    fs::write(&path, "volts,shift\n1,2\n").unwrap();
    let o = oca(&[
        "calibrate",
        path.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn predict_table_has_one_row_per_frequency() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, dir) = run_in(tmp.path(), &["predict", "--freqs", "5,50,500"]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.join("predict.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn sweep_rejects_a_bias_below_the_linearization_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path());
    let o = oca(&[
        "--config",
        cfg.to_str().unwrap(),
        "sweep",
        "--biases",
        "0.01",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn sweep_writes_one_row_per_bias() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path());
    let (o, dir) = run_in(
        &tmp.path().join("runs"),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "sweep",
            "--biases",
            "0.4,0.8",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(dir.join("sweep.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn selftest_exit_code_matches_its_report() {
    let o = oca(&["selftest"]);
    let out = stdout(&o);
    let lines: Vec<&str> = out
        .lines()
        .filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]"))
        .collect();
    assert_eq!(lines.len(), 11, "{out}");
    let any_fail = lines.iter().any(|l| l.starts_with("[FAIL]"));
    assert_eq!(o.status.code(), Some(if any_fail { 3 } else { 0 }));
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn shipped_default_config_matches_the_builtin() {
    let text = fs::read_to_string(shipped("default.toml")).unwrap();
    assert_eq!(
        ScenarioConfig::from_toml(&text).unwrap(),
        ScenarioConfig::baseline()
    );
}

#[test]
fn shipped_suite_config_loads() {
    let o = oca(&[
        "--config",
        shipped("cosine_flicker_suite.toml").to_str().unwrap(),
        "config",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = ScenarioConfig::from_toml(&stdout(&o)).unwrap();
    assert_eq!(cfg.suite.unwrap().points.len(), 4);
}
