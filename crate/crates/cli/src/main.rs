//! `oca`: command-line front end for the optical-chopping simulator.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime error,
//! 3 selftest failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oca_core::dynamics::DriveProfile;
use oca_core::harness::{
    calibrate, create_run_dir, predict_table, run_dynamics_demo, run_scenario, run_suite,
    sweep_dc_bias, write_demo_artifacts, write_index, write_scenario_artifacts,
    write_suite_artifacts, HarnessError, Mode, PredictRow, ScenarioConfig, SweepRow,
};
use oca_core::lockin::chain_signal_gain;
use oca_core::Exec;
use oca_validation::run_all;

#[derive(Parser, Debug)]
#[command(
    name = "oca",
    version,
    about = "Optical-chopping Rydberg electrometry simulator"
)]
struct Cli {
    /// Scenario TOML; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `noise.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parent directory for run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Overrides the acquisition mode: direct, oca or both.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Run independent work items on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write traces, spectra and the sensitivity report.
    Simulate,
    /// Run the four-frequency direct vs OCA comparison.
    Suite,
    /// Integrate the three-level ladder and compare with the phase oracles.
    Dynamics {
        /// Drive profile TOML; a demo drive when omitted.
        #[arg(long)]
        drive: Option<PathBuf>,
        /// Seconds.
        #[arg(long, default_value_t = 5e-3)]
        t_end: f64,
        /// Step in seconds; defaults to a chop period / 400.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Fit the transmission factor from a `voltage_v,measured_shift_mhz` CSV.
    Calibrate { csv: PathBuf },
    /// Tabulate the closed-form and chain-law enhancement.
    Predict {
        #[arg(long, value_delimiter = ',', default_values_t = [7.0, 33.0, 66.0, 132.0])]
        freqs: Vec<f64>,
    },
    /// Re-run the scenario over a list of plate biases (volts).
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        biases: Vec<f64>,
        /// Transmission factor applied to every bias.
        #[arg(long, default_value_t = 1.0)]
        factor: f64,
    },
    /// Print the effective scenario config as TOML.
    Config,
    /// Run the acceptance checks.
    Selftest,
}

enum Failure {
    Config(String),
    Runtime(String),
    Selftest,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            ScenarioConfig::from_toml(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => ScenarioConfig::baseline(),
    };
    if let Some(seed) = cli.seed {
        cfg.noise.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.mode = mode;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn demo_drive() -> DriveProfile {
    DriveProfile {
        omega_p: 0.0,
        omega_c0: 2.0 * std::f64::consts::PI * 1.5e3,
        f_chop: 1e3,
        duty: 0.5,
        gamma_e: 3e4,
        gamma_r: 1e4,
        delta_p: 0.0,
        delta_c: 0.0,
    }
}

fn run_dir(cli: &Cli, name: &str) -> Result<PathBuf, Failure> {
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S").to_string();
    Ok(create_run_dir(&cli.out, name, &stamp)?)
}

fn write_text(dir: &Path, rel: &str, text: &str) -> Result<PathBuf, Failure> {
    let path = dir.join(rel);
    fs::write(&path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    Ok(PathBuf::from(rel))
}

fn finish(dir: &Path, files: &[PathBuf]) -> Result<(), Failure> {
    write_index(dir, files)?;
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn table(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    match &cli.command {
        Command::Simulate => {
            let cfg = load_config(cli)?;
            let outcome = run_scenario(&cfg)?;
            let dir = run_dir(cli, &cfg.scenario_name)?;
            let files = write_scenario_artifacts(&outcome, &dir)?;
            print!("{}", outcome.summary());
            finish(&dir, &files)
        }
        Command::Suite => {
            let cfg = load_config(cli)?;
            let suite = run_suite(&cfg, exec)?;
            let dir = run_dir(cli, &format!("{}_suite", cfg.scenario_name))?;
            let files = write_suite_artifacts(&suite, &dir)?;
            print!("{}", suite.report.to_text());
            finish(&dir, &files)
        }
        Command::Dynamics { drive, t_end, dt } => {
            let drive = match drive {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
                    toml::from_str::<DriveProfile>(&text).map_err(|e| {
                        Failure::Config(format!("{}: {}", path.display(), e.message()))
                    })?
                }
                None => demo_drive(),
            };
            drive
                .validate()
                .map_err(|e| Failure::Config(e.to_string()))?;
            let dt = dt.unwrap_or(drive.period() / 400.0);
            let demo = run_dynamics_demo(&drive, *t_end, dt)?;
            let dir = run_dir(cli, "dynamics")?;
            let files = write_demo_artifacts(&demo, &dir)?;
            print!("{}", demo.summary());
            finish(&dir, &files)
        }
        Command::Calibrate { csv } => {
            let cfg = load_config(cli)?;
            let fit = calibrate(csv, &cfg.geometry, cfg.field.alpha)?;
            let dir = run_dir(cli, "calibration")?;
            let report = fit.to_report();
            let files = vec![write_text(&dir, "calibration.txt", &report)?];
            print!("{report}");
            finish(&dir, &files)
        }
        Command::Predict { freqs } => {
            let cfg = load_config(cli)?;
            let gain = chain_signal_gain(&cfg.chopper, &cfg.lockin, cfg.acquisition.sample_rate);
            let rows = predict_table(
                cfg.noise.k,
                cfg.noise.white_floor,
                cfg.chopper.f_chop,
                freqs,
                gain,
            )?;
            let csv = table(
                PredictRow::CSV_HEADER,
                rows.iter().map(PredictRow::to_csv_row),
            );
            let dir = run_dir(cli, "predict")?;
            let files = vec![write_text(&dir, "predict.csv", &csv)?];
            print!("{csv}");
            finish(&dir, &files)
        }
        Command::Sweep { biases, factor } => {
            let cfg = load_config(cli)?;
            let rows = sweep_dc_bias(&cfg, biases, *factor, exec)?;
            let csv = table(SweepRow::CSV_HEADER, rows.iter().map(SweepRow::to_csv_row));
            let dir = run_dir(cli, &format!("{}_sweep", cfg.scenario_name))?;
            let files = vec![write_text(&dir, "sweep.csv", &csv)?];
            print!("{csv}");
            finish(&dir, &files)
        }
        Command::Config => {
            print!("{}", load_config(cli)?.to_toml());
            Ok(())
        }
        Command::Selftest => {
            let results = run_all(exec);
            for r in &results {
                println!("{r}");
            }
            if results.iter().any(|r| !r.informational && !r.passed) {
                Err(Failure::Selftest)
            } else {
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Selftest) => {
            eprintln!("selftest: one or more criteria failed");
            ExitCode::from(3)
        }
    }
}
