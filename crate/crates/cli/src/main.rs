//! Command-line front end: simulate, steady, fit, validate.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data/file error,
//! 4 numerical failure, 5 validation threshold exceeded.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rsda::dynamics::{simulate, simulate_at, ChainModel, ChainState};
use rsda::identification::{fit, FitProblem, MeasuredTrajectory, Objective};
use rsda::io::{self, AngleUnit, RunConfig};
use rsda::steady_state::{SteadySolver, StiffnessCoupling};
use rsda::Error;

#[derive(Parser)]
#[command(name = "rsda", version, about = "Segmented dynamics of soft bending actuators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the chain under a pressure trace and write the trajectory.
    Simulate {
        /// TOML config file, or a preset name (dof2, dof8).
        #[arg(long)]
        config: String,
        /// Pressure CSV (t_s,p_pa).
        #[arg(long)]
        pressure: PathBuf,
        /// Trajectory CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// End time [s]; defaults to the last pressure sample.
        #[arg(long)]
        tend: Option<f64>,
        /// Also write the tip path as a t_s,tip_x_m,tip_y_m CSV.
        #[arg(long)]
        tip_out: Option<PathBuf>,
        /// Report angles in degrees.
        #[arg(long)]
        degrees: bool,
    },
    /// Closed-form equilibrium bending at a constant pressure.
    Steady {
        #[arg(long)]
        config: String,
        #[arg(long = "pressure-pa")]
        pressure_pa: f64,
        /// Evaluate the stiffness at the unpressurized radius only.
        #[arg(long)]
        initial_radius_stiffness: bool,
        #[arg(long)]
        degrees: bool,
    },
    /// Identify the material coefficients from a measured tip path.
    Fit {
        #[arg(long)]
        config: String,
        #[arg(long)]
        pressure: PathBuf,
        /// Measured tip CSV (t_s,tip_x_m,tip_y_m).
        #[arg(long)]
        measured: PathBuf,
        /// Parameter CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// tip_y or tip_xy; overrides the config.
        #[arg(long)]
        objective: Option<String>,
        /// Write coefficients per degree.
        #[arg(long)]
        degrees: bool,
    },
    /// Compare a simulation with given coefficients against a measured tip path.
    Validate {
        #[arg(long)]
        config: String,
        /// Parameter CSV (as written by `fit`).
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        pressure: PathBuf,
        #[arg(long)]
        measured: PathBuf,
        /// Largest acceptable RMS tip error [m].
        #[arg(long = "rms-max", default_value_t = 0.005)]
        rms_max: f64,
    },
}

enum Failure {
    Model(Error),
    Threshold(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Parse { .. } | Error::Data { .. } | Error::Io { .. } => 3,
        _ => 4,
    }
}

fn load_config(name_or_path: &str) -> Result<RunConfig, Error> {
    let path = Path::new(name_or_path);
    if !path.exists() && rsda::presets::by_name(name_or_path).is_some() {
        return RunConfig::from_preset(name_or_path);
    }
    RunConfig::load(path)
}

fn unit(degrees: bool) -> AngleUnit {
    if degrees {
        AngleUnit::Deg
    } else {
        AngleUnit::Rad
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            config,
            pressure,
            out,
            tend,
            tip_out,
            degrees,
        } => {
            let config = load_config(&config)?;
            let trace = io::load_pressure_trace(&pressure)?;
            let model = config.model()?;
            let mut initial = ChainState::at_rest(&config.geometry);
            initial.time = trace.start_time();
            let t_end = tend.unwrap_or(trace.end_time());
            if !(t_end > initial.time) {
                return Err(Error::Config {
                    key: "tend".into(),
                    reason: format!("end time {t_end} must exceed the trace start {}", initial.time),
                }
                .into());
            }
            let traj = simulate(&model, &initial, &trace, t_end, &config.simulation)?;
            io::export_trajectory(&traj, &out, unit(degrees))?;
            if let Some(tip_out) = tip_out {
                let tips = MeasuredTrajectory::from_trajectory("simulation", &traj)?;
                io::write_measured(&tips, &tip_out)?;
            }
            let last = traj.last().expect("trajectory has samples");
            let bend = if degrees { last.bend_total.to_degrees() } else { last.bend_total };
            println!("samples={}", traj.len());
            println!("t_end_s={}", last.time());
            println!("bend_total={bend}");
            println!("tip_x_m={}", last.tip.x);
            println!("tip_y_m={}", last.tip.y);
            println!("steps_accepted={}", traj.stats.accepted);
        }
        Command::Steady {
            config,
            pressure_pa,
            initial_radius_stiffness,
            degrees,
        } => {
            let config = load_config(&config)?;
            if !(pressure_pa >= 0.0 && pressure_pa.is_finite()) {
                return Err(Error::Config {
                    key: "pressure-pa".into(),
                    reason: format!("must be a non-negative number, got {pressure_pa}"),
                }
                .into());
            }
            let solver = SteadySolver {
                coupling: if initial_radius_stiffness {
                    StiffnessCoupling::InitialRadius
                } else {
                    StiffnessCoupling::FixedPoint
                },
                ..SteadySolver::default()
            };
            let s = solver.solve(pressure_pa, &config.geometry, &config.params)?;
            let angle = |v: f64| if degrees { v.to_degrees() } else { v };
            println!("theta_ss={}", angle(s.theta_ss));
            println!("r_i_ss_m={}", s.r_i_ss);
            println!("elongation_s_m={}", s.elongation_s);
            // stiffness is per unit angle
            let k = if degrees { s.k_ss.to_radians() } else { s.k_ss };
            println!("k_ss={k}");
            println!("iterations={}", s.iterations);
            println!("angle_unit={}", if degrees { "deg" } else { "rad" });
        }
        Command::Fit {
            config,
            pressure,
            measured,
            out,
            objective,
            degrees,
        } => {
            let config = load_config(&config)?;
            let trace = io::load_pressure_trace(&pressure)?;
            let measured = io::load_measured(&measured)?;
            let objective = match objective {
                Some(s) => s.parse::<Objective>()?,
                None => config.objective,
            };
            let mut problem = FitProblem::new(measured, trace, config.geometry, config.params, objective)?;
            problem.simulation = config.fit_simulation;
            let result = fit(&problem, &config.fit_settings)?;
            io::write_fit_result(&result, &out, unit(degrees))?;
            println!("residual_rms_m={}", result.residual_rms);
            println!("iterations={}", result.iterations);
            println!("converged={}", result.converged);
        }
        Command::Validate {
            config,
            params,
            pressure,
            measured,
            rms_max,
        } => {
            let config = load_config(&config)?;
            let params = io::load_params(&params, &config.params)?;
            let trace = io::load_pressure_trace(&pressure)?;
            let measured = io::load_measured(&measured)?;
            let model = ChainModel::new(config.geometry, params)?;
            let mut initial = ChainState::at_rest(&config.geometry);
            initial.time = trace.start_time();
            if measured.times()[0] < initial.time {
                return Err(Error::Data {
                    path: measured.source.clone().into(),
                    reason: "measured samples start before the pressure trace".into(),
                }
                .into());
            }
            let traj = simulate_at(&model, &initial, &trace, measured.times(), &config.simulation)?;
            let errors: Vec<f64> = traj
                .samples
                .iter()
                .zip(measured.samples())
                .map(|(s, (_, x, y))| (s.tip.x - x).hypot(s.tip.y - y))
                .collect();
            let rms = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
            let max = errors.iter().copied().fold(0.0, f64::max);
            println!("rms_tip_error_m={rms}");
            println!("max_tip_error_m={max}");
            println!("samples={}", errors.len());
            if rms > rms_max {
                return Err(Failure::Threshold(format!(
                    "RMS tip error {rms:e} m exceeds {rms_max:e} m"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Model(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Threshold(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(5)
        }
    }
}
