use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trocar_cli::{model_info, simulate, synthesize, verify, CliError, Scenario, SimOverrides, DEFAULT_SEED};

#[derive(Parser)]
#[command(name = "trocar", version, about = "Passive virtual-mechanism controllers for RCM surgery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print DOF, link masses, frames and the inertia eigenvalue range of a URDF.
    ModelInfo {
        /// URDF file (or use --scenario to take the scenario's robot).
        robot: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Synthesise gains over the scenario's pose grid and write gains files.
    Synthesize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Simulate the scenario with a gains file; writes trace.csv, summary.txt and plot.gp.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        gains: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Check passivity, H∞ bound and coordinate Jacobians for a gains file.
    Verify {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        gains: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::ModelInfo { robot, scenario } => {
            let path = match (robot, scenario) {
                (Some(p), _) => p,
                (None, Some(s)) => Scenario::load(&s)?.robot_path(),
                (None, None) => return Err(CliError::Input("give a URDF path or --scenario".into())),
            };
            model_info(&path)
        }
        Command::Synthesize { scenario, out_dir } => {
            let s = Scenario::load(&scenario)?;
            let dir = out_dir.unwrap_or_else(|| s.out_dir());
            synthesize(&s, &dir).map(|(report, _)| report)
        }
        Command::Simulate { scenario, gains, out_dir, dt, duration } => {
            let s = Scenario::load(&scenario)?;
            let dir = out_dir.unwrap_or_else(|| s.out_dir());
            simulate(&s, &gains, &dir, SimOverrides { dt, duration })
        }
        Command::Verify { scenario, gains, seed } => {
            let s = Scenario::load(&scenario)?;
            let report = verify(&s, &gains, seed)?;
            if report.passed {
                Ok(report.text)
            } else {
                Err(CliError::VerifyFailed(report.text))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(CliError::VerifyFailed(report)) => {
            print!("{report}");
            eprintln!("verification failed");
            ExitCode::from(trocar_cli::EXIT_VERIFY_FAILED as u8)
        }
        Err(e) => {
            eprintln!("trocar: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
