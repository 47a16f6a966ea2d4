use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rigidflow::driver::mms::{convergence_study, MmsTarget, MMS_GRIDS};
use rigidflow::driver::sweep::{sweep, SweepParam};
use rigidflow::driver::verify::{verify, Fault};
use rigidflow::driver::{output_root, run, RunConfig};
use rigidflow::exec::Exec;

#[derive(Parser)]
#[command(name = "rigidflow", version, about = "Rigid body in compressible flow via penalty solidification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one simulation per parameter value and tabulate trends.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Check the invariant suite.
    Verify {
        #[arg(long)]
        fast: bool,
        /// Seed a known defect to confirm the suite detects it.
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Manufactured-solution convergence study.
    Mms {
        #[arg(long)]
        which: Which,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Continuity,
    Momentum,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> rigidflow::Result<ExitCode> {
    match cmd {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let report = run(&cfg)?;
            println!("{}", to_json(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, param, values } => {
            let cfg = RunConfig::load(&config)?;
            let report = sweep(&cfg, param, &values)?;
            println!("{}", to_json(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { fast, inject_fault } => {
            let report = verify(fast, inject_fault);
            let dir = output_root().join("verify");
            std::fs::create_dir_all(&dir)?;
            let json = to_json(&report)?;
            std::fs::write(dir.join("verify.json"), &json)?;
            for p in &report.properties {
                println!("{} {:<44} {:>8.3}s  {}", if p.passed { "PASS" } else { "FAIL" }, p.name, p.seconds, p.detail);
            }
            println!("{}/{} properties passed", report.passed, report.properties.len());
            if !report.failures.is_empty() {
                eprintln!("{}", serde_json::json!({ "failures": report.failures }));
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Mms { which } => {
            let target = match which {
                Which::Continuity => MmsTarget::Continuity,
                Which::Momentum => MmsTarget::Momentum,
            };
            let report = convergence_study(target, &MMS_GRIDS, Exec::Parallel)?;
            let dir = output_root().join("mms");
            std::fs::create_dir_all(&dir)?;
            let json = to_json(&report)?;
            std::fs::write(dir.join(format!("{}.json", which.to_possible_value().unwrap().get_name())), &json)?;
            println!("{json}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> rigidflow::Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| rigidflow::SimError::Io(e.to_string()))
}
