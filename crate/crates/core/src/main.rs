use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dampbound::cli::{run_experiment, CliError, ExitKind};
use dampbound::config::{ConfigError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dampbound", version, about = "Ultimate energy bounds for damped wave and beam equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write its energy ledger
    Simulate(Common),
    /// Estimate the ultimate bound over a list of amplitudes and fit the growth exponent
    Sweep(Common),
    /// Shoot for anti-periodic solutions
    Antiperiodic(Common),
    /// Run the property suite
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a field, e.g. `--set damping.alpha=1.5`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(common: &Common) -> Result<ExperimentConfig, ConfigError> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| ConfigError { path: "--config".into(), message: format!("{}: {e}", p.display()) })?,
        None => String::new(),
    };
    ExperimentConfig::parse(&text, &common.set)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = match &cli.command {
        Command::Simulate(c) => (Experiment::Simulate, c),
        Command::Sweep(c) => (Experiment::Sweep, c),
        Command::Antiperiodic(c) => (Experiment::Antiperiodic, c),
        Command::Verify(c) => (Experiment::Verify, c),
    };
    let result = load(common)
        .map_err(|e| CliError { kind: ExitKind::Validation, experiment: "config".into(), message: e.to_string() })
        .and_then(|cfg| run_experiment(experiment, &cfg, common.out.as_deref()));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.report);
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
