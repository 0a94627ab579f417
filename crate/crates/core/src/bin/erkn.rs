use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use erkn::harness::{self, ExperimentConfig, HarnessError};

#[derive(Parser, Debug)]
#[command(name = "erkn", version, about = "ERKN integrators for the semilinear wave equation")]
struct Cli {
    /// JSON experiment configuration (defaults to the built-in experiment)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overrides the configured one
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Reserved; nothing in the pipeline is random
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Long-time run writing one CSV per method and summary.json
    Run {
        /// Restrict to one method
        #[arg(long)]
        method: Option<String>,
        /// Extend the horizon to T = 1e5
        #[arg(long)]
        full: bool,
        /// Replace the nonlinearity by g = 0
        #[arg(long)]
        linear: bool,
    },
    /// Symmetry and symplecticity verdicts of a method
    Check {
        #[arg(long, required_unless_present = "coeffs", conflicts_with = "coeffs")]
        method: Option<String>,
        /// JSON file with custom coefficients
        #[arg(long)]
        coeffs: Option<PathBuf>,
    },
    /// Observed order of convergence at t = 1
    Converge {
        /// Comma separated step sizes, each half the previous
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025")]
        h_list: Vec<f64>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        linear: bool,
    },
    /// Compare n ERKN steps with the conjugated trigonometric integrator
    ComposeVerify {
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Non-resonance indicators of the initial data
    Resonance {
        /// Truncation order N (1 to 3)
        #[arg(long, default_value_t = 2)]
        truncation: usize,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &cli.out {
        config.output_dir = dir.clone();
    }
    Ok(config)
}

fn restrict(config: &mut ExperimentConfig, method: &Option<String>) -> Result<(), HarnessError> {
    if let Some(name) = method {
        let coeffs = harness::resolve_method(name)?;
        config.methods = vec![coeffs.name().to_string()];
    }
    Ok(())
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<ExitCode, HarnessError> {
    match &cli.command {
        Command::Run { method, full, linear } => {
            let mut config = load_config(cli)?;
            restrict(&mut config, method)?;
            if *full {
                config.t_end = harness::FULL_HORIZON;
            }
            harness::cmd_run(&config, *linear, out)?;
        }
        Command::Check { method, coeffs } => {
            let coeffs = match (method, coeffs) {
                (Some(name), _) => harness::resolve_method(name)?,
                (None, Some(path)) => harness::load_coefficients(path)?,
                (None, None) => return Err(HarnessError::Usage("give --method or --coeffs".into())),
            };
            harness::cmd_check(&coeffs, out)?;
        }
        Command::Converge { h_list, method, linear } => {
            let mut config = load_config(cli)?;
            restrict(&mut config, method)?;
            harness::cmd_converge(&config, h_list, *linear, out)?;
        }
        Command::ComposeVerify { method, n } => {
            let config = load_config(cli)?;
            let coeffs = harness::resolve_method(method)?;
            if !harness::cmd_compose_verify(&config, &coeffs, *n, out)?.passed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Resonance { truncation } => {
            let config = load_config(cli)?;
            if !(1..=3).contains(truncation) {
                return Err(HarnessError::Usage(format!(
                    "truncation must be 1, 2 or 3, got {truncation}"
                )));
            }
            harness::cmd_resonance(&config, *truncation, out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match execute(&cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            let _ = out.flush();
            eprintln!("erkn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
