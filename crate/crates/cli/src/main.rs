use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ctgibbs_cli::config::{validate, ExperimentConfig, Severity};
use ctgibbs_cli::run::{run, Command};
use ctgibbs_cli::CliError;

/// Config-driven experiments on continuous-time Gibbs chains.
#[derive(Parser)]
#[command(name = "ctgibbs", version, about)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
    /// Path to the experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory for documents and tables.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Suppresses the summary lines on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum CliCommand {
    /// Dominant eigenvalue, eigenfunction, and eigenmeasure of `L + V`.
    Solve,
    /// The tilted chain of `V`: rates, kernel, stationary law.
    Gibbs,
    /// Entropy of a candidate chain relative to the base chain.
    Entropy,
    /// Variational audit: the Gibbs chain attains the eigenvalue, random
    /// candidates stay below it.
    PressureAudit,
    /// Rate function of occupation measures, primal and dual routes.
    Rate,
    /// One trajectory of the tilted chain, with its occupation measure.
    Simulate,
    /// Monte Carlo estimators matched against the analytic quantities.
    Mc,
    /// Stationary concentration along an inverse-temperature ladder.
    Anneal,
    /// Checks the configuration and prints the diagnostics.
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::usage("config", "--config PATH is required"))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::usage("config", format!("cannot read {}: {e}", path.display())))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::usage("config", e.to_string()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }

    let command = match cli.command {
        CliCommand::Validate => {
            let diags = validate(&config);
            println!(
                "{}",
                serde_json::to_string_pretty(&diags).expect("diagnostics always serialize")
            );
            let invalid = diags.iter().any(|d| d.severity == Severity::Error);
            return Ok(if invalid { ExitCode::from(2) } else { ExitCode::SUCCESS });
        }
        CliCommand::Solve => Command::Solve,
        CliCommand::Gibbs => Command::Gibbs,
        CliCommand::Entropy => Command::Entropy,
        CliCommand::PressureAudit => Command::PressureAudit,
        CliCommand::Rate => Command::Rate,
        CliCommand::Simulate => Command::Simulate,
        CliCommand::Mc => Command::Mc,
        CliCommand::Anneal => Command::Anneal,
    };

    let output = run(command, &config, &cli.out)?;
    if !cli.quiet {
        println!("{}", output.summary);
        for file in &output.files {
            println!("wrote {}", file.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
