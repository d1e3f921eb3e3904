//! Config-driven runner for distributed equilibrium-seeking experiments.

use std::fmt::Write as _;
use std::io::{self, Write as _};
use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};

use nashseek_cli::commands::{cmd_certify, cmd_fig1, cmd_oracle, cmd_run};
use nashseek_cli::config::ExperimentConfig;
use nashseek_cli::error::CliError;

#[derive(Parser)]
#[command(name = "nashseek", version, about = "Distributed equilibrium-seeking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the certified step size and the constants behind it.
    Certify {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the equilibrium centrally and print it.
    Oracle {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the configured algorithm and write trace artifacts.
    Run {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory; overrides the config's `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the four-variant comparison and write one combined CSV.
    Fig1 {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory; overrides the config's `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    Ok(match cli.command {
        Command::Certify { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cmd_certify(&cfg)?
        }
        Command::Oracle { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cmd_oracle(&cfg)?
        }
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = cfg.output_dir(out.as_deref());
            let artifacts = cmd_run(&cfg, &dir)?;
            let mut text = String::new();
            let _ = writeln!(text, "{}", artifacts.summary);
            let _ = writeln!(text, "trace        {}", artifacts.trace.display());
            let _ = writeln!(text, "certificate  {}", artifacts.certificate.display());
            let _ = writeln!(text, "oracle       {}", artifacts.oracle.display());
            let _ = writeln!(text, "metadata     {}", artifacts.metadata.display());
            text
        }
        Command::Fig1 { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = cfg.output_dir(out.as_deref());
            let artifacts = cmd_fig1(&cfg, &dir)?;
            let mut text = String::new();
            for line in &artifacts.summaries {
                let _ = writeln!(text, "{line}");
            }
            let _ = writeln!(text, "combined     {}", artifacts.csv.display());
            text
        }
    })
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(report) => {
            let written = io::stdout()
                .write_all(report.as_bytes())
                .and_then(|()| io::stdout().flush());
            if let Err(err) = written {
                // A closed downstream pipe (`… | head`) means the consumer
                // has everything it wants; anything else is a real failure.
                if err.kind() != io::ErrorKind::BrokenPipe {
                    eprintln!("error: cannot write to stdout: {err}");
                    process::exit(1);
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            process::exit(e.exit_code());
        }
    }
}
