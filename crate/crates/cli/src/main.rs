use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xolscreen::run::{self, Outcome};
use xolscreen::{CliError, ExperimentConfig};

/// Screening menus of excess-of-loss contracts.
#[derive(Parser)]
#[command(name = "xolscreen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a config file.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun one of the five reference figures.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        figure: u8,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip the SVG plots.
        #[arg(long)]
        no_svg: bool,
    },
    /// Redraw a figure's SVGs from CSVs already on disk.
    Replot {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        figure: u8,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo check of a contract against its closed-form values.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Feasibility and assumption diagnostics only.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cmd: Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Solve { config, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            run::solve(&cfg, &run::resolve_out(out.as_deref(), cfg.output.dir.as_deref()))
        }
        Command::Reproduce { figure, out, no_svg } => {
            run::reproduce(figure, &run::resolve_out(out.as_deref(), None), !no_svg)
        }
        Command::Replot { figure, out } => {
            let dir = run::resolve_out(out.as_deref(), None);
            let mut files = Vec::new();
            for (name, body) in xolscreen::figures::plot_figure(figure, &dir)? {
                let path = dir.join(name);
                std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
                files.push(path);
            }
            Ok(Outcome { dir, files, summary: serde_json::json!({ "mode": "replot", "figure": figure }) })
        }
        Command::Simulate { config, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            run::simulate(&cfg, &run::resolve_out(out.as_deref(), cfg.output.dir.as_deref()))
        }
        Command::Check { config, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            run::check(&cfg, &run::resolve_out(out.as_deref(), cfg.output.dir.as_deref()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.to_json());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
