use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use heston_hjb::McConfig;
use heston_hjb_cli::{oracle_report, run, ExperimentConfig};

#[derive(Parser)]
#[command(name = "price", version, about = "Heston option pricing with an uncertain market price of volatility risk")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write CSV, SVG and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of uniform mesh refinements.
        #[arg(long)]
        refinements: Option<u32>,
        /// Override the number of time steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Compare the PDE price for a fixed control with Monte Carlo and,
    /// for calls at λ = 0, the characteristic-function price.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        /// Evaluation point as `S,v`.
        #[arg(long, value_parser = parse_point)]
        point: (f64, f64),
        #[arg(long, default_value_t = 200_000)]
        paths: usize,
        #[arg(long, default_value_t = 200)]
        mc_steps: usize,
    },
}

fn parse_point(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("expected S,v");
    }
    Ok((parts[0].parse()?, parts[1].parse()?))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            refinements,
            steps,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(r) = refinements {
                cfg.refinements = r;
            }
            if let Some(s) = steps {
                cfg.steps = s;
            }
            let result = run(&cfg, &out)?;
            for f in &result.files {
                println!("{}", f.display());
            }
        }
        Command::Oracle {
            config,
            lambda,
            point,
            paths,
            mc_steps,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mc = McConfig {
                n_paths: paths,
                n_steps: mc_steps,
                seed: cfg.seed,
                antithetic: false,
            };
            let report = oracle_report(&cfg, lambda, point.0, point.1, &mc)?;
            println!("{}", serde_json::to_string(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}");
            eprintln!("{}", serde_json::json!({ "error": msg }));
            ExitCode::FAILURE
        }
    }
}
