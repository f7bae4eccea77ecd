//! Command-line front end: solve a configured problem, sweep kernel
//! approximation errors, or list the built-in presets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nlmfg::config;
use nlmfg::experiments::ExperimentPreset;
use nlmfg::runner;

#[derive(Parser)]
#[command(name = "nlmfg", about = "Solver for nonlocal mean-field games", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and write artifacts.
    Solve {
        /// Path to a JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured iteration cap.
        #[arg(long)]
        max_iters: Option<u64>,
        /// Override the configured residual tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Echo the resolved configuration and exit without solving.
        #[arg(long)]
        dry_run: bool,
    },
    /// Print the kernel-approximation error table for the configured preset.
    KernelCheck {
        /// Path to a JSON run configuration.
        #[arg(long)]
        config: PathBuf,
    },
    /// List preset names with their default parameters.
    Presets,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> nlmfg::Result<()> {
    match cli.command {
        Command::Solve { config, out, max_iters, tol, dry_run } => {
            let mut run_config = config::load_config(&config)?;
            if let Some(out) = out {
                run_config.out_dir = out.to_string_lossy().into_owned();
            }
            if let Some(n) = max_iters {
                run_config.max_iters = n;
            }
            if let Some(t) = tol {
                run_config.tol = t;
            }
            run_config.validate()?;
            if dry_run {
                print!("{}", config::canonical_json(&run_config));
                return Ok(());
            }
            let summary = runner::run(&run_config)?;
            println!(
                "{}: {} after {} iterations (continuity {:.3e}, coefficient gap {:.3e}) -> {}",
                run_config.preset,
                if summary.converged { "converged" } else { "iteration cap reached" },
                summary.iterations,
                summary.residuals.continuity,
                summary.residuals.a_fixedpoint,
                run_config.out_dir,
            );
            Ok(())
        }
        Command::KernelCheck { config } => {
            let run_config = config::load_config(&config)?;
            let rows = runner::kernel_check(&run_config)?;
            println!("{:<24} {:>8} {:>14}", "expansion", "features", "sup error");
            for row in rows {
                println!("{:<24} {:>8} {:>14.6e}", row.label, row.features, row.sup_error);
            }
            Ok(())
        }
        Command::Presets => {
            for preset in ExperimentPreset::all() {
                println!("{:<14} {}", preset.name(), describe(&preset));
            }
            Ok(())
        }
    }
}

fn describe(preset: &ExperimentPreset) -> String {
    match *preset {
        ExperimentPreset::Trivial => {
            "no costs, no interaction; the uniform density stays static".into()
        }
        ExperimentPreset::Spread { lambda1, lambda2 } => {
            format!("bilinear spreading kernel, lambda1={lambda1}, lambda2={lambda2}")
        }
        ExperimentPreset::GaussStatic { sigma1, sigma2, mu } => {
            format!(
                "Gaussian repulsion with static obstacles, sigma=({sigma1}, {sigma2}), mu={mu}"
            )
        }
        ExperimentPreset::GaussDynamic { sigma1, sigma2, mu } => {
            format!(
                "Gaussian repulsion with moving obstacles, sigma=({sigma1}, {sigma2}), mu={mu}"
            )
        }
        ExperimentPreset::Subregion { sigma, mu } => {
            format!("Gaussian repulsion restricted to half-domains, sigma={sigma}, mu={mu}")
        }
        ExperimentPreset::Turnpike { mu, horizon, order } => {
            format!("long-horizon periodic problem, mu={mu}, horizon={horizon}, order={order}")
        }
    }
}
