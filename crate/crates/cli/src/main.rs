use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use owc_cli::presets::{run_preset, PRESETS};
use owc_cli::{run_scenario, ConfigError, Scenario};

/// Link-level simulator for MIMO optical wireless backhaul with VCSEL and
/// photodetector arrays.
#[derive(Parser)]
#[command(name = "owcsim", version)]
struct Cli {
    /// Seed for Monte-Carlo runs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a JSON scenario file.
    Simulate {
        config: PathBuf,
        /// Output directory.
        #[arg(long, env = "OWCSIM_OUT", default_value = "out")]
        out: PathBuf,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run a built-in experiment.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
        #[arg(long, env = "OWCSIM_OUT", default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn set_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, out, threads } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let scenario = match Scenario::from_json(&text) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            if let Err(e) = set_threads(threads) {
                eprintln!("error: {e:#}");
                return ExitCode::from(1);
            }
            match run_scenario(&scenario, &out, cli.seed) {
                Ok(eval) => {
                    println!(
                        "aggregate rate {:.4e} bit/s ({} x {}); results in {}",
                        eval.rates.aggregate,
                        eval.channel.n_tx(),
                        eval.channel.n_rx(),
                        out.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) if e.is::<ConfigError>() => {
                    eprintln!("error: {}: {e}", config.display());
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Preset { name, out, threads } => {
            if let Err(e) = set_threads(threads) {
                eprintln!("error: {e:#}");
                return ExitCode::from(1);
            }
            match run_preset(&name, &out, cli.seed) {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
