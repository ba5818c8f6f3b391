mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "liftbid", version, about = "Value vs lift bidding: simulation, training and experiments")]
struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, env = "LIFTBID_OUT_DIR", default_value = "liftbid-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// TOML run configuration. Without it the defaults apply with seed 0.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a config leaf, e.g. `--set simulate.world.n_users=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the training market and write its event log.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train and calibrate the AR model on an event log.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Event log written by `simulate`.
        #[arg(long)]
        log: PathBuf,
        /// Also write the drawn training samples.
        #[arg(long)]
        export_samples: bool,
    },
    /// Check the value-vs-lift inequalities on random populations, or the
    /// two-user worked examples.
    Verify {
        #[arg(value_enum, default_value_t = VerifyTarget::Theorems)]
        target: VerifyTarget,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the three-group A/B protocol over several replications.
    Abtest {
        #[command(flatten)]
        config: ConfigArgs,
        /// Bid with a trained model instead of the ground truth.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Print the two-user worked examples.
    Examples,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum VerifyTarget {
    Theorems,
    Examples,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = output::OutDir::new(cli.out_dir);
    let result = match cli.command {
        Command::Simulate { config } => commands::simulate(&config, &mut out),
        Command::Train { config, log, export_samples } => commands::train(&config, &log, export_samples, &mut out),
        Command::Verify { target: VerifyTarget::Theorems, config } => commands::verify(&config, &mut out),
        Command::Verify { target: VerifyTarget::Examples, config } => commands::verify_examples(&config, &mut out),
        Command::Abtest { config, model } => commands::abtest(&config, model.as_deref(), &mut out),
        Command::Examples => commands::examples(),
    };
    match result {
        Ok(()) => {
            for p in &out.written {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("liftbid: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
