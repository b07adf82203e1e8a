use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use moment_nn_cli::commands::{self, Overrides};
use moment_nn_cli::config::RunConfig;
use moment_nn_cli::CliError;

#[derive(Parser)]
#[command(
    name = "mnn",
    version,
    about = "Moment neural networks: training, verification and uncertainty reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides `seed` from the config.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Overrides `out_dir` from the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the checkpoint, training log and entropy-vs-epoch table.
    Train(Common),
    /// Evaluate a checkpoint on the test split.
    Eval(Common),
    /// Check the moment activations against quadrature and Monte Carlo.
    VerifyMa(Common),
    /// Compare a checkpoint's moments against simulation of the stochastic network.
    VerifyNet(Common),
    /// Per-sample uncertainty and separability tables.
    UqReport {
        #[command(flatten)]
        common: Common,
        /// IDX image file of out-of-distribution inputs.
        #[arg(long, value_name = "PATH")]
        ood: Option<PathBuf>,
    },
    /// Accuracy and entropy under FGSM attacks of increasing strength.
    Attack {
        #[command(flatten)]
        common: Common,
        /// Zero the input and first-layer noise before attacking.
        #[arg(long)]
        defense: bool,
    },
    /// Simulate the stochastic network for one test input.
    Simulate(Common),
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&c.config)?;
    Overrides { seed: c.seed, out: c.out.clone() }.apply(&mut cfg);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Train(c) => commands::cmd_train(&load(&c)?),
        Command::Eval(c) => commands::cmd_eval(&load(&c)?),
        Command::VerifyMa(c) => commands::cmd_verify_ma(&load(&c)?),
        Command::VerifyNet(c) => commands::cmd_verify_net(&load(&c)?),
        Command::UqReport { common, ood } => commands::cmd_uq_report(&load(&common)?, ood.as_deref()),
        Command::Attack { common, defense } => commands::cmd_attack(&load(&common)?, defense),
        Command::Simulate(c) => commands::cmd_simulate(&load(&c)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
