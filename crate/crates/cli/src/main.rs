use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use p2pfl_cli::{cmd_bound, cmd_check_graph, cmd_run, load, OutputFormat, Overrides};

/// Peer-to-peer Bayesian federated learning simulator.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial and write per-round metrics plus summary.json.
    Run(Common),
    /// Print the sample-complexity bound as JSON.
    Bound(Common),
    /// Validate the weight matrix and print its spectral summary.
    CheckGraph(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    config: PathBuf,
    /// Overrides scenario.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides scenario.trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides output.format.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, cmd): (_, fn(&_) -> _) = match &cli.command {
        Command::Run(c) => (c, cmd_run),
        Command::Bound(c) => (c, cmd_bound),
        Command::CheckGraph(c) => (c, cmd_check_graph),
    };
    let overrides =
        Overrides { seed: common.seed, trials: common.trials, out: common.out.clone(), format: common.format };
    match load(&common.config, &overrides).and_then(|doc| cmd(&doc)) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("output serialises"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
