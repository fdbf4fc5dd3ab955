use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use guirl::commands::{self, CliError, Common, Outcome, Thresholds};

#[derive(Parser)]
#[command(name = "guirl", version, about = "GUI-agent RL harness: simulator rollouts, rewards, GRPO and evaluation")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Extra TOML config layered over the built-in defaults (repeatable).
    #[arg(long, global = true)]
    config: Vec<PathBuf>,
    /// Override a config key, e.g. `--set stage3.window=5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parent directory for run directories.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out groups in the simulator and score them.
    Rollout {
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
        stage: u8,
        /// Task id prefixes; all tasks when omitted.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
        /// mock:oracle | mock:random[:T] | mock:mixture[:P] | mock:malformed | bridge:HOST:PORT
        #[arg(long, default_value = "mock:oracle")]
        policy: String,
    },
    /// Train the toy GUI bandit with GRPO and plot the learning curve.
    TrainSim,
    /// Compute benchmark metrics over stored trajectories.
    Eval {
        /// Run directory, trajectory root or trajectories `.jsonl`.
        path: PathBuf,
        #[arg(long, value_delimiter = ',')]
        passk: Vec<usize>,
        #[arg(long)]
        min_accuracy: Option<f64>,
        #[arg(long)]
        min_task_success: Option<f64>,
        #[arg(long)]
        min_tail_success: Option<f64>,
        #[arg(long)]
        max_avg_err: Option<usize>,
    },
    /// Lint an annotated dataset; exits 2 on any violation.
    ValidateDataset { path: PathBuf },
    /// Summary statistics of an annotated dataset.
    Stats { path: PathBuf },
    #[command(subcommand)]
    Export(Export),
    /// Write the built-in app suite, a synthetic dataset and seeded defects.
    Fixtures {
        #[arg(long, default_value_t = 70)]
        defects: usize,
    },
    /// Print the merged configuration.
    Config,
}

#[derive(Subcommand)]
enum Export {
    /// Flatten stored trajectories into one JSONL file.
    Trajectories { path: PathBuf },
    /// Build supervised prompt/target pairs from an annotated dataset.
    Sft {
        path: PathBuf,
        #[arg(long)]
        window: Option<usize>,
    },
}

fn run(cli: Cli, argv: Vec<String>) -> Result<Option<Outcome>, CliError> {
    let c = cli.common;
    let common = Common { config: c.config, set: c.set, seed: c.seed, out_dir: c.out_dir, argv };
    let outcome = match cli.command {
        Command::Rollout { stage, tasks, policy } => commands::rollout(&common, stage, &tasks, &policy)?,
        Command::TrainSim => commands::train_sim(&common)?,
        Command::Eval { path, passk, min_accuracy, min_task_success, min_tail_success, max_avg_err } => {
            let t = Thresholds { min_accuracy, min_task_success, min_tail_success, max_avg_err };
            commands::eval(&common, &path, &passk, t)?
        }
        Command::ValidateDataset { path } => commands::validate_dataset(&common, &path)?,
        Command::Stats { path } => commands::stats(&common, &path)?,
        Command::Export(Export::Trajectories { path }) => commands::export_trajectories(&common, &path)?,
        Command::Export(Export::Sft { path, window }) => commands::export_sft(&common, &path, window)?,
        Command::Fixtures { defects } => commands::fixtures(&common, defects)?,
        Command::Config => {
            let _ = write!(std::io::stdout(), "{}", common.load()?.to_toml());
            return Ok(None);
        }
    };
    Ok(Some(outcome))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli, argv[1..].to_vec()) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(outcome)) => {
            let mut out = std::io::stdout().lock();
            if !outcome.message.is_empty() {
                let _ = writeln!(out, "{}", outcome.message);
            }
            let _ = writeln!(out, "run directory: {}", outcome.run_dir.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
