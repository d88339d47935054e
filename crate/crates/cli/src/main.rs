use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use optdiff::config::RawConfig;
use optdiff::experiment::{run_command, Command};
use optdiff::{verify, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(
    name = "optdiff",
    version,
    about = "Diffusion solvers for linear inverse problems with analytic priors"
)]
struct Cli {
    /// Experiment config (flat `key = value` lines). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run seed; replaces the config's `seeds` list.
    #[arg(long, global = true, env = "OPTDIFF_SEED")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Override a config entry, e.g. `--set sampler.steps=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Derive and print the noise schedule.
    Schedule,
    /// Reconstruct the benchmark problems.
    Solve,
    /// Grid search over the schedule tolerances with oracle weights.
    TuneSchedule,
    /// Grid search over step size and regularization weight.
    TuneSampler,
    /// Per-interval regularization sweeps for each weighting mode.
    SweepLambda,
    /// Tolerance against direct noise-level sweeps across setups.
    SweepSchedule,
    /// Optimizer and evaluation-budget ablation.
    Ablate,
    /// Run the randomized property suites.
    Verify {
        /// Cases in the boundary suites; the others scale from it.
        #[arg(long, default_value_t = 10_000)]
        cases: usize,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => String::new(),
    };
    let mut raw = RawConfig::parse(&text).map_err(|e| e.to_string())?;
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| format!("--set expects KEY=VALUE, got `{o}`"))?;
        raw.set(k.trim(), v.trim());
    }
    if let Some(s) = cli.seed {
        raw.set("seeds", &s.to_string());
    }
    ExperimentConfig::from_raw(raw).map_err(|e| e.to_string())
}

fn run(cli: &Cli) -> Result<String, String> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    let cmd = match cli.command {
        Cmd::Verify { cases } => {
            let seed = cli.seed.unwrap_or(0);
            let reports = verify::run_all(cases, seed).map_err(|e| e.to_string())?;
            let text: Vec<String> = reports.iter().map(|r| r.to_string()).collect();
            let text = text.join("\n");
            return if reports.iter().all(|r| r.passed()) {
                Ok(text)
            } else {
                Err(text)
            };
        }
        Cmd::Schedule => Command::Schedule,
        Cmd::Solve => Command::Solve,
        Cmd::TuneSchedule => Command::TuneSchedule,
        Cmd::TuneSampler => Command::TuneSampler,
        Cmd::SweepLambda => Command::SweepLambda,
        Cmd::SweepSchedule => Command::SweepSchedule,
        Cmd::Ablate => Command::Ablate,
    };
    let cfg = load_config(cli)?;
    run_command(cmd, &cfg, &cli.out).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(msg) => {
            println!("{}", msg.trim_end());
            ExitCode::SUCCESS
        }
        Err(msg) => {
            eprintln!("error: {}", msg.trim_end());
            ExitCode::FAILURE
        }
    }
}
