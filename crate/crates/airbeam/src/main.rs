use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use airbeam::{load_config, render_csv, run_experiment_with, write_csv, ExperimentKind};

#[derive(Parser)]
#[command(name = "airbeam", version, about = "Active-RIS over-the-air beamforming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sum-rate of zero-forcing precoding over the direct links
    SumrateZf(RunArgs),
    /// Sum-rate of max-min over-the-air beamforming at the RIS
    SumrateOta(RunArgs),
    /// BER of receive index modulation (greedy and joint ML detection)
    BerIm(RunArgs),
    /// BER of zero-forcing precoded receive spatial modulation
    BerRsm(RunArgs),
    /// Check a config file without running anything
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment file
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding `mc.seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per sweep point, overriding `mc.trials`
    #[arg(long)]
    trials: Option<usize>,
    /// CSV destination; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism
    #[arg(long)]
    workers: Option<usize>,
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<(), String> {
    let mut spec = load_config(&args.config).map_err(|e| e.to_string())?;
    if spec.kind != kind {
        return Err(format!(
            "{} declares experiment.kind = {}, but the subcommand is {kind}",
            args.config.display(),
            spec.kind
        ));
    }
    if let Some(seed) = args.seed {
        spec.base.seed = seed;
    }
    if let Some(trials) = args.trials {
        if trials == 0 {
            return Err("--trials must be at least 1".to_string());
        }
        spec.base.trials = trials;
    }
    let workers = match args.workers {
        Some(0) => return Err("--workers must be at least 1".to_string()),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    eprintln!(
        "run experiment={kind} sweep={} points={} trials={} seed={} workers={workers}",
        spec.sweep.variable.name(),
        spec.sweep.values.len(),
        spec.base.trials,
        spec.base.seed
    );
    let rows = run_experiment_with(&spec, workers, |p| eprintln!("{p}")).map_err(|e| e.to_string())?;
    match &args.out {
        Some(path) => write_csv(&rows, path).map_err(|e| e.to_string()),
        None => std::io::stdout()
            .write_all(render_csv(&rows).as_bytes())
            .map_err(|e| format!("cannot write standard output: {e}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SumrateZf(a) => run(ExperimentKind::SumrateZf, a),
        Command::SumrateOta(a) => run(ExperimentKind::SumrateOta, a),
        Command::BerIm(a) => run(ExperimentKind::BerIm, a),
        Command::BerRsm(a) => run(ExperimentKind::BerRsm, a),
        Command::Validate { config } => load_config(&config).map(|spec| {
            eprintln!(
                "ok: {} over {} ({} points)",
                spec.kind,
                spec.sweep.variable.name(),
                spec.sweep.values.len()
            );
        }).map_err(|e| e.to_string()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
