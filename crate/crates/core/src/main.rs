use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rowsim::config::{load_config, ExperimentConfig};
use rowsim::metrics::NavMode;
use rowsim::pipeline::{replay_metrics, run_mapping, run_pipeline};
use rowsim::Error;

#[derive(Parser)]
#[command(name = "rowsim", version, about = "Row-crop robot navigation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Map,
    Gps,
}

#[derive(clap::Args)]
struct Overrides {
    /// Master seed (overrides run.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides run.output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Navigation mode (overrides run.mode).
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment and write logs, reports and a plot.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score a planned-waypoint file against a recorded trajectory.
    Metrics {
        planned: PathBuf,
        trajectory: PathBuf,
        #[arg(long)]
        threshold: f64,
    },
    /// Run the mapping pass only and save the map.
    Map {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn configure(path: &Path, o: &Overrides) -> Result<ExperimentConfig, Error> {
    let mut cfg = load_config(path)?;
    if let Some(seed) = o.seed {
        cfg = cfg.seeded(seed);
    }
    if let Some(out) = &o.out {
        cfg.output_dir = out.clone();
    }
    if let Some(m) = o.mode {
        cfg.mode = match m {
            ModeArg::Map => NavMode::Map,
            ModeArg::Gps => NavMode::Gps,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = configure(&config, &overrides)?;
            let art = run_pipeline(&cfg)?;
            print!("{}", art.report.to_text());
            if let Some(iou) = art.map_iou {
                println!("map_iou = {iou}");
            }
            println!("output_dir = {}", art.dir.display());
            if let Some(reason) = &art.outcome.abort {
                eprintln!("mission aborted: {reason}");
            }
            Ok(art.outcome.completed)
        }
        Command::Metrics {
            planned,
            trajectory,
            threshold,
        } => {
            if !(threshold > 0.0) {
                return Err(Error::Config("--threshold must be positive".into()));
            }
            let report = replay_metrics(&planned, &trajectory, threshold)?;
            print!("{}", report.to_text());
            Ok(true)
        }
        Command::Map { config, overrides } => {
            let cfg = configure(&config, &overrides)?;
            let (path, iou) = run_mapping(&cfg)?;
            println!("map = {}", path.display());
            println!("map_iou = {iou}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
