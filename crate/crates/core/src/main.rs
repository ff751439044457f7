use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stdloc::cli::dispatch;
use stdloc::config::{parse_config, Experiment, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "stdloc", version, about = "Standardized source localization experiments in a disk model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Far-field source reconstructed with BMNE and sLORETA.
    Demo(Common),
    /// Two-source tracking with KF, SKF and sLORETA.
    Track(Common),
    /// Monte-Carlo hit-rate and bound maps.
    Hitmap(Common),
    /// Hit rate and bound versus noise level at fixed depths.
    SnrSweep(Common),
    /// Localization bound for a single node.
    Bound(Common),
    /// Geometry and system matrices as JSON.
    ForwardDump(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; results go to <out>/<experiment>/.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Monte-Carlo samples per node.
    #[arg(long)]
    samples: Option<usize>,
    /// Noise level in percent of the signal RMS.
    #[arg(long)]
    noise: Option<f64>,
    /// Replace existing output files.
    #[arg(long)]
    overwrite: bool,
    /// Node position as `x,y` for the bound command.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    node_at: Option<[f64; 2]>,
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected `x,y`, got `{s}`"));
    }
    let x = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let y = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok([x, y])
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STDLOC_LOG", "error")).init();
    let cli = Cli::parse();
    let (experiment, common) = match cli.command {
        Command::Demo(c) => (Experiment::Demo, c),
        Command::Track(c) => (Experiment::Track, c),
        Command::Hitmap(c) => (Experiment::Hitmap, c),
        Command::SnrSweep(c) => (Experiment::SnrSweep, c),
        Command::Bound(c) => (Experiment::Bound, c),
        Command::ForwardDump(c) => (Experiment::ForwardDump, c),
    };
    let overrides = Overrides {
        experiment: Some(experiment),
        seed: common.seed,
        output_dir: common.out,
        workers: common.workers,
        samples: common.samples,
        noise_percent: common.noise,
        overwrite: common.overwrite,
        node_at: common.node_at,
    };
    let result = common
        .config
        .as_deref()
        .map_or_else(|| Ok(RunConfig::default()), parse_config)
        .and_then(|c| c.apply(&overrides))
        .and_then(|c| dispatch(&c));
    match result {
        Ok(outcome) => {
            if let Some(text) = outcome.stdout {
                println!("{text}");
            }
            log::info!("wrote {} files to {}", outcome.files.len(), outcome.directory.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
