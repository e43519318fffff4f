use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use agbmap::config::RunConfig;
use agbmap::pipeline::files::{run_stage, Stage};
use clap::{Parser, Subcommand};

/// Aboveground biomass mapping from lidar and inventory plots.
#[derive(Parser, Debug)]
#[command(name = "agbmap", version)]
struct Cli {
    /// Run configuration (INI style). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads. Falls back to PAGB_THREADS, then to all cores.
    #[arg(long, global = true, env = "PAGB_THREADS")]
    threads: Option<usize>,
    /// Log stage progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate a synthetic scene, inventory, clouds and ancillary layers.
    Synth,
    /// Height-normalize the raw clouds against a ground model.
    Normalize,
    /// Rasterize lidar metrics per coverage.
    Metrics,
    /// Select model plots and build the plot-level dataset.
    Select,
    /// Tune and fit the stacked ensemble.
    Train,
    /// Fit the area of applicability and map it per coverage.
    Aoa,
    /// Predict, mosaic and mask the biomass map.
    Predict,
    /// Multi-scale accuracy assessment.
    Assess,
    /// Moran's I profiles of model and map residuals.
    Moran,
    /// Collate tables and stage manifests.
    Report,
    /// Run every stage in order.
    All,
}

impl Command {
    fn stages(self) -> Vec<Stage> {
        let one = match self {
            Command::Synth => Stage::Synth,
            Command::Normalize => Stage::Normalize,
            Command::Metrics => Stage::Metrics,
            Command::Select => Stage::Select,
            Command::Train => Stage::Train,
            Command::Aoa => Stage::Aoa,
            Command::Predict => Stage::Predict,
            Command::Assess => Stage::Assess,
            Command::Moran => Stage::Moran,
            Command::Report => Stage::Report,
            Command::All => return Stage::ALL.to_vec(),
        };
        vec![one]
    }
}

fn unix_seconds() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn log_line(out_dir: &Path, line: &str) {
    let _ = std::fs::create_dir_all(out_dir);
    if let Ok(mut f) = std::fs::OpenOptions::new().create(true).append(true).open(out_dir.join("run.log")) {
        let _ = writeln!(f, "{} {line}", unix_seconds());
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::defaults(&std::env::current_dir().unwrap_or_default())),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if e.is_validation() { 1 } else { 2 });
        }
    };
    let out_dir = cfg.paths.out_dir.clone();
    for stage in cli.command.stages() {
        let t0 = Instant::now();
        if cli.verbose {
            eprintln!("[{}] starting", stage.name());
        }
        log_line(&out_dir, &format!("{} start config={}", stage.name(), cfg.hash()));
        match run_stage(&cfg, stage) {
            Ok(dir) => {
                let secs = t0.elapsed().as_secs_f64();
                log_line(&out_dir, &format!("{} ok {secs:.2}s", stage.name()));
                if cli.verbose {
                    eprintln!("[{}] wrote {} in {secs:.2}s", stage.name(), dir.display());
                }
            }
            Err(e) => {
                log_line(&out_dir, &format!("{} failed: {e}", stage.name()));
                eprintln!("error: {}: {e}", stage.name());
                return ExitCode::from(if e.is_validation() { 1 } else { 2 });
            }
        }
    }
    ExitCode::SUCCESS
}
