mod alloc_count;
mod commands;
mod manifest;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[global_allocator]
static GLOBAL: alloc_count::CountingAlloc = alloc_count::CountingAlloc;

#[derive(Debug, Parser)]
#[command(name = "cosmos", version, about = "Data-driven odor plume encounter simulator")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Require an explicit seed and unchanged inputs relative to an existing manifest.
    #[arg(long, global = true)]
    pub strict_repro: bool,
    /// Output file (or directory for `track`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the onset field and bin whiff statistics from a template.
    Fit {
        #[arg(long)]
        template: PathBuf,
        /// Where to write the statistics grid (default: stats.json next to the model).
        #[arg(long)]
        stats_out: Option<PathBuf>,
    },
    /// Generate an odor trace along a trajectory.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        /// `t,x,y` CSV, streakline frame unless `--wind` is given.
        #[arg(long)]
        traj: PathBuf,
        /// `u,v` CSV aligned with the trajectory; the trajectory is then in
        /// world coordinates and is mapped with the configured source.
        #[arg(long)]
        wind: Option<PathBuf>,
    },
    /// Compare a simulated trace against a template.
    Validate {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Directory for per-statistic histogram images.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Run cast-and-surge agents against a model.
    Track {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        /// Agent TOML (same keys as the `[agent]` section).
        #[arg(long)]
        agent: Option<PathBuf>,
        #[arg(long, default_value_t = 150)]
        n: usize,
    },
    /// Measure generator throughput.
    Bench {
        #[arg(long, default_value_t = 1_000_000)]
        steps: usize,
        /// Defaults to the synthetic analytic field.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Write a synthetic template produced by the generator.
    MakeTemplate {
        #[arg(long)]
        amplitude: Option<f64>,
        #[arg(long)]
        sigma_y0: Option<f64>,
        #[arg(long)]
        d_y: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<cosmos::CosmosError>()
                .map_or("error", |c| c.kind());
            let line = serde_json::json!({
                "error": { "kind": kind, "message": format!("{e:#}") }
            });
            eprintln!("{line}");
            ExitCode::from(if kind == "config" { 2 } else { 1 })
        }
    }
}
