//! `freqsweep`: run frequency-sweep experiments from a config file.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use freqsweep_core::experiment::{
    replot, run_capacity_sweep, run_census, run_matched_pair_experiment, run_sweep,
    ExperimentConfig, Mode, Profile, SweepResult,
};

#[derive(Parser)]
#[command(name = "freqsweep", version, about = "Temporal sampling frequency sweeps for a toy BEV trajectory predictor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every (frequency, width, seed) of the grid.
    Sweep(Common),
    /// Sweep every width and report the best frequency per width.
    CapacitySweep(Common),
    /// Iteration-matched low/high frequency comparison.
    MatchedPair(Common),
    /// Count valid training anchors per grid frequency.
    Census(Common),
    /// Redraw response.svg from an existing aggregate.csv.
    Plot {
        /// Directory holding aggregate.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML or JSON overlay applied on top of the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "desk")]
    profile: Profile,
    /// Suppress per-run progress on stderr.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        if let Some(n) = self.threads {
            anyhow::ensure!(n > 0, "--threads must be at least 1");
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the worker pool")?;
        }
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path, self.profile)?,
            None => ExperimentConfig::profile(self.profile),
        };
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }

    fn log(&self) -> impl Fn(&str) + Sync {
        let quiet = self.quiet;
        move |line: &str| {
            if !quiet {
                eprintln!("{line}");
            }
        }
    }
}

fn summarize(result: &SweepResult, config: &ExperimentConfig) {
    println!(
        "{} completed runs, {} excluded; results in {}",
        result.raw_rows(false).len(),
        result.excluded_rows().len(),
        config.output_dir.display()
    );
    for (width, best) in result.best() {
        println!("W={width}: f* = {} Hz (mean ADE {:.4} m)", best.f_star, best.ade_mean);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep(common) => {
            let mut config = common.load()?;
            config.mode = Mode::Sweep;
            let result = run_sweep(&config, &common.log())?;
            summarize(&result, &config);
        }
        Command::CapacitySweep(common) => {
            let mut config = common.load()?;
            config.mode = Mode::CapacitySweep;
            anyhow::ensure!(config.widths.len() >= 2, "capacity-sweep needs at least two widths");
            let result = run_capacity_sweep(&config, &common.log())?;
            summarize(&result, &config);
        }
        Command::MatchedPair(common) => {
            let mut config = common.load()?;
            config.mode = Mode::MatchedPair;
            let rows = run_matched_pair_experiment(&config, &common.log())?;
            for r in rows {
                println!(
                    "W={} seed={}: {} ADE {:.4} FDE {:.4} | {} ADE {:.4} FDE {:.4} | {}",
                    r.width, r.seed, r.low_config, r.low_ade_m, r.low_fde_m, r.high_config,
                    r.high_ade_m, r.high_fde_m, r.delta_ade
                );
            }
        }
        Command::Census(common) => {
            let config = common.load()?;
            for r in run_census(&config)? {
                println!("{} Hz: {} samples", r.frequency_hz, r.sample_count);
            }
        }
        Command::Plot { out } => {
            let path = replot(&out)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// Error chain joined with `: `, skipping causes the outer message already shows.
fn diagnostic(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let line = cause.to_string();
        if !text.contains(&line) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&line);
        }
    }
    text
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("freqsweep: error: {}", diagnostic(&e));
            ExitCode::FAILURE
        }
    }
}
