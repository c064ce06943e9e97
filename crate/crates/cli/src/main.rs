use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use dreamlab_cli::manifest::seed_offset_from_env;
use dreamlab_cli::{analyze, lm_toy, markov_shift, temp_sweep, LoadedManifest, RunOptions};
use dreamlab_core::seqmetrics::CritTimeSpec;

#[derive(Parser)]
#[command(name = "dreamlab", version, about = "Vanilla vs Dreaming Learning experiments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory, overriding the manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Paired runs across one scripted Markov regime shift.
    MarkovShift { manifest: PathBuf },
    /// Temperature x entropy-pair sweep of paired runs; resumes partial output.
    TempSweep { manifest: PathBuf },
    /// Character or word language model on text files.
    LmToy { manifest: PathBuf },
    /// Recompute critical times and ratios from stored traces.
    Analyze {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Relative margin above the lower bound.
        #[arg(long)]
        crit_eps: Option<f64>,
        #[arg(long)]
        crit_window: Option<usize>,
        #[arg(long)]
        crit_sustain: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let opts = RunOptions { out: cli.out.clone(), jobs: cli.jobs, seed_offset: seed_offset_from_env()? };
    let experiment = |path: &PathBuf, f: fn(&LoadedManifest, &RunOptions) -> Result<PathBuf>| -> Result<()> {
        let loaded = LoadedManifest::load(path)?;
        let dir = f(&loaded, &opts)?;
        println!("{}", dir.display());
        Ok(())
    };
    match &cli.command {
        Command::MarkovShift { manifest } => experiment(manifest, markov_shift),
        Command::TempSweep { manifest } => experiment(manifest, temp_sweep),
        Command::LmToy { manifest } => experiment(manifest, lm_toy),
        Command::Analyze { dirs, crit_eps, crit_window, crit_sustain } => {
            let d = CritTimeSpec::default();
            let crit = CritTimeSpec {
                epsilon_rel: crit_eps.unwrap_or(d.epsilon_rel),
                smooth_window: crit_window.unwrap_or(d.smooth_window),
                sustain: crit_sustain.unwrap_or(d.sustain),
            };
            crit.validate()?;
            for (path, a) in analyze(dirs, &crit, cli.out.as_deref())? {
                println!("{}", path.display());
                for r in &a.ratio_points {
                    println!(
                        "  T_s={} mean_ratio={:.4} std={:.4} n_pairs={} excluded={}",
                        r.point.temperature, r.point.mean_ratio, r.point.std_ratio, r.point.n_pairs, r.point.n_excluded
                    );
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
