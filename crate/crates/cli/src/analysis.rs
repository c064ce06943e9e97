//! Run records on disk and the critical-time analysis built from them.
//!
//! Every trained run leaves `runs/<name>.json` plus its trace CSV. The analysis
//! reads only those files, so `dreamlab analyze` and the summary written at the
//! end of an experiment agree by construction.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dreamlab_core::dreamtrain::{Arm, LossTrace, PhaseCounters, RunResult, TrainConfig};
use dreamlab_core::seqmetrics::{bootstrap_mean_ci, ratio_point, t_crit, CritTimeSpec, PairCrit, RatioPoint};
use dreamlab_core::seqmodel::{ModelConfig, RecurrentModel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RUNS_DIR: &str = "runs";
pub const TRACES_DIR: &str = "traces";
pub const MODELS_DIR: &str = "models";
pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

#[derive(Debug, Error)]
#[error("no run records found under {0}")]
pub struct NoRunsFound(pub String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub arm: Arm,
    pub seed: u64,
    /// Sampling temperature of a dreaming run; vanilla runs have none.
    pub temperature: Option<f64>,
    /// Sweep cell for pairing vanilla and dreaming runs.
    pub pair: usize,
    /// Trace path relative to the experiment directory.
    pub trace_csv: PathBuf,
    /// Final model stem relative to the experiment directory; `.dlck` holds the
    /// parameters and `.json` the model config.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Standard-step index of each regime start after the first.
    pub change_points: Vec<usize>,
    /// Per-regime entropy rate; empty when the source is not a known chain.
    pub lower_bounds: Vec<f64>,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub counters: PhaseCounters,
    pub dream_kl_mean: Option<f64>,
    pub final_standard_loss: f64,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn new(name: String, arm: Arm, pair: usize, run: &RunResult) -> Self {
        let std = run.trace.standard_losses();
        let tail = &std[std.len().saturating_sub(50)..];
        Self {
            trace_csv: PathBuf::from(TRACES_DIR).join(format!("{name}.csv")),
            checkpoint: Some(PathBuf::from(MODELS_DIR).join(&name)),
            name,
            arm,
            seed: run.config.seed,
            temperature: (arm == Arm::Dreaming).then_some(run.config.sampling_temperature),
            pair,
            change_points: run.trace.change_points.clone(),
            lower_bounds: run.trace.lower_bounds.clone(),
            train: run.config.clone(),
            model: run.model_config.clone(),
            counters: run.counters,
            dream_kl_mean: (!run.dream_kl.is_empty()).then(|| run.dream_kl.iter().sum::<f64>() / run.dream_kl.len() as f64),
            final_standard_loss: tail.iter().sum::<f64>() / tail.len().max(1) as f64,
            wall_time_secs: run.wall_time_secs,
        }
    }

    /// Writes the checkpoint, the trace CSV and, last, the record JSON under `dir`.
    pub fn save(&self, dir: &Path, trace: &LossTrace, model: &RecurrentModel) -> Result<()> {
        fs::create_dir_all(dir.join(TRACES_DIR))?;
        fs::create_dir_all(dir.join(RUNS_DIR))?;
        if let Some(stem) = &self.checkpoint {
            fs::create_dir_all(dir.join(MODELS_DIR))?;
            model.save(&dir.join(stem)).with_context(|| format!("saving checkpoint {}", stem.display()))?;
        }
        let mut csv = Vec::new();
        trace.write_csv(&mut csv)?;
        write_atomic(&dir.join(&self.trace_csv), &csv)?;
        write_atomic(&dir.join(RUNS_DIR).join(format!("{}.json", self.name)), &serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load_trace(&self, dir: &Path) -> Result<LossTrace> {
        let path = dir.join(&self.trace_csv);
        let f = fs::File::open(&path).with_context(|| format!("opening trace {}", path.display()))?;
        LossTrace::read_csv(BufReader::new(f), self.change_points.clone(), self.lower_bounds.clone())
            .with_context(|| format!("reading trace {}", path.display()))
    }
}

/// Writes through a temporary file so an interrupted run never leaves a half file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Loads every run record in `dir/runs`, sorted by name.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let runs = dir.join(RUNS_DIR);
    let mut out = Vec::new();
    if runs.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(&runs)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            let bytes = fs::read(&p)?;
            out.push(serde_json::from_slice(&bytes).with_context(|| format!("corrupt run record {}", p.display()))?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunCrit {
    pub name: String,
    pub arm: Arm,
    pub seed: u64,
    pub temperature: Option<f64>,
    pub pair: usize,
    /// Critical time after each change point; `None` when never reached or no bound is known.
    pub t_crit: Vec<Option<usize>>,
    pub final_standard_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    #[serde(flatten)]
    pub point: RatioPoint,
    /// One-sided lower 95% bootstrap bound on the mean ratio.
    pub mean_ratio_lower95: f64,
    pub ratios: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub crit: CritTimeSpec,
    pub runs: Vec<RunCrit>,
    pub ratio_points: Vec<RatioSummary>,
    /// Temperatures with no pair reaching its bound in both arms.
    pub no_valid_pairs: Vec<f64>,
}

/// Critical time after each change point of `trace`.
pub fn trace_crit(trace: &LossTrace, crit: &CritTimeSpec) -> Vec<Option<usize>> {
    let std = trace.standard_losses();
    trace
        .change_points
        .iter()
        .enumerate()
        .map(|(k, &cp)| {
            let bound = trace.lower_bounds.get(k + 1)?;
            t_crit(std.get(cp..)?, *bound, crit).ok()
        })
        .collect()
}

/// Recomputes critical times of every record and pairs them into ratio points.
///
/// A dreaming run is paired with the vanilla run of the same seed and cell;
/// ratios use the first change point.
pub fn analyze_records(dir: &Path, records: &[RunRecord], crit: &CritTimeSpec) -> Result<Analysis> {
    let mut runs = Vec::with_capacity(records.len());
    for r in records {
        let trace = r.load_trace(dir)?;
        runs.push(RunCrit {
            name: r.name.clone(),
            arm: r.arm,
            seed: r.seed,
            temperature: r.temperature,
            pair: r.pair,
            t_crit: trace_crit(&trace, crit),
            final_standard_loss: r.final_standard_loss,
        });
    }
    runs.sort_by(|a, b| a.name.cmp(&b.name));

    let vanilla: BTreeMap<(usize, u64), Option<usize>> = runs
        .iter()
        .filter(|r| r.arm == Arm::Vanilla)
        .map(|r| ((r.pair, r.seed), r.t_crit.first().copied().flatten()))
        .collect();
    let mut by_temp: BTreeMap<u64, (f64, Vec<PairCrit>)> = BTreeMap::new();
    let mut dreaming: Vec<&RunCrit> = runs.iter().filter(|r| r.arm == Arm::Dreaming).collect();
    dreaming.sort_by_key(|r| (r.pair, r.seed));
    for d in dreaming {
        let (Some(t), Some(v)) = (d.temperature, vanilla.get(&(d.pair, d.seed))) else { continue };
        by_temp
            .entry(t.to_bits())
            .or_insert_with(|| (t, Vec::new()))
            .1
            .push(PairCrit { vanilla: *v, dreaming: d.t_crit.first().copied().flatten() });
    }
    let mut cells: Vec<(f64, Vec<PairCrit>)> = by_temp.into_values().collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut ratio_points = Vec::new();
    let mut no_valid_pairs = Vec::new();
    for (t, pairs) in &cells {
        match ratio_point(*t, pairs) {
            Ok(point) => {
                let ratios: Vec<f64> = pairs.iter().filter_map(PairCrit::ratio).collect();
                let (lower, _) = bootstrap_mean_ci(&ratios, 0.10, BOOTSTRAP_RESAMPLES, t.to_bits());
                ratio_points.push(RatioSummary { point, mean_ratio_lower95: lower, ratios });
            }
            Err(_) => no_valid_pairs.push(*t),
        }
    }
    Ok(Analysis { crit: *crit, runs, ratio_points, no_valid_pairs })
}

/// Loads and analyzes one experiment directory.
pub fn analyze_dir(dir: &Path, crit: &CritTimeSpec) -> Result<Analysis> {
    let records = load_records(dir)?;
    if records.is_empty() {
        return Err(NoRunsFound(dir.display().to_string()).into());
    }
    analyze_records(dir, &records, crit)
}
