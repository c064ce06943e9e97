//! The four experiment commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dreamlab_core::corpus::{build_corpus, train_val_split, write_cache};
use dreamlab_core::dreamtrain::{
    evaluate_loss, paired_experiment, seeded_configs, seeded_corpus, train_run, train_run_from, Arm, LossTrace,
    RunObserver, TrainConfig, TrainCorpus, TrainError,
};
use dreamlab_core::rng;
use dreamlab_core::seqmetrics::{
    bootstrap_mean_ci, heaps_exponent, mean_std, relative_gap_closure, token_hurst, CritTimeSpec, ExponentEstimate,
    TokenMapping,
};
use dreamlab_core::seqmodel::{ModelConfig, RecurrentModel};
use dreamlab_core::TokenSequence;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{analyze_dir, analyze_records, write_atomic, Analysis, RunRecord};
use crate::manifest::{effective_seeds, Experiment, LoadedManifest, SweepGrid};
use crate::svg::{Chart, Series, BLUE, ORANGE};

pub const VERSION_STAMP: &str = concat!("dreamlab ", env!("CARGO_PKG_VERSION"), " (", env!("DREAMLAB_GIT_DESCRIBE"), ")");

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    pub seed_offset: u64,
}

/// Runs `f` on a pool of `jobs` threads.
pub fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            bail!("--jobs must be >= 1");
        }
        b = b.num_threads(n);
    }
    Ok(b.build()?.install(f))
}

/// Creates the output directory with the manifest copy, its hash, the tool
/// version and the effective seeds.
fn prepare_dir(loaded: &LoadedManifest, opts: &RunOptions) -> Result<(PathBuf, Vec<u64>)> {
    let dir = loaded.output_dir(opts.out.as_deref());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let seeds = effective_seeds(&loaded.manifest.seeds, opts.seed_offset);
    fs::write(dir.join("manifest.json"), &loaded.raw)?;
    fs::write(dir.join("manifest.sha256"), format!("{}\n", loaded.hash_hex()))?;
    fs::write(dir.join("VERSION"), format!("{VERSION_STAMP}\n"))?;
    fs::write(dir.join("seeds.json"), serde_json::to_vec_pretty(&json!({"seed_offset": opts.seed_offset, "seeds": seeds}))?)?;
    Ok((dir, seeds))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Per-step mean and standard deviation across traces, truncated to the shortest.
fn mean_band(series: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let n = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..n)
        .map(|i| {
            let col: Vec<f64> = series.iter().map(|s| s[i]).collect();
            mean_std(&col)
        })
        .collect()
}

fn band_series(label: &str, color: &'static str, band: &[(f64, f64)], xs: &[f64]) -> Series {
    Series {
        label: label.to_string(),
        color,
        points: xs.iter().zip(band).map(|(&x, &(m, _))| (x, m)).collect(),
        band: xs.iter().zip(band).map(|(&x, &(m, s))| (x, m - s, m + s)).collect(),
    }
}

/// `step,vanilla_mean,vanilla_std,dreaming_mean,dreaming_std`.
fn aggregate_csv(xs: &[f64], vanilla: &[(f64, f64)], dreaming: &[(f64, f64)]) -> String {
    let mut out = String::from("step,vanilla_mean,vanilla_std,dreaming_mean,dreaming_std\n");
    for (i, x) in xs.iter().enumerate() {
        let cell = |b: &[(f64, f64)]| b.get(i).map_or((String::new(), String::new()), |(m, s)| (m.to_string(), s.to_string()));
        let (vm, vs) = cell(vanilla);
        let (dm, ds) = cell(dreaming);
        out.push_str(&format!("{x},{vm},{vs},{dm},{ds}\n"));
    }
    out
}

fn loss_chart(title: &str, y_label: &str, xs: &[f64], vanilla: &[(f64, f64)], dreaming: &[(f64, f64)], markers: Vec<f64>, levels: Vec<f64>) -> String {
    let mut series = vec![band_series("vanilla", BLUE, vanilla, xs)];
    if !dreaming.is_empty() {
        series.push(band_series("dreaming", ORANGE, dreaming, xs));
    }
    Chart { title: title.into(), x_label: "standard step".into(), y_label: y_label.into(), series, markers, levels }.render()
}

fn run_name(arm: Arm, seed: u64, temperature: Option<f64>, pair: Option<usize>) -> String {
    let mut s = String::new();
    if let Some(t) = temperature {
        s.push_str(&format!("t{t}-"));
    }
    if let Some(p) = pair {
        s.push_str(&format!("p{p}-"));
    }
    format!("{s}seed-{seed}-{}", arm.as_str())
}

#[derive(Serialize)]
struct Summary<'a> {
    kind: &'a str,
    version: &'a str,
    manifest_sha256: String,
    seeds: &'a [u64],
    #[serde(flatten)]
    analysis: &'a Analysis,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
}

/// Paired vanilla/dreaming runs on one regime script.
pub fn markov_shift(loaded: &LoadedManifest, opts: &RunOptions) -> Result<PathBuf> {
    let m = &loaded.manifest;
    let Experiment::MarkovShift { script } = &m.experiment else { bail!("manifest kind is {}, not markov-shift", m.experiment.kind()) };
    let (dir, seeds) = prepare_dir(loaded, opts)?;
    let model = m.model.config(script.segments[0].spec.n_states);
    let pairs = with_pool(opts.jobs, || paired_experiment(&m.train, &model, script, &seeds))??;

    let mut records = Vec::new();
    let mut entropy = Vec::new();
    for p in &pairs {
        for (arm, run) in [(Arm::Vanilla, &p.vanilla), (Arm::Dreaming, &p.dreaming)] {
            let rec = RunRecord::new(run_name(arm, p.seed, None, None), arm, 0, run);
            rec.save(&dir, &run.trace, &run.model)?;
            records.push(rec);
        }
        entropy.push(json!({
            "seed": p.seed,
            "entropy_rates": p.segments.iter().map(|s| s.entropy_rate).collect::<Vec<_>>(),
            "normalized_entropy_rates": p.segments.iter().map(|s| s.normalized_entropy_rate).collect::<Vec<_>>(),
        }));
    }

    let v: Vec<Vec<f64>> = pairs.iter().map(|p| p.vanilla.trace.standard_losses()).collect();
    let d: Vec<Vec<f64>> = pairs.iter().map(|p| p.dreaming.trace.standard_losses()).collect();
    let (vb, db) = (mean_band(&v), mean_band(&d));
    let xs: Vec<f64> = (0..vb.len()).map(|i| i as f64).collect();
    fs::write(dir.join("aggregate.csv"), aggregate_csv(&xs, &vb, &db))?;
    let trace0 = &pairs[0].vanilla.trace;
    let mean_bounds: Vec<f64> = (0..script.segments.len())
        .map(|k| pairs.iter().map(|p| p.segments[k].entropy_rate).sum::<f64>() / pairs.len() as f64)
        .collect();
    let title = format!("mean standard loss over {} seeds, T_s = {}", seeds.len(), m.train.sampling_temperature);
    let markers = trace0.change_points.iter().map(|&c| c as f64).collect();
    fs::write(dir.join("loss.svg"), loss_chart(&title, "loss (nats/token)", &xs, &vb, &db, markers, mean_bounds))?;

    let analysis = analyze_records(&dir, &records, &m.crit)?;
    let summary = Summary {
        kind: "markov-shift",
        version: VERSION_STAMP,
        manifest_sha256: loaded.hash_hex(),
        seeds: &seeds,
        analysis: &analysis,
        extra: Some(json!({ "segments": entropy })),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(dir)
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct SweepJob {
    arm: Arm,
    temperature: Option<f64>,
    pair: usize,
    seed: u64,
}

impl SweepJob {
    fn name(&self) -> String {
        run_name(self.arm, self.seed, self.temperature, Some(self.pair))
    }
}

fn sweep_job(dir: &Path, grid: &SweepGrid, train: &TrainConfig, model: &ModelConfig, job: SweepJob) -> Result<()> {
    let script = grid.script(job.pair);
    let (cfg, mcfg, scr) = seeded_configs(train, model, &script, job.seed);
    let (corpus, _) = seeded_corpus(&scr, job.seed)?;
    let cfg = TrainConfig {
        dream_enabled: job.arm == Arm::Dreaming,
        sampling_temperature: job.temperature.unwrap_or(cfg.sampling_temperature),
        ..cfg
    };
    let run = train_run(&cfg, &mcfg, &corpus)?;
    RunRecord::new(job.name(), job.arm, job.pair, &run).save(dir, &run.trace, &run.model)
}

fn cell_marker(dir: &Path, t: f64, pair: usize) -> PathBuf {
    dir.join("cells").join(format!("t{t}-p{pair}.done"))
}

/// Full temperature x entropy-pair x seed grid of paired runs, resumable.
///
/// Vanilla runs do not depend on the temperature, so each `(pair, seed)`
/// vanilla run is trained once and shared by every temperature.
pub fn temp_sweep(loaded: &LoadedManifest, opts: &RunOptions) -> Result<PathBuf> {
    let m = &loaded.manifest;
    let Experiment::TempSweep { grid } = &m.experiment else { bail!("manifest kind is {}, not temp-sweep", m.experiment.kind()) };
    let (dir, seeds) = prepare_dir(loaded, opts)?;
    fs::create_dir_all(dir.join("cells"))?;
    let model = m.model.config(grid.n_states);

    let mut jobs = Vec::new();
    for pair in 0..grid.entropy_pairs.len() {
        for &seed in &seeds {
            jobs.push(SweepJob { arm: Arm::Vanilla, temperature: None, pair, seed });
        }
    }
    for &t in &grid.temperatures {
        for pair in 0..grid.entropy_pairs.len() {
            if cell_marker(&dir, t, pair).exists() {
                continue;
            }
            for &seed in &seeds {
                jobs.push(SweepJob { arm: Arm::Dreaming, temperature: Some(t), pair, seed });
            }
        }
    }
    let done = |j: &SweepJob| dir.join("runs").join(format!("{}.json", j.name())).exists();
    let pending: Vec<SweepJob> = jobs.into_iter().filter(|j| !done(j)).collect();
    let results: Vec<(SweepJob, Result<()>)> =
        with_pool(opts.jobs, || pending.par_iter().map(|&j| (j, sweep_job(&dir, grid, &m.train, &model, j))).collect())?;

    let failed: Vec<serde_json::Value> = results
        .iter()
        .filter_map(|(j, r)| r.as_ref().err().map(|e| json!({"run": j.name(), "temperature": j.temperature, "pair": j.pair, "seed": j.seed, "error": format!("{e:#}")})))
        .collect();
    for &t in &grid.temperatures {
        for pair in 0..grid.entropy_pairs.len() {
            let complete = seeds.iter().all(|&seed| {
                done(&SweepJob { arm: Arm::Dreaming, temperature: Some(t), pair, seed })
                    && done(&SweepJob { arm: Arm::Vanilla, temperature: None, pair, seed })
            });
            if complete {
                fs::write(cell_marker(&dir, t, pair), "")?;
            }
        }
    }

    let analysis = analyze_dir(&dir, &m.crit)?;
    let mut csv = String::from("temperature,mean_ratio,std_ratio,n_pairs,n_excluded,mean_ratio_lower95\n");
    for r in &analysis.ratio_points {
        let p = &r.point;
        csv.push_str(&format!("{},{},{},{},{},{}\n", p.temperature, p.mean_ratio, p.std_ratio, p.n_pairs, p.n_excluded, r.mean_ratio_lower95));
    }
    fs::write(dir.join("ratio_points.csv"), csv)?;
    let summary = Summary {
        kind: "temp-sweep",
        version: VERSION_STAMP,
        manifest_sha256: loaded.hash_hex(),
        seeds: &seeds,
        analysis: &analysis,
        extra: Some(json!({ "failed": failed })),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("ratio_points.json"), &analysis.ratio_points)?;
    let pts: Vec<(f64, f64)> = analysis.ratio_points.iter().map(|r| (r.point.temperature, r.point.mean_ratio)).collect();
    let band = analysis.ratio_points.iter().map(|r| (r.point.temperature, r.point.mean_ratio - r.point.std_ratio, r.point.mean_ratio + r.point.std_ratio)).collect();
    let chart = Chart {
        title: "mean t_crit ratio, vanilla / dreaming".into(),
        x_label: "sampling temperature T_s".into(),
        y_label: "ratio".into(),
        series: vec![Series { label: "mean ratio".into(), color: ORANGE, points: pts, band }],
        markers: vec![],
        levels: vec![1.0],
    };
    fs::write(dir.join("ratio.svg"), chart.render())?;

    if !failed.is_empty() {
        write_json(&dir.join("failures.json"), &failed)?;
        bail!("{} sweep runs failed; see {}", failed.len(), dir.join("failures.json").display());
    }
    Ok(dir)
}

/// Records validation loss every `every` standard steps.
struct Validator<'a> {
    val: &'a [usize],
    bptt_len: usize,
    windows: usize,
    every: usize,
    last_step: usize,
    points: Vec<(usize, f64)>,
}

impl RunObserver for Validator<'_> {
    fn after_standard_step(&mut self, step: usize, model: &RecurrentModel) -> Result<(), TrainError> {
        if (step + 1) % self.every == 0 || step == self.last_step {
            self.points.push((step + 1, evaluate_loss(model, self.val, self.bptt_len, self.windows)?));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArmReport {
    pub final_val_loss: Vec<f64>,
    pub final_val_mean: f64,
    pub final_val_std: f64,
    pub hurst: Vec<Option<ExponentEstimate>>,
    pub heaps: Vec<Option<ExponentEstimate>>,
    pub hurst_mean: Option<f64>,
    pub heaps_mean: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LmReport {
    pub kind: String,
    pub version: String,
    pub manifest_sha256: String,
    pub seeds: Vec<u64>,
    pub vocab_size: usize,
    pub train_tokens: usize,
    pub validation_tokens: usize,
    /// Training-step index at which each book after the first begins.
    pub book_starts: Vec<usize>,
    pub token_mapping: TokenMapping,
    pub corpus_hurst: Option<ExponentEstimate>,
    pub corpus_heaps: Option<ExponentEstimate>,
    pub arms: BTreeMap<String, ArmReport>,
    /// Per-seed `vanilla - dreaming` final validation loss.
    pub val_loss_gap: Vec<f64>,
    /// 90% two-sided bootstrap interval on the mean gap; its lower end is the
    /// one-sided 95% bound.
    pub val_loss_gap_ci90: Option<(f64, f64)>,
    /// Share of the vanilla-to-corpus Hurst gap closed by dreaming.
    pub hurst_gap_closure: Option<f64>,
    pub comparison: String,
}

fn exponent_or_none(r: Result<ExponentEstimate, dreamlab_core::seqmetrics::MetricsError>) -> Option<ExponentEstimate> {
    r.ok()
}

fn mean_of(xs: &[Option<ExponentEstimate>]) -> Option<f64> {
    let v: Vec<f64> = xs.iter().flatten().map(|e| e.exponent).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Toy language model: paired training on text with held-out validation and
/// exponent report on generated samples.
pub fn lm_toy(loaded: &LoadedManifest, opts: &RunOptions) -> Result<PathBuf> {
    let m = &loaded.manifest;
    let Experiment::LmToy(spec) = &m.experiment else { bail!("manifest kind is {}, not lm-toy", m.experiment.kind()) };
    let (dir, seeds) = prepare_dir(loaded, opts)?;
    let corpus = build_corpus(&spec.corpus.rebased(&loaded.base_dir()))?;
    fs::write(dir.join("vocab.json"), corpus.vocab.to_json())?;
    write_cache(&corpus, fs::File::create(dir.join("corpus.dlcp"))?)?;
    let split = train_val_split(&corpus.sequence, &corpus.change_points, &spec.holdout)?;
    if let Some(w) = &split.warning {
        eprintln!("warning: {w}");
    }
    let val_tokens: Vec<usize> = if split.validation.is_empty() { split.train.tokens().to_vec() } else { split.validation.tokens().to_vec() };
    let train_corpus = TrainCorpus { sequence: split.train.clone(), change_points: split.train_change_points.clone(), lower_bounds: vec![] };
    let model_cfg = m.model.config(corpus.vocab.len());

    let mut arms = vec![Arm::Vanilla];
    if m.train.dream_enabled {
        arms.push(Arm::Dreaming);
    }
    let jobs: Vec<(u64, Arm)> = seeds.iter().flat_map(|&s| arms.iter().map(move |&a| (s, a))).collect();
    struct Done {
        arm: Arm,
        trace: LossTrace,
        val: Vec<(usize, f64)>,
        hurst: Option<ExponentEstimate>,
        heaps: Option<ExponentEstimate>,
        record: RunRecord,
        model: RecurrentModel,
    }
    let run_one = |seed: u64, arm: Arm| -> Result<Done> {
        let cfg = TrainConfig { seed, dream_enabled: arm == Arm::Dreaming, ..m.train.clone() };
        let mcfg = ModelConfig { seed: rng::derive_seed(seed, rng::stream::MODEL_INIT), ..model_cfg.clone() };
        let mut validator = Validator { val: &val_tokens, bptt_len: cfg.bptt_len, windows: spec.val_windows, every: spec.val_every, last_step: cfg.max_steps - 1, points: vec![] };
        let run = train_run_from(&cfg, RecurrentModel::new(mcfg)?, &train_corpus, &mut validator)?;
        let context = TokenSequence::new(val_tokens[..1].to_vec(), corpus.vocab.len())?;
        let sample = run.model.generate(&context, spec.generate_len, spec.generate_temperature, &mut rng::derived(seed, rng::stream::GENERATE))?;
        let name = run_name(arm, seed, None, None);
        let record = RunRecord::new(name, arm, 0, &run);
        Ok(Done {
            arm,
            hurst: exponent_or_none(token_hurst(&sample.tokens, spec.token_mapping)),
            heaps: exponent_or_none(heaps_exponent(&sample.tokens)),
            val: validator.points,
            trace: run.trace,
            model: run.model,
            record,
        })
    };
    let done: Vec<Done> = with_pool(opts.jobs, || jobs.par_iter().map(|&(s, a)| run_one(s, a)).collect::<Result<Vec<_>>>())??;

    fs::create_dir_all(dir.join("val"))?;
    for d in &done {
        d.record.save(&dir, &d.trace, &d.model)?;
        let mut csv = String::from("step,val_loss\n");
        for (s, l) in &d.val {
            csv.push_str(&format!("{s},{l}\n"));
        }
        fs::write(dir.join("val").join(format!("{}.csv", d.record.name)), csv)?;
    }

    let pick = |arm: Arm| done.iter().filter(move |d| d.arm == arm);
    let val_band = |arm: Arm| mean_band(&pick(arm).map(|d| d.val.iter().map(|p| p.1).collect()).collect::<Vec<_>>());
    let train_band = |arm: Arm| mean_band(&pick(arm).map(|d| d.trace.standard_losses()).collect::<Vec<_>>());
    let val_x: Vec<f64> = done[0].val.iter().map(|p| p.0 as f64).collect();
    let (vv, dv) = (val_band(Arm::Vanilla), val_band(Arm::Dreaming));
    let (vt, dt) = (train_band(Arm::Vanilla), train_band(Arm::Dreaming));
    let train_x: Vec<f64> = (0..vt.len()).map(|i| i as f64).collect();
    fs::write(dir.join("val_loss.csv"), aggregate_csv(&val_x, &vv, &dv))?;
    fs::write(dir.join("train_loss.csv"), aggregate_csv(&train_x, &vt, &dt))?;
    let book_starts = done[0].trace.change_points.clone();
    let markers: Vec<f64> = book_starts.iter().map(|&c| c as f64).collect();
    fs::write(dir.join("train_loss.svg"), loss_chart("training loss", "loss (nats/token)", &train_x, &vt, &dt, markers.clone(), vec![]))?;
    fs::write(dir.join("val_loss.svg"), loss_chart("validation loss", "loss (nats/token)", &val_x, &vv, &dv, markers, vec![]))?;

    let mut arm_reports = BTreeMap::new();
    for &arm in &arms {
        let finals: Vec<f64> = pick(arm).map(|d| d.val.last().map_or(f64::NAN, |p| p.1)).collect();
        let (mean, std) = mean_std(&finals);
        let hurst: Vec<_> = pick(arm).map(|d| d.hurst.clone()).collect();
        let heaps: Vec<_> = pick(arm).map(|d| d.heaps.clone()).collect();
        arm_reports.insert(
            arm.as_str().to_string(),
            ArmReport { final_val_loss: finals, final_val_mean: mean, final_val_std: std, hurst_mean: mean_of(&hurst), heaps_mean: mean_of(&heaps), hurst, heaps },
        );
    }
    let corpus_hurst = exponent_or_none(token_hurst(&split.train, spec.token_mapping));
    let corpus_heaps = exponent_or_none(heaps_exponent(&split.train));
    let (gap, ci, closure, comparison) = match (arm_reports.get("vanilla"), arm_reports.get("dreaming")) {
        (Some(v), Some(d)) => {
            let gap: Vec<f64> = v.final_val_loss.iter().zip(&d.final_val_loss).map(|(a, b)| a - b).collect();
            let ci = bootstrap_mean_ci(&gap, 0.10, 10_000, 0);
            let closure = match (v.hurst_mean, d.hurst_mean, &corpus_hurst) {
                (Some(hv), Some(hd), Some(hc)) => Some(relative_gap_closure(hv, hd, hc.exponent)),
                _ => None,
            };
            (gap, Some(ci), closure, "paired".to_string())
        }
        _ => (vec![], None, None, "missing comparison arm: dream_enabled is false, only the vanilla arm was trained".to_string()),
    };
    let report = LmReport {
        kind: "lm-toy".into(),
        version: VERSION_STAMP.into(),
        manifest_sha256: loaded.hash_hex(),
        seeds: seeds.clone(),
        vocab_size: corpus.vocab.len(),
        train_tokens: split.train.len(),
        validation_tokens: split.validation.len(),
        book_starts,
        token_mapping: spec.token_mapping,
        corpus_hurst,
        corpus_heaps,
        arms: arm_reports,
        val_loss_gap: gap,
        val_loss_gap_ci90: ci,
        hurst_gap_closure: closure,
        comparison,
    };
    write_json(&dir.join("report.json"), &report)?;
    Ok(dir)
}

/// Recomputes critical times and ratios for existing experiment directories.
///
/// Each analysis is written to `analysis-eps<X>.json` inside the directory,
/// or inside `out` when given.
pub fn analyze(dirs: &[PathBuf], crit: &CritTimeSpec, out: Option<&Path>) -> Result<Vec<(PathBuf, Analysis)>> {
    if dirs.is_empty() {
        return Err(anyhow!("analyze needs at least one directory"));
    }
    let mut results = Vec::new();
    for dir in dirs {
        let analysis = analyze_dir(dir, crit)?;
        let target = match out {
            Some(o) => {
                fs::create_dir_all(o)?;
                let stem = dir.file_name().map(|s| s.to_string_lossy().to_string()).unwrap_or_else(|| "run".into());
                o.join(format!("{stem}-analysis-eps{}.json", crit.epsilon_rel))
            }
            None => dir.join(format!("analysis-eps{}.json", crit.epsilon_rel)),
        };
        write_json(&target, &analysis)?;
        results.push((target, analysis));
    }
    Ok(results)
}
