//! Vanilla and Dreaming Learning training loops.
//!
//! A run alternates standard steps on corpus windows with dream steps: the
//! model samples continuations of its current batch at temperature `T_s`
//! with frozen parameters, then takes an ordinary cross-entropy step on what
//! it generated.

use std::io::{BufRead, Write};
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markov_env::{build_regime_corpus, MarkovError, RegimeScript, SegmentInfo};
use crate::numcore::{softmax, Adam, NumError, Tape};
use crate::rng;
use crate::seqmetrics::loss_decomposition;
use crate::seqmodel::{mean_xent, HiddenState, ModelConfig, ModelError, RecurrentModel};
use crate::tokens::TokenSequence;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dream step requested before any standard step")]
    DreamBeforeTraining,
    #[error("segment {segment} has {len} tokens, fewer than bptt_len + 1 = {needed}")]
    SegmentTooShort { segment: usize, len: usize, needed: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error("trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a dream sequence starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DreamSeed {
    /// Final hidden state and last token of each window of the latest standard batch.
    #[default]
    BatchState,
    /// Zero hidden state, same seed tokens.
    ZeroState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub bptt_len: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub dream_enabled: bool,
    /// Sampling temperature `T_s` for dream generation.
    pub sampling_temperature: f64,
    /// Generated tokens per dream row; `None` means `bptt_len`.
    pub dream_len: Option<usize>,
    /// Standard steps between dream steps.
    pub dream_every: usize,
    pub dream_lr_scale: f64,
    pub dream_seed: DreamSeed,
    /// Number of standard steps in a run.
    pub max_steps: usize,
    pub seed: u64,
    /// NaN/Inf guards on every tape.
    pub checked: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            bptt_len: 16,
            batch_size: 16,
            lr: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            dream_enabled: false,
            sampling_temperature: 1.5,
            dream_len: None,
            dream_every: 1,
            dream_lr_scale: 1.0,
            dream_seed: DreamSeed::BatchState,
            max_steps: 2000,
            seed: 0,
            checked: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.bptt_len == 0 || self.batch_size == 0 || self.max_steps == 0 {
            return bad("bptt_len, batch_size and max_steps must be >= 1".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("Adam betas must be in [0, 1) and eps > 0".into());
        }
        if !(self.sampling_temperature > 0.0) {
            return bad(format!("sampling_temperature must be positive, got {}", self.sampling_temperature));
        }
        if self.dream_every == 0 {
            return bad("dream_every must be >= 1".into());
        }
        if self.dream_len == Some(0) {
            return bad("dream_len must be >= 1".into());
        }
        if !(self.dream_lr_scale >= 0.0) || !self.dream_lr_scale.is_finite() {
            return bad(format!("dream_lr_scale must be >= 0, got {}", self.dream_lr_scale));
        }
        Ok(())
    }

    pub fn adam(&self) -> Adam {
        Adam { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }

    pub fn effective_dream_len(&self) -> usize {
        self.dream_len.unwrap_or(self.bptt_len)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Standard,
    Dream,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Standard => "standard",
            Phase::Dream => "dream",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub phase: Phase,
    /// Mean next-token cross entropy, nats per token.
    pub loss: f64,
    /// Absolute corpus index of the batch's first window; dream records carry the
    /// position of the preceding standard batch.
    pub corpus_pos: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub records: Vec<LossRecord>,
    /// Standard-step index at which each regime after the first begins.
    pub change_points: Vec<usize>,
    /// Per-regime loss lower bound (entropy rate), nats per token.
    pub lower_bounds: Vec<f64>,
}

pub const TRACE_CSV_HEADER: &str = "step,phase,loss,corpus_pos";

impl LossTrace {
    pub fn standard_losses(&self) -> Vec<f64> {
        self.phase_losses(Phase::Standard)
    }

    pub fn phase_losses(&self, phase: Phase) -> Vec<f64> {
        self.records.iter().filter(|r| r.phase == phase).map(|r| r.loss).collect()
    }

    /// Standard-phase losses from the start of regime `segment` to the start of the next.
    pub fn segment_losses(&self, segment: usize) -> Vec<f64> {
        let std = self.standard_losses();
        let start = if segment == 0 { 0 } else { self.change_points[segment - 1] };
        let end = self.change_points.get(segment).copied().unwrap_or(std.len());
        std[start.min(std.len())..end.min(std.len())].to_vec()
    }

    /// `step,phase,loss,corpus_pos`; floats use the shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{}", r.step, r.phase.as_str(), r.loss, r.corpus_pos)?;
        }
        Ok(())
    }

    /// Reads records written by [`LossTrace::write_csv`]; change points and
    /// bounds come from the run manifest.
    pub fn read_csv<R: BufRead>(r: R, change_points: Vec<usize>, lower_bounds: Vec<f64>) -> Result<Self, TrainError> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == TRACE_CSV_HEADER => {}
            _ => return Err(TrainError::Trace("missing or wrong CSV header".into())),
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || TrainError::Trace(format!("line {}: {line:?}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let phase = match f[1] {
                "standard" => Phase::Standard,
                "dream" => Phase::Dream,
                _ => return Err(bad()),
            };
            records.push(LossRecord {
                step: f[0].parse().map_err(|_| bad())?,
                phase,
                loss: f[2].parse().map_err(|_| bad())?,
                corpus_pos: f[3].parse().map_err(|_| bad())?,
            });
        }
        Ok(Self { records, change_points, lower_bounds })
    }
}

/// Instrumentation for phase isolation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounters {
    pub standard_steps: usize,
    pub dream_steps: usize,
    /// Corpus tokens consumed by standard steps.
    pub corpus_tokens_read: usize,
    /// Generated tokens trained on by dream steps.
    pub dream_tokens_trained: usize,
    /// Corpus tokens touched during dream steps; stays zero.
    pub corpus_tokens_read_in_dreams: usize,
    /// Generated tokens touched during standard steps; stays zero.
    pub dream_tokens_read_in_standard: usize,
}

/// Seed material for a dream: a hidden state row and a token per row.
#[derive(Clone, Debug, PartialEq)]
pub struct DreamContext {
    pub state: HiddenState,
    pub tokens: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StandardOutcome {
    /// Pre-update mean cross entropy.
    pub loss: f64,
    pub context: DreamContext,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DreamOutcome {
    /// Pre-update mean cross entropy on the generated batch.
    pub loss: f64,
    /// Mean entropy of the model's predictions on the generated batch.
    pub entropy: f64,
    /// Mean KL(P_pred || Q_gen) between the model's predictions and the
    /// distributions the batch was sampled from.
    pub kl: f64,
    /// Generated rows, each `dream_len` long (seed token excluded).
    pub generated: Vec<Vec<usize>>,
}

/// One optimizer step on corpus windows of length `bptt_len + 1`, each
/// starting from a zero state.
pub fn standard_step(model: &mut RecurrentModel, windows: &[&[usize]], adam: &Adam, checked: bool) -> Result<StandardOutcome, TrainError> {
    let len = windows.first().map_or(0, |w| w.len());
    if len < 2 {
        return Err(TrainError::Config("windows need at least 2 tokens".into()));
    }
    let inputs: Vec<&[usize]> = windows.iter().map(|w| &w[..len - 1]).collect();
    let targets: Vec<&[usize]> = windows.iter().map(|w| &w[1..]).collect();
    let (loss, grads, state) = {
        let mut tape = if checked { Tape::checked(model.params()) } else { Tape::new(model.params()) };
        let fwd = model.forward_batch(&mut tape, &inputs, &model.zero_state(windows.len()))?;
        let loss = mean_xent(&mut tape, &fwd.logits, &targets)?;
        (tape.scalar(loss), tape.backward(loss)?, fwd.final_state)
    };
    model.params_mut().accumulate(&grads);
    model.apply_adam(adam);
    let tokens = windows.iter().map(|w| w[len - 1]).collect();
    Ok(StandardOutcome { loss, context: DreamContext { state, tokens } })
}

/// Generates `dream_len` tokens per context row at `temperature` with frozen
/// parameters, then trains on them with loss at temperature 1.
pub fn dream_step<R: RngCore>(
    model: &mut RecurrentModel,
    context: &DreamContext,
    temperature: f64,
    dream_len: usize,
    adam: &Adam,
    rng: &mut R,
) -> Result<DreamOutcome, TrainError> {
    if model.steps_trained() == 0 {
        return Err(TrainError::DreamBeforeTraining);
    }
    if dream_len == 0 {
        return Err(TrainError::Config("dream_len must be >= 1".into()));
    }
    let rows = context.tokens.len();
    let mut seqs: Vec<Vec<usize>> = context.tokens.iter().map(|&t| vec![t]).collect();
    let mut q_gen: Vec<Vec<Vec<f64>>> = Vec::with_capacity(dream_len);
    let mut state = context.state.clone();
    let mut last = context.tokens.clone();
    for _ in 0..dream_len {
        let (next, new_state, dists) = model.sample_next_batch(&state, &last, temperature, rng)?;
        for (s, &t) in seqs.iter_mut().zip(&next) {
            s.push(t);
        }
        q_gen.push(dists);
        state = new_state;
        last = next;
    }

    let inputs: Vec<&[usize]> = seqs.iter().map(|s| &s[..dream_len]).collect();
    let targets: Vec<&[usize]> = seqs.iter().map(|s| &s[1..]).collect();
    let (loss, grads, entropy, kl) = {
        let mut tape = Tape::new(model.params());
        let fwd = model.forward_batch(&mut tape, &inputs, &context.state)?;
        let mut ent = 0.0;
        let mut kl = 0.0;
        for (t, &node) in fwd.logits.iter().enumerate() {
            let logits = tape.value(node);
            for b in 0..rows {
                let p = softmax(logits.row(b));
                let d = loss_decomposition(&p, &q_gen[t][b]).unwrap_or((f64::NAN, f64::INFINITY));
                ent += d.0;
                kl += d.1;
            }
        }
        let n = (rows * dream_len) as f64;
        let loss = mean_xent(&mut tape, &fwd.logits, &targets)?;
        (tape.scalar(loss), tape.backward(loss)?, ent / n, kl / n)
    };
    model.params_mut().accumulate(&grads);
    model.apply_adam(adam);
    Ok(DreamOutcome { loss, entropy, kl, generated: seqs.into_iter().map(|mut s| s.split_off(1)).collect() })
}

/// Mean next-token cross entropy over up to `max_windows` windows of
/// `bptt_len + 1` tokens spread evenly over `seq`, each from a zero state.
/// No parameters change.
pub fn evaluate_loss(model: &RecurrentModel, seq: &[usize], bptt_len: usize, max_windows: usize) -> Result<f64, TrainError> {
    let window = bptt_len + 1;
    if seq.len() < window || max_windows == 0 {
        return Err(TrainError::Config(format!("need at least {window} tokens to evaluate, got {}", seq.len())));
    }
    let available = (seq.len() - 1) / bptt_len;
    let n = available.min(max_windows).max(1);
    let span = seq.len() - window;
    let starts: Vec<usize> = if n == 1 { vec![0] } else { (0..n).map(|i| i * span / (n - 1)).collect() };
    let inputs: Vec<&[usize]> = starts.iter().map(|&s| &seq[s..s + bptt_len]).collect();
    let targets: Vec<&[usize]> = starts.iter().map(|&s| &seq[s + 1..s + window]).collect();
    let mut tape = Tape::new(model.params());
    let fwd = model.forward_batch(&mut tape, &inputs, &model.zero_state(n))?;
    let loss = mean_xent(&mut tape, &fwd.logits, &targets)?;
    Ok(tape.scalar(loss))
}

/// A tokenized training corpus with regime boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainCorpus {
    pub sequence: TokenSequence,
    /// Token index where each regime after the first begins.
    pub change_points: Vec<usize>,
    /// Per-regime entropy rate when known.
    pub lower_bounds: Vec<f64>,
}

/// Standard-step index at which each regime starts, proportional to regime length.
pub fn schedule_change_steps(change_points: &[usize], total_len: usize, max_steps: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(change_points.len());
    for (k, &cp) in change_points.iter().enumerate() {
        let raw = ((max_steps as f64) * (cp as f64) / (total_len as f64)).round() as usize;
        let floor = out.last().map_or(1, |&p| p + 1);
        let ceil = max_steps.saturating_sub(change_points.len() - k);
        out.push(raw.max(floor).min(ceil.max(floor)));
    }
    out
}

/// Walks regime segments, wrapping inside the current segment only.
struct WindowCursor {
    bounds: Vec<(usize, usize)>,
    change_steps: Vec<usize>,
    offsets: Vec<usize>,
    bptt_len: usize,
}

impl WindowCursor {
    fn new(corpus: &TrainCorpus, max_steps: usize, bptt_len: usize) -> Result<Self, TrainError> {
        let len = corpus.sequence.len();
        let mut edges = vec![0];
        edges.extend(&corpus.change_points);
        edges.push(len);
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TrainError::Config("change points must be strictly increasing inside the corpus".into()));
        }
        let bounds: Vec<(usize, usize)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
        for (k, &(s, e)) in bounds.iter().enumerate() {
            if e - s < bptt_len + 1 {
                return Err(TrainError::SegmentTooShort { segment: k, len: e - s, needed: bptt_len + 1 });
            }
        }
        let n = bounds.len();
        if max_steps < n {
            return Err(TrainError::Config(format!("max_steps {max_steps} < number of regimes {n}")));
        }
        Ok(Self {
            change_steps: schedule_change_steps(&corpus.change_points, len, max_steps),
            offsets: vec![0; n],
            bounds,
            bptt_len,
        })
    }

    fn segment_at(&self, step: usize) -> usize {
        self.change_steps.iter().take_while(|&&s| s <= step).count()
    }

    /// Start indices of the next `batch` windows for standard step `step`.
    fn next_starts(&mut self, step: usize, batch: usize) -> Vec<usize> {
        let k = self.segment_at(step);
        let (s, e) = self.bounds[k];
        let span = e - s - self.bptt_len;
        (0..batch)
            .map(|_| {
                let start = s + self.offsets[k] % span;
                self.offsets[k] += self.bptt_len;
                start
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub trace: LossTrace,
    pub model: RecurrentModel,
    pub config: TrainConfig,
    pub model_config: ModelConfig,
    pub counters: PhaseCounters,
    /// KL(P_pred || Q_gen) of every dream step, in order.
    pub dream_kl: Vec<f64>,
    pub wall_time_secs: f64,
}

/// Observes a run as it progresses; used for periodic validation.
pub trait RunObserver {
    fn after_standard_step(&mut self, _step: usize, _model: &RecurrentModel) -> Result<(), TrainError> {
        Ok(())
    }
}

impl RunObserver for () {}

/// Trains a fresh model from `model_config` on `corpus`.
pub fn train_run(config: &TrainConfig, model_config: &ModelConfig, corpus: &TrainCorpus) -> Result<RunResult, TrainError> {
    let model = RecurrentModel::new(model_config.clone())?;
    train_run_from(config, model, corpus, &mut ())
}

/// Trains `model` for `config.max_steps` standard steps, with a dream step
/// after every `dream_every` standard steps when dreaming is enabled.
pub fn train_run_from(
    config: &TrainConfig,
    mut model: RecurrentModel,
    corpus: &TrainCorpus,
    observer: &mut dyn RunObserver,
) -> Result<RunResult, TrainError> {
    config.validate()?;
    if corpus.sequence.vocab_size() != model.config().vocab_size {
        return Err(TrainError::Config(format!(
            "corpus vocabulary {} != model vocabulary {}",
            corpus.sequence.vocab_size(),
            model.config().vocab_size
        )));
    }
    let started = Instant::now();
    let mut cursor = WindowCursor::new(corpus, config.max_steps, config.bptt_len)?;
    let adam = config.adam();
    let dream_adam = Adam { lr: config.lr * config.dream_lr_scale, ..adam };
    let mut dream_rng = rng::derived(config.seed, rng::stream::DREAM);
    let tokens = corpus.sequence.tokens();
    let window = config.bptt_len + 1;

    let mut trace = LossTrace {
        records: Vec::with_capacity(config.max_steps * 2),
        change_points: cursor.change_steps.clone(),
        lower_bounds: corpus.lower_bounds.clone(),
    };
    let mut counters = PhaseCounters::default();
    let mut dream_kl = Vec::new();
    let mut record = 0usize;

    for step in 0..config.max_steps {
        let starts = cursor.next_starts(step, config.batch_size);
        let windows: Vec<&[usize]> = starts.iter().map(|&s| &tokens[s..s + window]).collect();
        let out = standard_step(&mut model, &windows, &adam, config.checked)?;
        counters.standard_steps += 1;
        counters.corpus_tokens_read += windows.len() * window;
        trace.records.push(LossRecord { step: record, phase: Phase::Standard, loss: out.loss, corpus_pos: starts[0] });
        record += 1;
        observer.after_standard_step(step, &model)?;

        if config.dream_enabled && (step + 1) % config.dream_every == 0 {
            let context = match config.dream_seed {
                DreamSeed::BatchState => out.context,
                DreamSeed::ZeroState => {
                    DreamContext { state: model.zero_state(out.context.tokens.len()), tokens: out.context.tokens }
                }
            };
            let dream_len = config.effective_dream_len();
            let d = dream_step(&mut model, &context, config.sampling_temperature, dream_len, &dream_adam, &mut dream_rng)?;
            counters.dream_steps += 1;
            counters.dream_tokens_trained += d.generated.len() * dream_len;
            dream_kl.push(d.kl);
            trace.records.push(LossRecord { step: record, phase: Phase::Dream, loss: d.loss, corpus_pos: starts[0] });
            record += 1;
        }
    }

    Ok(RunResult {
        trace,
        model_config: model.config().clone(),
        model,
        config: config.clone(),
        counters,
        dream_kl,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Vanilla,
    Dreaming,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Vanilla => "vanilla",
            Arm::Dreaming => "dreaming",
        }
    }
}

/// Vanilla and dreaming runs sharing one corpus realization and one initialization.
#[derive(Clone, Debug)]
pub struct PairedRun {
    pub seed: u64,
    pub segments: Vec<SegmentInfo>,
    pub vanilla: RunResult,
    pub dreaming: RunResult,
}

/// Derives the corpus, model and training seeds of one simulation.
pub fn seeded_configs(config: &TrainConfig, model_config: &ModelConfig, script: &RegimeScript, seed: u64) -> (TrainConfig, ModelConfig, RegimeScript) {
    let mut script = script.clone();
    for seg in &mut script.segments {
        seg.spec.seed = rng::derive_seed(seg.spec.seed, seed);
    }
    let model_config = ModelConfig { seed: rng::derive_seed(seed, rng::stream::MODEL_INIT), ..model_config.clone() };
    let config = TrainConfig { seed, ..config.clone() };
    (config, model_config, script)
}

/// Builds the regime corpus for `seed`.
pub fn seeded_corpus(script: &RegimeScript, seed: u64) -> Result<(TrainCorpus, Vec<SegmentInfo>), TrainError> {
    let rc = build_regime_corpus(script, &mut rng::derived(seed, rng::stream::CORPUS))?;
    let corpus = TrainCorpus { lower_bounds: rc.lower_bounds(), sequence: rc.sequence, change_points: rc.change_points };
    Ok((corpus, rc.segments))
}

/// For each seed, trains a vanilla and a dreaming arm on the same corpus from
/// the same initial parameters. Runs execute on the current rayon pool;
/// results come back ordered by seed.
pub fn paired_experiment(
    config: &TrainConfig,
    model_config: &ModelConfig,
    script: &RegimeScript,
    seeds: &[u64],
) -> Result<Vec<PairedRun>, TrainError> {
    if seeds.is_empty() {
        return Err(TrainError::Config("paired experiment needs at least one seed".into()));
    }
    let jobs: Vec<(u64, Arm)> = seeds.iter().flat_map(|&s| [(s, Arm::Vanilla), (s, Arm::Dreaming)]).collect();
    let mut results: Vec<((u64, Arm), Result<(RunResult, Vec<SegmentInfo>), TrainError>)> = jobs
        .par_iter()
        .map(|&(seed, arm)| {
            let run = || {
                let (cfg, mcfg, scr) = seeded_configs(config, model_config, script, seed);
                let (corpus, segments) = seeded_corpus(&scr, seed)?;
                let cfg = TrainConfig { dream_enabled: arm == Arm::Dreaming, ..cfg };
                Ok((train_run(&cfg, &mcfg, &corpus)?, segments))
            };
            ((seed, arm), run())
        })
        .collect();
    results.sort_by_key(|(k, _)| *k);

    let mut out = Vec::with_capacity(seeds.len());
    let mut it = results.into_iter();
    while let (Some(((seed, _), v)), Some((_, d))) = (it.next(), it.next()) {
        let (vanilla, segments) = v?;
        let (dreaming, _) = d?;
        out.push(PairedRun { seed, segments, vanilla, dreaming });
    }
    let order: Vec<u64> = seeds.to_vec();
    out.sort_by_key(|p| order.iter().position(|&s| s == p.seed));
    Ok(out)
}
