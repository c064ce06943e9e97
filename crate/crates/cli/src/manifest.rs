//! Experiment manifests: one JSON file describes a whole experiment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dreamlab_core::corpus::TextCorpusSpec;
use dreamlab_core::dreamtrain::TrainConfig;
use dreamlab_core::markov_env::{MarkovSpec, RegimeScript, Segment};
use dreamlab_core::seqmetrics::{CritTimeSpec, TokenMapping};
use dreamlab_core::seqmodel::ModelConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SEED_OFFSET_VAR: &str = "DREAMLAB_SEED_OFFSET";

/// Network shape; the vocabulary size comes from the data and the seed from the run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self { embed_dim: 16, hidden_dim: 64, n_layers: 2 }
    }
}

impl ModelShape {
    pub fn config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig { vocab_size, embed_dim: self.embed_dim, hidden_dim: self.hidden_dim, n_layers: self.n_layers, seed: 0 }
    }
}

/// Grid of sampling temperatures and entropy pairs for the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub temperatures: Vec<f64>,
    /// `(initial, final)` normalized entropy rates.
    pub entropy_pairs: Vec<(f64, f64)>,
    pub n_states: usize,
    /// Tokens per regime.
    pub segment_length: usize,
    #[serde(default = "default_tolerance")]
    pub entropy_tolerance: f64,
    /// Base seed for the transition matrices.
    #[serde(default)]
    pub matrix_seed: u64,
}

fn default_tolerance() -> f64 {
    0.01
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.temperatures.is_empty() || self.entropy_pairs.is_empty() {
            bail!("sweep grid needs at least one temperature and one entropy pair");
        }
        if let Some(t) = self.temperatures.iter().find(|&&t| !(t > 0.0)) {
            bail!("sweep temperature {t} must be positive");
        }
        for k in 0..self.entropy_pairs.len() {
            self.script(k).validate().with_context(|| format!("entropy pair {k}"))?;
        }
        Ok(())
    }

    /// All `(h_init, h_final)` ordered pairs with distinct values from `levels`.
    pub fn ordered_pairs(levels: &[f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &a in levels {
            for &b in levels {
                if a != b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn script(&self, pair: usize) -> RegimeScript {
        let (h0, h1) = self.entropy_pairs[pair];
        let seg = |h: f64, k: u64| Segment {
            spec: MarkovSpec {
                n_states: self.n_states,
                target_norm_entropy: h,
                entropy_tolerance: self.entropy_tolerance,
                seed: self.matrix_seed.wrapping_add(1000 * pair as u64 + k),
            },
            length: self.segment_length,
        };
        RegimeScript { segments: vec![seg(h0, 0), seg(h1, 1)] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmToySpec {
    pub corpus: TextCorpusSpec,
    /// File indices kept out of training for validation.
    #[serde(default)]
    pub holdout: Vec<usize>,
    /// Standard steps between validation evaluations.
    #[serde(default = "default_val_every")]
    pub val_every: usize,
    /// Cap on validation windows per evaluation.
    #[serde(default = "default_val_windows")]
    pub val_windows: usize,
    /// Tokens sampled from each final model for the exponent report.
    #[serde(default = "default_generate_len")]
    pub generate_len: usize,
    #[serde(default = "one")]
    pub generate_temperature: f64,
    #[serde(default)]
    pub token_mapping: TokenMapping,
}

fn default_val_every() -> usize {
    100
}
fn default_val_windows() -> usize {
    256
}
fn default_generate_len() -> usize {
    100_000
}
fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    MarkovShift { script: RegimeScript },
    TempSweep { grid: SweepGrid },
    LmToy(LmToySpec),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::MarkovShift { .. } => "markov-shift",
            Experiment::TempSweep { .. } => "temp-sweep",
            Experiment::LmToy(_) => "lm-toy",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(default)]
    pub model: ModelShape,
    #[serde(default)]
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub crit: CritTimeSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// A parsed manifest with the exact bytes it came from.
#[derive(Clone, Debug)]
pub struct LoadedManifest {
    pub manifest: ExperimentManifest,
    pub raw: Vec<u8>,
    pub path: PathBuf,
}

impl LoadedManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let manifest: ExperimentManifest =
            serde_json::from_slice(&raw).with_context(|| format!("parsing manifest {}", path.display()))?;
        manifest.validate()?;
        Ok(Self { manifest, raw, path: path.to_path_buf() })
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(Sha256::digest(&self.raw))
    }

    /// Directory that relative paths inside the manifest refer to.
    pub fn base_dir(&self) -> PathBuf {
        self.path.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    /// `--out` wins, then `output_dir`, then `runs/<kind>-<hash prefix>`.
    pub fn output_dir(&self, cli_out: Option<&Path>) -> PathBuf {
        if let Some(o) = cli_out {
            return o.to_path_buf();
        }
        match &self.manifest.output_dir {
            Some(d) if d.is_absolute() => d.clone(),
            Some(d) => self.base_dir().join(d),
            None => PathBuf::from("runs").join(format!("{}-{}", self.manifest.experiment.kind(), &self.hash_hex()[..12])),
        }
    }
}

impl ExperimentManifest {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("manifest lists no seeds");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            bail!("duplicate seeds in manifest");
        }
        self.train.validate()?;
        self.crit.validate()?;
        self.model.config(2).validate()?;
        match &self.experiment {
            Experiment::MarkovShift { script } => script.validate()?,
            Experiment::TempSweep { grid } => grid.validate()?,
            Experiment::LmToy(spec) => {
                spec.corpus.validate()?;
                if spec.val_every == 0 || spec.val_windows == 0 {
                    bail!("val_every and val_windows must be >= 1");
                }
                if !(spec.generate_temperature > 0.0) {
                    bail!("generate_temperature must be positive");
                }
                if spec.holdout.iter().any(|&h| h >= spec.corpus.files.len()) {
                    bail!("holdout index beyond the file list");
                }
                if spec.holdout.len() >= spec.corpus.files.len() {
                    bail!("holdout leaves no training files");
                }
            }
        }
        Ok(())
    }
}

/// Reads the seed offset from the environment; unset means 0.
pub fn seed_offset_from_env() -> Result<u64> {
    match std::env::var(SEED_OFFSET_VAR) {
        Ok(v) => v.trim().parse().with_context(|| format!("{SEED_OFFSET_VAR}={v:?} is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

pub fn effective_seeds(seeds: &[u64], offset: u64) -> Vec<u64> {
    seeds.iter().map(|s| s.wrapping_add(offset)).collect()
}
