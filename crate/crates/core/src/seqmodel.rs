//! Stacked-LSTM next-token model with temperature sampling.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numcore::{self, read_checkpoint, write_checkpoint, Adam, NodeId, NumError, ParamId, ParamStore, Tape, Tensor};
use crate::rng;
use crate::tokens::{TokenOutOfVocab, TokenSequence};

/// Temperatures at or below this are treated as the zero-temperature limit (argmax).
pub const ARGMAX_TEMPERATURE: f64 = 1e-3;
pub const MAX_LAYERS: usize = 8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    TokenOutOfVocab(#[from] TokenOutOfVocab),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("batch mismatch: {0}")]
    Batch(String),
    #[error("input sequence is empty")]
    EmptyInput,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// 2 layers x 64 hidden, embedding 32.
    pub fn markov_default(vocab_size: usize) -> Self {
        Self { vocab_size, embed_dim: 32, hidden_dim: 64, n_layers: 2, seed: 0 }
    }

    /// 2 layers x 256 hidden, embedding 32.
    pub fn text_default(vocab_size: usize) -> Self {
        Self { vocab_size, embed_dim: 32, hidden_dim: 256, n_layers: 2, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [self.vocab_size, self.embed_dim, self.hidden_dim, self.n_layers];
        if dims.contains(&0) {
            return Err(ModelError::Config(format!("all dimensions must be >= 1: {self:?}")));
        }
        if self.n_layers > MAX_LAYERS {
            return Err(ModelError::Config(format!("n_layers {} exceeds {MAX_LAYERS}", self.n_layers)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct LayerIds {
    w_x: ParamId,
    w_h: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
struct ParamIds {
    embed: ParamId,
    layers: Vec<LayerIds>,
    out_w: ParamId,
    out_b: ParamId,
}

impl ParamIds {
    fn resolve(params: &ParamStore, n_layers: usize) -> Result<Self, NumError> {
        Ok(Self {
            embed: params.id("embed")?,
            layers: (0..n_layers)
                .map(|l| {
                    Ok(LayerIds {
                        w_x: params.id(&format!("lstm.{l}.w_x"))?,
                        w_h: params.id(&format!("lstm.{l}.w_h"))?,
                        bias: params.id(&format!("lstm.{l}.bias"))?,
                    })
                })
                .collect::<Result<_, NumError>>()?,
            out_w: params.id("out.w")?,
            out_b: params.id("out.b")?,
        })
    }
}

/// Per-layer `(h, c)`, each `[batch, hidden]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState {
    layers: Vec<(Tensor, Tensor)>,
}

impl HiddenState {
    pub fn zeros(config: &ModelConfig, batch: usize) -> Self {
        let z = Tensor::zeros(&[batch, config.hidden_dim]);
        Self { layers: vec![(z.clone(), z); config.n_layers] }
    }

    /// State from explicit per-layer `(h, c)` pairs, each `[batch, hidden]`.
    pub fn from_layers(config: &ModelConfig, layers: Vec<(Tensor, Tensor)>) -> Result<Self, ModelError> {
        let batch = layers.first().map_or(0, |l| l.0.shape()[0]);
        let ok = layers.len() == config.n_layers
            && batch > 0
            && layers.iter().all(|(h, c)| h.shape() == [batch, config.hidden_dim] && c.shape() == [batch, config.hidden_dim]);
        if !ok {
            return Err(ModelError::Config(format!(
                "state must be {} layers of [batch, {}] pairs",
                config.n_layers, config.hidden_dim
            )));
        }
        Ok(Self { layers })
    }

    pub fn batch_size(&self) -> usize {
        self.layers[0].0.dims2().0
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> (&Tensor, &Tensor) {
        (&self.layers[l].0, &self.layers[l].1)
    }

    /// Keeps only batch row `row`.
    pub fn select(&self, row: usize) -> Self {
        let pick = |t: &Tensor| {
            let h = t.dims2().1;
            Tensor::new(vec![1, h], t.row(row).to_vec()).expect("row shape")
        };
        Self { layers: self.layers.iter().map(|(h, c)| (pick(h), pick(c))).collect() }
    }

    /// Stacks single-row states into one batch.
    pub fn stack(parts: &[HiddenState]) -> Self {
        let n_layers = parts[0].layers.len();
        let layers = (0..n_layers)
            .map(|l| {
                let cat = |f: fn(&(Tensor, Tensor)) -> &Tensor| {
                    let h = f(&parts[0].layers[l]).dims2().1;
                    let data: Vec<f64> = parts.iter().flat_map(|p| f(&p.layers[l]).data().iter().copied()).collect();
                    Tensor::new(vec![data.len() / h, h], data).expect("stack shape")
                };
                (cat(|p| &p.0), cat(|p| &p.1))
            })
            .collect();
        Self { layers }
    }
}

/// Model-generated tokens with the temperature and training step that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSequence {
    pub tokens: TokenSequence,
    pub temperature: f64,
    pub source_step: u64,
}

/// Output of a batched forward pass.
pub struct Forward {
    /// One `[batch, vocab]` node per position; position `t` predicts input `t + 1`.
    pub logits: Vec<NodeId>,
    pub final_state: HiddenState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentModel {
    config: ModelConfig,
    params: ParamStore,
    ids: ParamIds,
    steps_trained: u64,
}

impl RecurrentModel {
    /// Random initialization from `config.seed`. Forget-gate biases start at 1.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut r = rng::derived(config.seed, rng::stream::MODEL_INIT);
        let (v, e, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
        let mut params = ParamStore::new();
        let normal = |n: usize, r: &mut rng::Rng| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(r)).collect() };
        let uniform = |n: usize, bound: f64, r: &mut rng::Rng| -> Vec<f64> {
            let u = Uniform::new_inclusive(-bound, bound).expect("bound > 0");
            (0..n).map(|_| u.sample(r)).collect()
        };
        let bound = 1.0 / (h as f64).sqrt();
        params.insert("embed", Tensor::matrix(v, e, normal(v * e, &mut r))?)?;
        for l in 0..config.n_layers {
            let input = if l == 0 { e } else { h };
            params.insert(&format!("lstm.{l}.w_x"), Tensor::matrix(input, 4 * h, uniform(input * 4 * h, bound, &mut r))?)?;
            params.insert(&format!("lstm.{l}.w_h"), Tensor::matrix(h, 4 * h, uniform(h * 4 * h, bound, &mut r))?)?;
            let mut bias = vec![0.0; 4 * h];
            bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
            params.insert(&format!("lstm.{l}.bias"), Tensor::vector(bias))?;
        }
        params.insert("out.w", Tensor::matrix(h, v, uniform(h * v, bound, &mut r))?)?;
        params.insert("out.b", Tensor::vector(vec![0.0; v]))?;
        let ids = ParamIds::resolve(&params, config.n_layers)?;
        Ok(Self { config, params, ids, steps_trained: 0 })
    }

    /// Wraps an existing parameter store, checking every slot shape against `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        let reference = Self::new(config.clone())?;
        if reference.params.len() != params.len() {
            return Err(ModelError::Config(format!("expected {} slots, got {}", reference.params.len(), params.len())));
        }
        for id in reference.params.ids() {
            let name = reference.params.name(id);
            let other = params.id(name)?;
            if params.value(other).shape() != reference.params.value(id).shape() {
                return Err(ModelError::Config(format!("slot {name} has shape {:?}", params.value(other).shape())));
            }
        }
        let ids = ParamIds::resolve(&params, config.n_layers)?;
        Ok(Self { config, params, ids, steps_trained: 0 })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn steps_trained(&self) -> u64 {
        self.steps_trained
    }

    /// Adam update from the accumulated gradients; counts as one training step.
    pub fn apply_adam(&mut self, adam: &Adam) {
        numcore::adam_step(&mut self.params, adam);
        self.steps_trained += 1;
    }

    pub fn zero_state(&self, batch: usize) -> HiddenState {
        HiddenState::zeros(&self.config, batch)
    }

    /// Records a forward pass over `inputs` (`batch` rows of equal length).
    pub fn forward_batch(&self, tape: &mut Tape<'_>, inputs: &[&[usize]], initial: &HiddenState) -> Result<Forward, ModelError> {
        let batch = inputs.len();
        let len = inputs.first().map_or(0, |r| r.len());
        if batch == 0 || len == 0 {
            return Err(ModelError::EmptyInput);
        }
        if inputs.iter().any(|r| r.len() != len) {
            return Err(ModelError::Batch("rows differ in length".into()));
        }
        if initial.batch_size() != batch || initial.n_layers() != self.config.n_layers {
            return Err(ModelError::Batch(format!(
                "state has batch {} and {} layers, input has batch {batch}",
                initial.batch_size(),
                initial.n_layers()
            )));
        }
        let v = self.config.vocab_size;
        for row in inputs {
            if let Some((position, &token)) = row.iter().enumerate().find(|(_, &t)| t >= v) {
                return Err(TokenOutOfVocab { token, position, vocab_size: v }.into());
            }
        }

        let h = self.config.hidden_dim;
        let embed = tape.param(self.ids.embed);
        let layers: Vec<(NodeId, NodeId, NodeId)> =
            self.ids.layers.iter().map(|l| (tape.param(l.w_x), tape.param(l.w_h), tape.param(l.bias))).collect();
        let out_w = tape.param(self.ids.out_w);
        let out_b = tape.param(self.ids.out_b);

        let mut state: Vec<(NodeId, NodeId)> =
            initial.layers.iter().map(|(hh, cc)| (tape.constant(hh.clone()), tape.constant(cc.clone()))).collect();
        let mut logits = Vec::with_capacity(len);
        let mut ids = vec![0usize; batch];
        for t in 0..len {
            for (b, row) in inputs.iter().enumerate() {
                ids[b] = row[t];
            }
            let mut x = tape.gather(embed, &ids);
            for (l, &(w_x, w_h, bias)) in layers.iter().enumerate() {
                let (h_prev, c_prev) = state[l];
                let zx = tape.matmul(x, w_x);
                let zh = tape.matmul(h_prev, w_h);
                let z = tape.add(zx, zh);
                let z = tape.add_bias(z, bias);
                let zi = tape.slice_cols(z, 0, h);
                let zf = tape.slice_cols(z, h, h);
                let zg = tape.slice_cols(z, 2 * h, h);
                let zo = tape.slice_cols(z, 3 * h, h);
                let i = tape.sigmoid(zi);
                let f = tape.sigmoid(zf);
                let g = tape.tanh(zg);
                let o = tape.sigmoid(zo);
                let fc = tape.mul(f, c_prev);
                let ig = tape.mul(i, g);
                let c = tape.add(fc, ig);
                let tc = tape.tanh(c);
                let h_new = tape.mul(o, tc);
                state[l] = (h_new, c);
                x = h_new;
            }
            let y = tape.matmul(x, out_w);
            logits.push(tape.add_bias(y, out_b));
        }
        let final_state =
            HiddenState { layers: state.iter().map(|&(hh, cc)| (tape.value(hh).clone(), tape.value(cc).clone())).collect() };
        Ok(Forward { logits, final_state })
    }

    /// Single-sequence forward; `logits[t]` predicts `tokens[t + 1]`.
    pub fn forward<'m>(
        &'m self,
        tokens: &TokenSequence,
        initial: &HiddenState,
    ) -> Result<(Vec<Tensor>, HiddenState, Tape<'m>), ModelError> {
        let mut tape = Tape::new(&self.params);
        let fwd = self.forward_batch(&mut tape, &[tokens.tokens()], initial)?;
        let logits = fwd.logits.iter().map(|&n| Tensor::vector(tape.value(n).data().to_vec())).collect();
        Ok((logits, fwd.final_state, tape))
    }

    /// One recurrent step without gradients: `[batch, vocab]` logits and the advanced state.
    pub fn step_logits(&self, state: &HiddenState, tokens: &[usize]) -> Result<(Tensor, HiddenState), ModelError> {
        let mut tape = Tape::new(&self.params);
        let rows: Vec<&[usize]> = tokens.chunks(1).collect();
        let fwd = self.forward_batch(&mut tape, &rows, state)?;
        Ok((tape.value(fwd.logits[0]).clone(), fwd.final_state))
    }

    /// Samples one token per batch row at temperature `temperature`.
    /// Returns the tokens, the advanced state, and the per-row sampling distributions.
    pub fn sample_next_batch<R: RngCore>(
        &self,
        state: &HiddenState,
        last_tokens: &[usize],
        temperature: f64,
        rng: &mut R,
    ) -> Result<(Vec<usize>, HiddenState, Vec<Vec<f64>>), ModelError> {
        if !(temperature > 0.0) {
            return Err(NumError::NonPositiveTemperature(temperature).into());
        }
        let (logits, next) = self.step_logits(state, last_tokens)?;
        let mut tokens = Vec::with_capacity(last_tokens.len());
        let mut dists = Vec::with_capacity(last_tokens.len());
        for b in 0..last_tokens.len() {
            let row = logits.row(b);
            let q = if temperature <= ARGMAX_TEMPERATURE {
                let mut onehot = vec![0.0; row.len()];
                onehot[argmax(row)] = 1.0;
                onehot
            } else {
                numcore::softmax_with_temperature(row, temperature)?
            };
            tokens.push(sample_categorical(&q, rng));
            dists.push(q);
        }
        Ok((tokens, next, dists))
    }

    pub fn sample_next<R: RngCore>(
        &self,
        state: &HiddenState,
        last_token: usize,
        temperature: f64,
        rng: &mut R,
    ) -> Result<(usize, HiddenState), ModelError> {
        let (tokens, next, _) = self.sample_next_batch(state, &[last_token], temperature, rng)?;
        Ok((tokens[0], next))
    }

    /// Warms the state on `seed_context`, then samples `length` tokens autoregressively.
    pub fn generate<R: RngCore>(
        &self,
        seed_context: &TokenSequence,
        length: usize,
        temperature: f64,
        rng: &mut R,
    ) -> Result<SampledSequence, ModelError> {
        if length == 0 || seed_context.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if !(temperature > 0.0) {
            return Err(NumError::NonPositiveTemperature(temperature).into());
        }
        let ctx = seed_context.tokens();
        let mut state = self.zero_state(1);
        if ctx.len() > 1 {
            let mut tape = Tape::new(&self.params);
            state = self.forward_batch(&mut tape, &[&ctx[..ctx.len() - 1]], &state)?.final_state;
        }
        let mut last = ctx[ctx.len() - 1];
        let mut out = Vec::with_capacity(length);
        for _ in 0..length {
            let (tok, next) = self.sample_next(&state, last, temperature, rng)?;
            out.push(tok);
            state = next;
            last = tok;
        }
        Ok(SampledSequence {
            tokens: TokenSequence::new(out, self.config.vocab_size)?,
            temperature,
            source_step: self.steps_trained,
        })
    }

    /// Writes `<stem>.dlck` (parameters) and `<stem>.json` (config).
    pub fn save(&self, stem: &Path) -> Result<(), ModelError> {
        write_checkpoint(&self.params, BufWriter::new(File::create(stem.with_extension("dlck"))?))?;
        serde_json::to_writer_pretty(File::create(stem.with_extension("json"))?, &self.config)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self, ModelError> {
        let config: ModelConfig = serde_json::from_reader(BufReader::new(File::open(stem.with_extension("json"))?))?;
        let params = read_checkpoint(BufReader::new(File::open(stem.with_extension("dlck"))?))?;
        Self::from_params(config, params)
    }
}

/// Mean next-token cross entropy over every `(row, position)`.
pub fn mean_xent(tape: &mut Tape<'_>, logits: &[NodeId], targets: &[&[usize]]) -> Result<NodeId, NumError> {
    let mut parts = Vec::with_capacity(logits.len());
    let mut col = vec![0usize; targets.len()];
    for (t, &l) in logits.iter().enumerate() {
        for (b, row) in targets.iter().enumerate() {
            col[b] = row[t];
        }
        parts.push(tape.softmax_xent(l, &col)?);
    }
    let total = tape.sum_of(&parts);
    Ok(tape.scale(total, 1.0 / (logits.len() * targets.len()) as f64))
}

pub fn argmax(xs: &[f64]) -> usize {
    xs.iter().enumerate().fold(0, |best, (i, &x)| if x > xs[best] { i } else { best })
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_categorical<R: RngCore>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
