//! Python bindings: Markov sources, the recurrent model, training runs and metrics.

use std::path::PathBuf;

use dreamlab_core::corpus::{build_corpus as core_build_corpus, TextCorpusSpec, TokenMode};
use dreamlab_core::dreamtrain::{train_run_from, Phase, TrainConfig, TrainCorpus};
use dreamlab_core::markov_env::{self, MarkovSpec, TransitionMatrix};
use dreamlab_core::numcore;
use dreamlab_core::rng;
use dreamlab_core::seqmetrics::{self, CritTimeSpec, ExponentEstimate};
use dreamlab_core::seqmodel::{ModelConfig, RecurrentModel};
use dreamlab_core::TokenSequence;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<TransitionMatrix> {
    TransitionMatrix::from_rows(&rows).map_err(err)
}

fn rows_of(m: &TransitionMatrix) -> Vec<Vec<f64>> {
    (0..m.n_states()).map(|i| m.row(i).to_vec()).collect()
}

/// Transition matrix with the requested normalized entropy rate.
#[pyfunction]
#[pyo3(signature = (n_states, target_norm_entropy, seed, entropy_tolerance = 0.01))]
fn sample_matrix(n_states: usize, target_norm_entropy: f64, seed: u64, entropy_tolerance: f64) -> PyResult<Vec<Vec<f64>>> {
    let spec = MarkovSpec { n_states, target_norm_entropy, entropy_tolerance, seed };
    Ok(rows_of(&spec.build().map_err(err)?))
}

#[pyfunction]
fn stationary_distribution(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(markov_env::stationary_distribution(&matrix(rows)?).map_err(err)?.probs().to_vec())
}

/// Entropy rate in nats per token.
#[pyfunction]
fn entropy_rate(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    markov_env::entropy_rate(&matrix(rows)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (rows, length, seed, init_state = None))]
fn generate_markov(rows: Vec<Vec<f64>>, length: usize, seed: u64, init_state: Option<usize>) -> PyResult<Vec<usize>> {
    let seq = markov_env::generate_sequence(&matrix(rows)?, length, &mut rng::seeded(seed), init_state).map_err(err)?;
    Ok(seq.into_tokens())
}

#[pyfunction]
fn softmax_with_temperature(logits: Vec<f64>, temperature: f64) -> PyResult<Vec<f64>> {
    numcore::softmax_with_temperature(&logits, temperature).map_err(err)
}

/// `(entropy, kl)` in nats.
#[pyfunction]
fn loss_decomposition(p: Vec<f64>, q: Vec<f64>) -> PyResult<(f64, f64)> {
    seqmetrics::loss_decomposition(&p, &q).map_err(err)
}

/// Critical time in steps, or `None` when the bound is never reached.
#[pyfunction]
#[pyo3(signature = (losses, lower_bound, epsilon_rel = 0.1, smooth_window = 51, sustain = 3))]
fn t_crit(losses: Vec<f64>, lower_bound: f64, epsilon_rel: f64, smooth_window: usize, sustain: usize) -> PyResult<Option<usize>> {
    let spec = CritTimeSpec { epsilon_rel, smooth_window, sustain };
    spec.validate().map_err(err)?;
    Ok(seqmetrics::t_crit(&losses, lower_bound, &spec).ok())
}

fn estimate_dict<'py>(py: Python<'py>, e: &ExponentEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("exponent", e.exponent)?;
    d.set_item("stderr", e.stderr)?;
    d.set_item("fit_range", e.fit_range)?;
    d.set_item("r_squared", e.r_squared)?;
    d.set_item("n_points", e.n_points)?;
    Ok(d)
}

/// Rescaled-range exponent of a real series on the default scale grid.
#[pyfunction]
fn hurst_exponent<'py>(py: Python<'py>, series: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let e = seqmetrics::hurst_exponent(&series, &seqmetrics::hurst_scales(series.len())).map_err(err)?;
    estimate_dict(py, &e)
}

#[pyfunction]
fn heaps_exponent<'py>(py: Python<'py>, tokens: Vec<usize>) -> PyResult<Bound<'py, PyDict>> {
    let v = tokens.iter().max().map_or(1, |m| m + 1);
    let seq = TokenSequence::new(tokens, v).map_err(err)?;
    estimate_dict(py, &seqmetrics::heaps_exponent(&seq).map_err(err)?)
}

/// Tokenizes text files; returns `(tokens, vocabulary, change_points)`.
#[pyfunction]
#[pyo3(signature = (files, mode = "char", vocab_cap = 256, lowercase = false))]
fn build_corpus(files: Vec<PathBuf>, mode: &str, vocab_cap: usize, lowercase: bool) -> PyResult<(Vec<usize>, Vec<String>, Vec<usize>)> {
    let mode = match mode {
        "char" => TokenMode::Char,
        "word" => TokenMode::Word,
        other => return Err(PyValueError::new_err(format!("mode must be 'char' or 'word', got {other:?}"))),
    };
    let c = core_build_corpus(&TextCorpusSpec { files, mode, vocab_cap, lowercase }).map_err(err)?;
    let vocab = c.vocab.entries.iter().map(|e| e.token.clone()).collect();
    Ok((c.sequence.into_tokens(), vocab, c.change_points))
}

/// Stacked-LSTM next-token model.
#[pyclass(name = "Model", module = "dreamlab")]
struct PyModel {
    inner: RecurrentModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (vocab_size, embed_dim = 16, hidden_dim = 64, n_layers = 2, seed = 0))]
    fn new(vocab_size: usize, embed_dim: usize, hidden_dim: usize, n_layers: usize, seed: u64) -> PyResult<Self> {
        let cfg = ModelConfig { vocab_size, embed_dim, hidden_dim, n_layers, seed };
        Ok(Self { inner: RecurrentModel::new(cfg).map_err(err)? })
    }

    #[staticmethod]
    fn load(stem: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: RecurrentModel::load(&stem).map_err(err)? })
    }

    fn save(&self, stem: PathBuf) -> PyResult<()> {
        self.inner.save(&stem).map_err(err)
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.config().vocab_size
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.params().num_scalars()
    }

    #[getter]
    fn steps_trained(&self) -> u64 {
        self.inner.steps_trained()
    }

    /// Next-token logits after reading `tokens` from a zero state.
    fn logits(&self, tokens: Vec<usize>) -> PyResult<Vec<f64>> {
        let seq = TokenSequence::new(tokens, self.vocab_size()).map_err(err)?;
        let (logits, _, _) = self.inner.forward(&seq, &self.inner.zero_state(1)).map_err(err)?;
        Ok(logits.last().ok_or_else(|| PyValueError::new_err("empty input"))?.data().to_vec())
    }

    #[pyo3(signature = (context, length, temperature = 1.0, seed = 0))]
    fn generate(&self, context: Vec<usize>, length: usize, temperature: f64, seed: u64) -> PyResult<Vec<usize>> {
        let ctx = TokenSequence::new(context, self.vocab_size()).map_err(err)?;
        let s = self.inner.generate(&ctx, length, temperature, &mut rng::derived(seed, rng::stream::GENERATE)).map_err(err)?;
        Ok(s.tokens.into_tokens())
    }
}

/// Outcome of a training run.
#[pyclass(name = "RunResult", module = "dreamlab")]
struct PyRunResult {
    #[pyo3(get)]
    standard_losses: Vec<f64>,
    #[pyo3(get)]
    dream_losses: Vec<f64>,
    #[pyo3(get)]
    change_points: Vec<usize>,
    #[pyo3(get)]
    dream_kl: Vec<f64>,
    #[pyo3(get)]
    wall_time_secs: f64,
    csv: String,
    model: RecurrentModel,
}

#[pymethods]
impl PyRunResult {
    /// The trace as `step,phase,loss,corpus_pos` CSV text.
    fn trace_csv(&self) -> String {
        self.csv.clone()
    }

    fn model(&self) -> PyModel {
        PyModel { inner: self.model.clone() }
    }
}

/// Trains a copy of `model` on `tokens`. `config_json` holds training fields
/// (missing ones take their defaults).
#[pyfunction]
#[pyo3(signature = (model, tokens, config_json = "{}", change_points = Vec::new(), lower_bounds = Vec::new()))]
fn train_run(py: Python<'_>, model: &PyModel, tokens: Vec<usize>, config_json: &str, change_points: Vec<usize>, lower_bounds: Vec<f64>) -> PyResult<PyRunResult> {
    let config: TrainConfig = serde_json::from_str(config_json).map_err(err)?;
    let corpus = TrainCorpus {
        sequence: TokenSequence::new(tokens, model.vocab_size()).map_err(err)?,
        change_points,
        lower_bounds,
    };
    let start = model.inner.clone();
    let run = py
        .detach(|| train_run_from(&config, start, &corpus, &mut ()))
        .map_err(err)?;
    let mut csv = Vec::new();
    run.trace.write_csv(&mut csv).map_err(err)?;
    Ok(PyRunResult {
        standard_losses: run.trace.standard_losses(),
        dream_losses: run.trace.phase_losses(Phase::Dream),
        change_points: run.trace.change_points.clone(),
        dream_kl: run.dream_kl.clone(),
        wall_time_secs: run.wall_time_secs,
        csv: String::from_utf8(csv).map_err(err)?,
        model: run.model,
    })
}

#[pymodule]
fn dreamlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(sample_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_rate, m)?)?;
    m.add_function(wrap_pyfunction!(generate_markov, m)?)?;
    m.add_function(wrap_pyfunction!(softmax_with_temperature, m)?)?;
    m.add_function(wrap_pyfunction!(loss_decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(t_crit, m)?)?;
    m.add_function(wrap_pyfunction!(hurst_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(heaps_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(build_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train_run, m)?)?;
    Ok(())
}
