//! Markov-chain sources with a tunable entropy rate, and non-stationary corpora
//! built by switching the transition matrix at scripted change points.

use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::tokens::TokenSequence;

const ROW_SUM_TOL: f64 = 1e-12;
/// Floor added to every transition probability to force irreducibility.
pub const IRREDUCIBILITY_FLOOR: f64 = 1e-6;
/// Smallest reachable normalized entropy target.
pub const MIN_TARGET_ENTROPY: f64 = 0.01;
const ALPHA_RANGE: (f64, f64) = (1e-3, 1e3);
const MAX_BISECTIONS: usize = 60;
/// Fresh sub-seed sets tried before giving up.
const MAX_RESEEDS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum MarkovError {
    #[error("transition matrix needs at least 2 states, got {0}")]
    TooFewStates(usize),
    #[error("expected {expected} entries for an n x n matrix, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("row {row} is not a probability vector (sum {sum}, min {min})")]
    NotStochastic { row: usize, sum: f64, min: f64 },
    #[error("chain is reducible: stationary distribution is not unique")]
    ReducibleChain,
    #[error("normalized entropy {target} unreachable (best {best:.6}, tolerance {tolerance})")]
    EntropyUnreachable { target: f64, best: f64, tolerance: f64 },
    #[error("invalid Markov spec: {0}")]
    InvalidSpec(String),
    #[error("initial state {state} outside [0, {n_states})")]
    InitStateOutOfRange { state: usize, n_states: usize },
    #[error("sequence length must be at least 1")]
    EmptySequence,
    #[error("segment {segment} has {got} states, expected {expected}")]
    VocabMismatch { segment: usize, expected: usize, got: usize },
    #[error("regime script has no segments")]
    EmptyScript,
}

/// Row-stochastic matrix; row `i` holds P(next = j | current = i).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    n_states: usize,
    rows: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(n_states: usize, rows: Vec<f64>) -> Result<Self, MarkovError> {
        if n_states < 2 {
            return Err(MarkovError::TooFewStates(n_states));
        }
        if rows.len() != n_states * n_states {
            return Err(MarkovError::ShapeMismatch { expected: n_states * n_states, got: rows.len() });
        }
        for (i, row) in rows.chunks(n_states).enumerate() {
            let sum: f64 = row.iter().sum();
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            if !(min >= 0.0) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MarkovError::NotStochastic { row: i, sum, min });
            }
        }
        Ok(Self { n_states, rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MarkovError> {
        let n = rows.len();
        Self::new(n, rows.iter().flatten().copied().collect())
    }

    pub fn uniform(n_states: usize) -> Result<Self, MarkovError> {
        Self::new(n_states, vec![1.0 / n_states as f64; n_states * n_states])
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n_states..(i + 1) * self.n_states]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i * self.n_states + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    probs: Vec<f64>,
}

impl StationaryDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// L1 norm of `pi P - pi`.
    pub fn residual(&self, p: &TransitionMatrix) -> f64 {
        let n = p.n_states();
        (0..n)
            .map(|j| {
                let flow: f64 = (0..n).map(|i| self.probs[i] * p.get(i, j)).sum();
                (flow - self.probs[j]).abs()
            })
            .sum()
    }
}

/// Solves `pi P = pi`, `sum(pi) = 1` as one overdetermined linear system.
///
/// Gaussian elimination with partial pivoting on the (n+1) x n system
/// `[(P^T - I); 1^T] pi = [0; 1]`. A rank below n means more than one
/// stationary distribution.
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<StationaryDistribution, MarkovError> {
    let n = p.n_states();
    let rows = n + 1;
    let cols = n + 1; // augmented with the right-hand side
    let mut a = vec![0.0; rows * cols];
    for i in 0..n {
        for j in 0..n {
            a[i * cols + j] = p.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[n * cols + j] = 1.0;
    }
    a[n * cols + n] = 1.0;

    let pivot_tol = 1e-10;
    let mut pivot_rows = Vec::with_capacity(n);
    let mut r = 0;
    for c in 0..n {
        let (best, best_abs) = (r..rows)
            .map(|i| (i, a[i * cols + c].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_abs <= pivot_tol {
            return Err(MarkovError::ReducibleChain);
        }
        if best != r {
            for k in 0..cols {
                a.swap(r * cols + k, best * cols + k);
            }
        }
        let piv = a[r * cols + c];
        for i in (r + 1)..rows {
            let f = a[i * cols + c] / piv;
            if f != 0.0 {
                for k in c..cols {
                    a[i * cols + k] -= f * a[r * cols + k];
                }
            }
        }
        pivot_rows.push(r);
        r += 1;
    }

    let mut pi = vec![0.0; n];
    for c in (0..n).rev() {
        let row = pivot_rows[c];
        let mut acc = a[row * cols + n];
        for k in (c + 1)..n {
            acc -= a[row * cols + k] * pi[k];
        }
        pi[c] = acc / a[row * cols + c];
    }
    // Clamp roundoff negatives and renormalize.
    for v in pi.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    Ok(StationaryDistribution { probs: pi })
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn shannon_entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&q| q > 0.0).map(|&q| q * q.ln()).sum::<f64>()
}

pub fn normalized_entropy(dist: &StationaryDistribution) -> f64 {
    shannon_entropy(&dist.probs) / (dist.probs.len() as f64).ln()
}

/// Entropy rate `sum_i pi_i H(row_i)` in nats per token.
pub fn entropy_rate(p: &TransitionMatrix) -> Result<f64, MarkovError> {
    let pi = stationary_distribution(p)?;
    Ok(entropy_rate_with(p, &pi))
}

fn entropy_rate_with(p: &TransitionMatrix, pi: &StationaryDistribution) -> f64 {
    (0..p.n_states()).map(|i| pi.probs[i] * shannon_entropy(p.row(i))).sum()
}

pub fn normalized_entropy_rate(p: &TransitionMatrix) -> Result<f64, MarkovError> {
    Ok(entropy_rate(p)? / (p.n_states() as f64).ln())
}

/// Parameters for a Markov source with a target normalized entropy rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub n_states: usize,
    pub target_norm_entropy: f64,
    pub entropy_tolerance: f64,
    pub seed: u64,
}

impl MarkovSpec {
    pub fn validate(&self) -> Result<(), MarkovError> {
        if self.n_states < 2 {
            return Err(MarkovError::TooFewStates(self.n_states));
        }
        if !(0.0..=1.0).contains(&self.target_norm_entropy) {
            return Err(MarkovError::InvalidSpec(format!(
                "target_norm_entropy {} outside [0, 1]",
                self.target_norm_entropy
            )));
        }
        if !(self.entropy_tolerance > 0.0 && self.entropy_tolerance <= 0.05) {
            return Err(MarkovError::InvalidSpec(format!(
                "entropy_tolerance {} outside (0, 0.05]",
                self.entropy_tolerance
            )));
        }
        Ok(())
    }

    /// Builds the matrix from this spec's own seed.
    pub fn build(&self) -> Result<TransitionMatrix, MarkovError> {
        sample_matrix_with_entropy(self, &mut rng::seeded(self.seed))
    }
}

/// One Dirichlet(alpha) row drawn with a fixed sub-seed, floored and renormalized.
///
/// Uses `G = G1 * U^(1/alpha)` with `G1 ~ Gamma(alpha + 1)` in log space, so
/// tiny concentrations do not underflow to an all-zero row.
fn dirichlet_row(n: usize, alpha: f64, sub_seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(sub_seed);
    let gamma = Gamma::new(alpha + 1.0, 1.0).expect("alpha + 1 > 0");
    let logs: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = gamma.sample(&mut r);
            let u: f64 = r.random::<f64>().max(f64::MIN_POSITIVE);
            g.max(f64::MIN_POSITIVE).ln() + u.ln() / alpha
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    let denom = 1.0 + n as f64 * IRREDUCIBILITY_FLOOR;
    w.iter().map(|x| (x / s + IRREDUCIBILITY_FLOOR) / denom).collect()
}

fn dirichlet_matrix(n: usize, alpha: f64, sub_seeds: &[u64]) -> TransitionMatrix {
    let mut rows: Vec<f64> = Vec::with_capacity(n * n);
    for &s in sub_seeds {
        let mut row = dirichlet_row(n, alpha, s);
        // Exact renormalization so row sums pass the 1e-12 check.
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= sum);
        rows.extend(row);
    }
    TransitionMatrix { n_states: n, rows }
}

/// Samples an irreducible transition matrix whose normalized entropy rate is
/// within `spec.entropy_tolerance` of `spec.target_norm_entropy`.
///
/// Rows are symmetric Dirichlet draws with fixed per-row sub-seeds; the shared
/// concentration is bisected in log space.
pub fn sample_matrix_with_entropy<R: RngCore>(spec: &MarkovSpec, rng: &mut R) -> Result<TransitionMatrix, MarkovError> {
    spec.validate()?;
    let n = spec.n_states;
    let target = spec.target_norm_entropy;
    let tol = spec.entropy_tolerance;
    let unreachable = |best: f64| MarkovError::EntropyUnreachable { target, best, tolerance: tol };
    if target < MIN_TARGET_ENTROPY {
        return Err(unreachable(f64::NAN));
    }
    if (1.0 - target).abs() <= tol && target >= 1.0 - 1e-9 {
        return TransitionMatrix::uniform(n);
    }

    let mut best: Option<(TransitionMatrix, f64)> = None;
    for _ in 0..MAX_RESEEDS {
        let sub_seeds: Vec<u64> = (0..n).map(|_| rng.next_u64()).collect();
        if let Some(found) = bisect_alpha(n, target, tol, &sub_seeds, &mut best)? {
            return Ok(found);
        }
    }
    Err(unreachable(best.map_or(f64::NAN, |b| b.1)))
}

/// Bisects the shared concentration for one set of row sub-seeds. Gamma
/// draws consume a variable number of random words, so entropy can jump as
/// alpha moves and bisection may straddle the tolerance band; the caller then
/// retries with fresh sub-seeds.
fn bisect_alpha(
    n: usize,
    target: f64,
    tol: f64,
    sub_seeds: &[u64],
    best: &mut Option<(TransitionMatrix, f64)>,
) -> Result<Option<TransitionMatrix>, MarkovError> {
    let eval = |log_alpha: f64| -> Result<(TransitionMatrix, f64), MarkovError> {
        let m = dirichlet_matrix(n, log_alpha.exp(), sub_seeds);
        let h = normalized_entropy_rate(&m)?;
        Ok((m, h))
    };
    let consider = |cand: (TransitionMatrix, f64), best: &mut Option<(TransitionMatrix, f64)>| {
        if best.as_ref().is_none_or(|(_, h)| (cand.1 - target).abs() < (h - target).abs()) {
            *best = Some(cand);
        }
    };
    let hit = |c: &(TransitionMatrix, f64)| (c.1 - target).abs() <= tol;

    let mut lo = ALPHA_RANGE.0.ln();
    let mut hi = ALPHA_RANGE.1.ln();
    let (m_lo, h_lo) = eval(lo)?;
    let (m_hi, h_hi) = eval(hi)?;
    for c in [(m_lo, h_lo), (m_hi, h_hi)] {
        if hit(&c) {
            return Ok(Some(c.0));
        }
        consider(c, best);
    }
    if target < h_lo - tol || target > h_hi + tol {
        return Ok(None);
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let c = eval(mid)?;
        if hit(&c) {
            return Ok(Some(c.0));
        }
        if c.1 < target {
            lo = mid;
        } else {
            hi = mid;
        }
        consider(c, best);
    }
    Ok(None)
}

/// Samples a trajectory. The first token is `init_state` or a draw from the
/// stationary distribution.
pub fn generate_sequence<R: RngCore>(
    p: &TransitionMatrix,
    length: usize,
    rng: &mut R,
    init_state: Option<usize>,
) -> Result<TokenSequence, MarkovError> {
    if length == 0 {
        return Err(MarkovError::EmptySequence);
    }
    let n = p.n_states();
    let first = match init_state {
        Some(s) if s >= n => return Err(MarkovError::InitStateOutOfRange { state: s, n_states: n }),
        Some(s) => s,
        None => draw(stationary_distribution(p)?.probs(), rng),
    };
    let mut tokens = Vec::with_capacity(length);
    tokens.push(first);
    let mut cur = first;
    for _ in 1..length {
        cur = draw(p.row(cur), rng);
        tokens.push(cur);
    }
    Ok(TokenSequence::new(tokens, n).expect("states are in range"))
}

fn draw<R: RngCore>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the roundoff gap above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(flatten)]
    pub spec: MarkovSpec,
    pub length: usize,
}

/// Ordered Markov regimes. Serialized as `{"segments": [{n_states, target_norm_entropy, entropy_tolerance, seed, length}, ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeScript {
    pub segments: Vec<Segment>,
}

impl RegimeScript {
    /// Absolute index at which each segment after the first starts.
    pub fn change_points(&self) -> Vec<usize> {
        self.segments
            .iter()
            .scan(0usize, |acc, s| {
                *acc += s.length;
                Some(*acc)
            })
            .take(self.segments.len().saturating_sub(1))
            .collect()
    }

    pub fn total_len(&self) -> usize {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn validate(&self) -> Result<(), MarkovError> {
        let first = self.segments.first().ok_or(MarkovError::EmptyScript)?;
        for (k, seg) in self.segments.iter().enumerate() {
            seg.spec.validate()?;
            if seg.length == 0 {
                return Err(MarkovError::EmptySequence);
            }
            if seg.spec.n_states != first.spec.n_states {
                return Err(MarkovError::VocabMismatch {
                    segment: k,
                    expected: first.spec.n_states,
                    got: seg.spec.n_states,
                });
            }
        }
        Ok(())
    }
}

/// Statistics of one regime, attached to the corpus for downstream bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub matrix: TransitionMatrix,
    /// nats per token
    pub entropy_rate: f64,
    pub normalized_entropy_rate: f64,
    /// normalized entropy of the stationary distribution
    pub stationary_entropy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeCorpus {
    pub sequence: TokenSequence,
    pub change_points: Vec<usize>,
    pub segments: Vec<SegmentInfo>,
}

impl RegimeCorpus {
    pub fn lower_bounds(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.entropy_rate).collect()
    }
}

/// Concatenates per-segment trajectories. Each segment after the first
/// continues from the final state of the previous one.
pub fn build_regime_corpus<R: RngCore>(script: &RegimeScript, rng: &mut R) -> Result<RegimeCorpus, MarkovError> {
    script.validate()?;
    let n = script.segments[0].spec.n_states;
    let mut tokens = Vec::with_capacity(script.total_len());
    let mut infos = Vec::with_capacity(script.segments.len());
    for seg in &script.segments {
        let m = seg.spec.build()?;
        let pi = stationary_distribution(&m)?;
        let rate = entropy_rate_with(&m, &pi);
        let part = match tokens.last() {
            None => generate_sequence(&m, seg.length, rng, None)?.into_tokens(),
            Some(&last) => {
                let mut t = generate_sequence(&m, seg.length + 1, rng, Some(last))?.into_tokens();
                t.remove(0);
                t
            }
        };
        tokens.extend(part);
        infos.push(SegmentInfo {
            entropy_rate: rate,
            normalized_entropy_rate: rate / (n as f64).ln(),
            stationary_entropy: normalized_entropy(&pi),
            matrix: m,
        });
    }
    Ok(RegimeCorpus {
        sequence: TokenSequence::new(tokens, n).expect("states are in range"),
        change_points: script.change_points(),
        segments: infos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tm(rows: &[&[f64]]) -> TransitionMatrix {
        TransitionMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_matrix(n: usize, seed: u64) -> TransitionMatrix {
        let mut r = rng::seeded(seed);
        let rows: Vec<f64> = (0..n)
            .flat_map(|_| {
                let w: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 1e-3).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(move |x| x / s)
            })
            .collect();
        let mut m = TransitionMatrix { n_states: n, rows };
        for i in 0..n {
            let s: f64 = m.row(i).iter().sum();
            m.rows[i * n..(i + 1) * n].iter_mut().for_each(|x| *x /= s);
        }
        m
    }

    #[test]
    fn rejects_bad_matrices() {
        assert_eq!(TransitionMatrix::new(1, vec![1.0]), Err(MarkovError::TooFewStates(1)));
        assert!(matches!(
            TransitionMatrix::new(2, vec![0.5, 0.6, 0.5, 0.5]),
            Err(MarkovError::NotStochastic { row: 0, .. })
        ));
        assert!(matches!(
            TransitionMatrix::new(2, vec![1.5, -0.5, 0.5, 0.5]),
            Err(MarkovError::NotStochastic { row: 0, .. })
        ));
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&tm(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap();
        assert!((pi.probs()[0] - 0.5).abs() < 1e-12);
        let pi = stationary_distribution(&tm(&[&[0.9, 0.1], &[0.5, 0.5]])).unwrap();
        assert!((pi.probs()[0] - 5.0 / 6.0).abs() < 1e-12);
        assert!((pi.probs()[1] - 1.0 / 6.0).abs() < 1e-12);
        // periodic chain: power iteration would oscillate
        let pi = stationary_distribution(&tm(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((pi.probs()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let id = tm(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert_eq!(stationary_distribution(&id), Err(MarkovError::ReducibleChain));
        let blocks = tm(&[&[0.5, 0.5, 0.0, 0.0], &[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.3, 0.7], &[0.0, 0.0, 0.6, 0.4]]);
        assert_eq!(entropy_rate(&blocks), Err(MarkovError::ReducibleChain));
    }

    #[test]
    fn transient_state_still_has_unique_distribution() {
        let pi = stationary_distribution(&tm(&[&[0.0, 1.0], &[0.0, 1.0]])).unwrap();
        assert!((pi.probs()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_entropy_examples() {
        let uniform = StationaryDistribution { probs: vec![0.25; 4] };
        assert!((normalized_entropy(&uniform) - 1.0).abs() < 1e-12);
        let delta = StationaryDistribution { probs: vec![0.0, 1.0, 0.0] };
        assert_eq!(normalized_entropy(&delta), 0.0);
        let d = StationaryDistribution { probs: vec![0.5, 0.25, 0.25] };
        // -(0.5 ln 0.5 + 0.5 ln 0.25) / ln 3
        let expected = (0.5 * 2f64.ln() + 0.5 * 4f64.ln()) / 3f64.ln();
        assert!((normalized_entropy(&d) - expected).abs() < 1e-12);
        assert!((normalized_entropy(&d) - 0.94640).abs() < 1e-5);
    }

    #[test]
    fn entropy_rate_examples() {
        let coin = entropy_rate(&tm(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap();
        assert!((coin - 2f64.ln()).abs() < 1e-12);
        assert_eq!(entropy_rate(&tm(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap(), 0.0);
        let h = entropy_rate(&tm(&[&[0.9, 0.1], &[0.5, 0.5]])).unwrap();
        let row0 = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
        assert!((h - (5.0 / 6.0 * row0 + 1.0 / 6.0 * 2f64.ln())).abs() < 1e-12);
        assert!((h - 0.38642).abs() < 1e-5);
    }

    #[test]
    fn entropy_one_gives_uniform_rows() {
        let spec = MarkovSpec { n_states: 8, target_norm_entropy: 1.0, entropy_tolerance: 1e-6, seed: 1 };
        let m = spec.build().unwrap();
        assert!(m.as_slice().iter().all(|&x| (x - 0.125).abs() < 1e-15));
    }

    #[test]
    fn entropy_zero_is_unreachable() {
        let spec = MarkovSpec { n_states: 8, target_norm_entropy: 0.0, entropy_tolerance: 0.01, seed: 1 };
        assert!(matches!(spec.build(), Err(MarkovError::EntropyUnreachable { .. })));
    }

    #[test]
    fn hits_target_entropy_seed_7() {
        let spec = MarkovSpec { n_states: 10, target_norm_entropy: 0.3, entropy_tolerance: 0.01, seed: 7 };
        let m = spec.build().unwrap();
        let h = normalized_entropy_rate(&m).unwrap();
        assert!((0.29..=0.31).contains(&h), "h = {h}");
        // floor keeps every transition possible
        assert!(m.as_slice().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn spec_validation() {
        let mut spec = MarkovSpec { n_states: 10, target_norm_entropy: 0.3, entropy_tolerance: 0.06, seed: 7 };
        assert!(matches!(spec.validate(), Err(MarkovError::InvalidSpec(_))));
        spec.entropy_tolerance = 0.01;
        spec.target_norm_entropy = 1.2;
        assert!(matches!(spec.validate(), Err(MarkovError::InvalidSpec(_))));
    }

    #[test]
    fn deterministic_cycle_sequence() {
        let cyc = tm(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let s = generate_sequence(&cyc, 5, &mut rng::seeded(0), Some(0)).unwrap();
        assert_eq!(s.tokens(), &[0, 1, 0, 1, 0]);
    }

    #[test]
    fn length_one_sequence_is_init_state() {
        let m = random_matrix(5, 3);
        let s = generate_sequence(&m, 1, &mut rng::seeded(0), Some(3)).unwrap();
        assert_eq!(s.tokens(), &[3]);
        assert!(matches!(
            generate_sequence(&m, 1, &mut rng::seeded(0), Some(5)),
            Err(MarkovError::InitStateOutOfRange { .. })
        ));
        assert_eq!(generate_sequence(&m, 0, &mut rng::seeded(0), None), Err(MarkovError::EmptySequence));
    }

    #[test]
    fn empirical_frequencies_match_stationary() {
        let m = tm(&[&[0.9, 0.1], &[0.5, 0.5]]);
        let s = generate_sequence(&m, 100_000, &mut rng::seeded(11), None).unwrap();
        let f = s.unigram_frequencies();
        assert!((f[0] - 5.0 / 6.0).abs() < 0.01, "{f:?}");
        assert!((f[1] - 1.0 / 6.0).abs() < 0.01, "{f:?}");
    }

    #[test]
    fn sequences_are_reproducible() {
        let m = random_matrix(6, 9);
        let a = generate_sequence(&m, 500, &mut rng::seeded(5), None).unwrap();
        let b = generate_sequence(&m, 500, &mut rng::seeded(5), None).unwrap();
        assert_eq!(a, b);
    }

    fn seg(h: f64, length: usize, seed: u64) -> Segment {
        Segment {
            spec: MarkovSpec { n_states: 10, target_norm_entropy: h, entropy_tolerance: 0.01, seed },
            length,
        }
    }

    #[test]
    fn change_points_arithmetic() {
        let script = RegimeScript { segments: vec![seg(0.3, 5, 1), seg(0.5, 5, 2), seg(0.6, 5, 3)] };
        assert_eq!(script.change_points(), vec![5, 10]);
        let single = RegimeScript { segments: vec![seg(0.3, 40, 1)] };
        let c = build_regime_corpus(&single, &mut rng::seeded(0)).unwrap();
        assert_eq!(c.sequence.len(), 40);
        assert!(c.change_points.is_empty());
    }

    #[test]
    fn two_regime_corpus_entropy_rises_after_shift() {
        let script = RegimeScript { segments: vec![seg(0.3, 10_000, 1), seg(0.6, 10_000, 2)] };
        let c = build_regime_corpus(&script, &mut rng::seeded(0)).unwrap();
        assert_eq!(c.change_points, vec![10_000]);
        assert_eq!(c.sequence.len(), 20_000);
        // empirical conditional entropy from bigram counts, per half
        let cond_entropy = |t: &[usize]| {
            let mut counts = vec![0.0f64; 100];
            for w in t.windows(2) {
                counts[w[0] * 10 + w[1]] += 1.0;
            }
            let total: f64 = counts.iter().sum();
            let mut h = 0.0;
            for i in 0..10 {
                let row = &counts[i * 10..(i + 1) * 10];
                let rs: f64 = row.iter().sum();
                if rs > 0.0 {
                    let p: Vec<f64> = row.iter().map(|c| c / rs).collect();
                    h += rs / total * shannon_entropy(&p);
                }
            }
            h
        };
        let before = cond_entropy(&c.sequence.tokens()[..10_000]);
        let after = cond_entropy(&c.sequence.tokens()[10_000..]);
        assert!(after > before + 0.3, "before {before}, after {after}");
        assert!((c.segments[0].normalized_entropy_rate - 0.3).abs() <= 0.01);
        assert!((c.segments[1].normalized_entropy_rate - 0.6).abs() <= 0.01);
    }

    #[test]
    fn vocab_mismatch_is_rejected() {
        let mut other = seg(0.5, 10, 2);
        other.spec.n_states = 6;
        let script = RegimeScript { segments: vec![seg(0.3, 10, 1), other] };
        assert!(matches!(
            build_regime_corpus(&script, &mut rng::seeded(0)),
            Err(MarkovError::VocabMismatch { segment: 1, expected: 10, got: 6 })
        ));
    }

    #[test]
    fn script_json_shape() {
        let json = r#"{"segments":[{"n_states":10,"target_norm_entropy":0.3,"entropy_tolerance":0.01,"seed":7,"length":10000}]}"#;
        let script: RegimeScript = serde_json::from_str(json).unwrap();
        assert_eq!(script.segments[0].length, 10_000);
        assert_eq!(script.segments[0].spec.seed, 7);
        let back: serde_json::Value = serde_json::to_value(&script).unwrap();
        assert_eq!(back, serde_json::from_str::<serde_json::Value>(json).unwrap());
    }

    #[test]
    fn stationary_residual_on_many_random_chains() {
        for k in 0..1000u64 {
            let n = 2 + (k as usize % 15);
            let m = random_matrix(n, k);
            let pi = stationary_distribution(&m).unwrap();
            assert!(pi.residual(&m) < 1e-10, "k={k} residual={}", pi.residual(&m));
            assert!((pi.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sampled_matrices_are_stochastic(n in 2usize..12, h in 0.1f64..0.9, seed in any::<u64>()) {
            let spec = MarkovSpec { n_states: n, target_norm_entropy: h, entropy_tolerance: 0.02, seed };
            if let Ok(m) = spec.build() {
                for i in 0..n {
                    let s: f64 = m.row(i).iter().sum();
                    prop_assert!((s - 1.0).abs() <= 1e-12);
                    prop_assert!(m.row(i).iter().all(|&x| x >= 0.0));
                }
                let hr = normalized_entropy_rate(&m).unwrap();
                prop_assert!((hr - h).abs() <= 0.02);
            }
        }

        #[test]
        fn entropy_rate_is_bounded(n in 2usize..10, seed in any::<u64>()) {
            let m = random_matrix(n, seed);
            let h = entropy_rate(&m).unwrap();
            prop_assert!(h >= 0.0 && h <= (n as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn entropy_rate_max_iff_uniform() {
        let u = TransitionMatrix::uniform(7).unwrap();
        assert!((entropy_rate(&u).unwrap() - 7f64.ln()).abs() < 1e-12);
        let m = random_matrix(7, 1);
        assert!(entropy_rate(&m).unwrap() < 7f64.ln() - 1e-6);
    }
}
