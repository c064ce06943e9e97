//! Critical times, ratio curves, long-memory and vocabulary-growth exponents,
//! and the entropy/KL split of a cross entropy.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::tokens::TokenSequence;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("invalid critical-time spec: {0}")]
    InvalidSpec(String),
    #[error("loss never settled within the margin of the lower bound")]
    NotReached,
    #[error("no pair has a critical time in both arms")]
    NoValidPairs,
    #[error("series of length {len} is shorter than the required {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("only {got} usable scales, need at least {min}")]
    TooFewScales { got: usize, min: usize },
    #[error("series has no variance at any scale")]
    DegenerateSeries,
    #[error("vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("not a probability vector: {0}")]
    NotProbability(String),
    #[error("Q is zero at index {index} where P is positive")]
    SupportMismatch { index: usize },
}

/// How the settling time after a regime shift is read off a loss trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CritTimeSpec {
    /// Relative margin above the lower bound.
    pub epsilon_rel: f64,
    /// Centered moving-average width, in steps.
    pub smooth_window: usize,
    /// Consecutive smoothed points that must sit under the threshold.
    pub sustain: usize,
}

impl Default for CritTimeSpec {
    fn default() -> Self {
        Self { epsilon_rel: 0.1, smooth_window: 51, sustain: 3 }
    }
}

impl CritTimeSpec {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.epsilon_rel > 0.0 && self.epsilon_rel <= 0.5) {
            return Err(MetricsError::InvalidSpec(format!("epsilon_rel {} outside (0, 0.5]", self.epsilon_rel)));
        }
        if self.smooth_window == 0 || self.sustain == 0 {
            return Err(MetricsError::InvalidSpec("smooth_window and sustain must be >= 1".into()));
        }
        Ok(())
    }
}

/// Centered moving average; entry `i` is centered on `i + window / 2`.
pub fn centered_moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || xs.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(xs.len() - window + 1);
    let mut acc: f64 = xs[..window].iter().sum();
    out.push(acc / window as f64);
    for i in window..xs.len() {
        acc += xs[i] - xs[i - window];
        out.push(acc / window as f64);
    }
    out
}

/// Steps after the start of `losses` until the smoothed loss stays at or below
/// `lower_bound * (1 + epsilon_rel)` for `sustain` consecutive points.
///
/// `losses` are the standard-phase losses from the change point on. The
/// returned index is the center of the first qualifying window, so a trace
/// sitting on its bound from the start gives `smooth_window / 2`.
pub fn t_crit(losses: &[f64], lower_bound: f64, spec: &CritTimeSpec) -> Result<usize, MetricsError> {
    spec.validate()?;
    let threshold = lower_bound * (1.0 + spec.epsilon_rel);
    let smoothed = centered_moving_average(losses, spec.smooth_window);
    let mut run = 0;
    for (i, &s) in smoothed.iter().enumerate() {
        if s <= threshold {
            run += 1;
            if run == spec.sustain {
                return Ok(i + 1 - spec.sustain + spec.smooth_window / 2);
            }
        } else {
            run = 0;
        }
    }
    Err(MetricsError::NotReached)
}

/// Critical times of one run on both sides of a regime shift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCrit {
    pub vanilla: Option<usize>,
    pub dreaming: Option<usize>,
}

impl PairCrit {
    /// `t_vanilla / t_dreaming` with both clamped to at least one step.
    pub fn ratio(&self) -> Option<f64> {
        match (self.vanilla, self.dreaming) {
            (Some(v), Some(d)) => Some(v.max(1) as f64 / d.max(1) as f64),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub temperature: f64,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub n_pairs: usize,
    /// Pairs dropped because an arm never reached its bound.
    pub n_excluded: usize,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One ratio point from the pairs run at `temperature`.
pub fn ratio_point(temperature: f64, pairs: &[PairCrit]) -> Result<RatioPoint, MetricsError> {
    let ratios: Vec<f64> = pairs.iter().filter_map(PairCrit::ratio).collect();
    if ratios.is_empty() {
        return Err(MetricsError::NoValidPairs);
    }
    let (mean_ratio, std_ratio) = mean_std(&ratios);
    Ok(RatioPoint { temperature, mean_ratio, std_ratio, n_pairs: ratios.len(), n_excluded: pairs.len() - ratios.len() })
}

/// Ratio points for each `(T_s, pairs)` cell, in input order.
pub fn ratio_curve(cells: &[(f64, Vec<PairCrit>)]) -> Result<Vec<RatioPoint>, MetricsError> {
    cells.iter().map(|(t, pairs)| ratio_point(*t, pairs)).collect()
}

/// Percentile bootstrap interval for the mean: `(lo, hi)` at the `alpha/2` and
/// `1 - alpha/2` quantiles of resampled means.
pub fn bootstrap_mean_ci(xs: &[f64], alpha: f64, resamples: usize, seed: u64) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut r = rng::derived(seed, rng::stream::BOOTSTRAP);
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..xs.len()).map(|_| xs[r.random_range(0..xs.len())]).sum::<f64>() / xs.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| means[((p * (means.len() - 1) as f64).round() as usize).min(means.len() - 1)];
    (q(alpha / 2.0), q(1.0 - alpha / 2.0))
}

/// Lower one-sided bootstrap bound for the mean at level `1 - alpha`.
pub fn bootstrap_mean_lower(xs: &[f64], alpha: f64, resamples: usize, seed: u64) -> f64 {
    bootstrap_mean_ci(xs, 2.0 * alpha, resamples, seed).0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub exponent: f64,
    pub stderr: f64,
    pub fit_range: (f64, f64),
    pub r_squared: f64,
    pub n_points: usize,
}

pub const MIN_FIT_POINTS: usize = 5;

/// Least-squares slope of `ys` against `xs`.
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    let stderr = if xs.len() > 2 { (ss_res / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, stderr, r2)
}

fn log_log_fit(points: &[(f64, f64)]) -> Result<ExponentEstimate, MetricsError> {
    if points.len() < MIN_FIT_POINTS {
        return Err(MetricsError::TooFewScales { got: points.len(), min: MIN_FIT_POINTS });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (exponent, stderr, r_squared) = fit_line(&xs, &ys);
    Ok(ExponentEstimate {
        exponent,
        stderr,
        fit_range: (points[0].0, points[points.len() - 1].0),
        r_squared,
        n_points: points.len(),
    })
}

/// `count` distinct integers spaced geometrically from `min` to `max` inclusive.
pub fn geometric_scales(min: usize, max: usize, count: usize) -> Vec<usize> {
    if min == 0 || max < min || count == 0 {
        return Vec::new();
    }
    if count == 1 {
        return vec![min];
    }
    let ratio = (max as f64 / min as f64).ln() / (count - 1) as f64;
    let mut out: Vec<usize> = (0..count).map(|i| (min as f64 * (ratio * i as f64).exp()).round() as usize).collect();
    out.dedup();
    out
}

pub const HURST_MIN_LEN: usize = 1 << 10;
pub const HURST_MIN_SCALE: usize = 16;

/// Default Hurst grid: 12 geometric scales from 16 to `len / 4`.
pub fn hurst_scales(len: usize) -> Vec<usize> {
    geometric_scales(HURST_MIN_SCALE, len / 4, 12)
}

fn rescaled_range(block: &[f64]) -> Option<f64> {
    let n = block.len() as f64;
    let mean = block.iter().sum::<f64>() / n;
    let var = block.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return None;
    }
    let (mut cum, mut lo, mut hi) = (0.0f64, 0.0f64, 0.0f64);
    for x in block {
        cum += x - mean;
        lo = lo.min(cum);
        hi = hi.max(cum);
    }
    Some((hi - lo) / var.sqrt())
}

/// Classical rescaled-range exponent: slope of log mean R/S against log block size.
///
/// Zero-variance blocks are skipped; a scale whose blocks are all skipped is dropped.
pub fn hurst_exponent(series: &[f64], scales: &[usize]) -> Result<ExponentEstimate, MetricsError> {
    if series.len() < HURST_MIN_LEN {
        return Err(MetricsError::SeriesTooShort { len: series.len(), min: HURST_MIN_LEN });
    }
    let usable: Vec<usize> = scales.iter().copied().filter(|&n| n >= 2 && n <= series.len()).collect();
    let mut points = Vec::with_capacity(usable.len());
    for &n in &usable {
        let rs: Vec<f64> = series.chunks_exact(n).filter_map(rescaled_range).collect();
        if !rs.is_empty() {
            points.push((n as f64, rs.iter().sum::<f64>() / rs.len() as f64));
        }
    }
    if points.is_empty() && !usable.is_empty() {
        return Err(MetricsError::DegenerateSeries);
    }
    log_log_fit(&points)
}

/// Token-to-real mapping used before R/S analysis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenMapping {
    /// `-ln` of the token's empirical unigram frequency.
    #[default]
    NegLogFrequency,
    /// Frequency rank, 1 for the most common token.
    Rank,
}

pub fn token_series(tokens: &TokenSequence, mapping: TokenMapping) -> Vec<f64> {
    let freqs = tokens.unigram_frequencies();
    let value: Vec<f64> = match mapping {
        TokenMapping::NegLogFrequency => freqs.iter().map(|&f| if f > 0.0 { -f.ln() } else { 0.0 }).collect(),
        TokenMapping::Rank => {
            let mut order: Vec<usize> = (0..freqs.len()).collect();
            order.sort_by(|&a, &b| freqs[b].total_cmp(&freqs[a]).then(a.cmp(&b)));
            let mut rank = vec![0.0; freqs.len()];
            for (r, &t) in order.iter().enumerate() {
                rank[t] = (r + 1) as f64;
            }
            rank
        }
    };
    tokens.tokens().iter().map(|&t| value[t]).collect()
}

/// Hurst exponent of a token sequence on the default grid.
pub fn token_hurst(tokens: &TokenSequence, mapping: TokenMapping) -> Result<ExponentEstimate, MetricsError> {
    hurst_exponent(&token_series(tokens, mapping), &hurst_scales(tokens.len()))
}

pub const HEAPS_MIN_LEN: usize = 10_000;
const HEAPS_GRID: usize = 24;

/// Distinct tokens among the first `n` of `tokens` for each `n` in `grid` (ascending).
pub fn vocabulary_growth(tokens: &[usize], grid: &[usize]) -> Vec<usize> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(grid.len());
    let mut i = 0;
    for &n in grid {
        while i < n.min(tokens.len()) {
            seen.insert(tokens[i]);
            i += 1;
        }
        out.push(seen.len());
    }
    out
}

/// Slope of log V(n) against log n over the upper half of a geometric grid.
pub fn heaps_exponent(tokens: &TokenSequence) -> Result<ExponentEstimate, MetricsError> {
    let len = tokens.len();
    if len < HEAPS_MIN_LEN {
        return Err(MetricsError::SeriesTooShort { len, min: HEAPS_MIN_LEN });
    }
    let grid = geometric_scales(10, len, HEAPS_GRID);
    let v = vocabulary_growth(tokens.tokens(), &grid);
    let half = grid.len() / 2;
    let points: Vec<(f64, f64)> = grid[half..].iter().zip(&v[half..]).map(|(&n, &k)| (n as f64, k as f64)).collect();
    log_log_fit(&points)
}

fn check_probability(p: &[f64], name: &str) -> Result<(), MetricsError> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(MetricsError::NotProbability(format!("{name} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(MetricsError::NotProbability(format!("{name} sums to {s}")));
    }
    Ok(())
}

/// Splits the cross entropy `H(P, Q)` into `(H(P), KL(P || Q))`, in nats.
pub fn loss_decomposition(p: &[f64], q: &[f64]) -> Result<(f64, f64), MetricsError> {
    if p.len() != q.len() {
        return Err(MetricsError::LengthMismatch(p.len(), q.len()));
    }
    check_probability(p, "P")?;
    check_probability(q, "Q")?;
    let mut entropy = 0.0;
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(MetricsError::SupportMismatch { index: i });
            }
            let lp = pi.ln();
            entropy -= pi * lp;
            kl += pi * (lp - qi.ln());
        }
    }
    Ok((entropy, kl.max(0.0)))
}

/// Cross entropy `-sum P ln Q`.
pub fn cross_entropy_of(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(&pi, _)| pi > 0.0).map(|(&pi, &qi)| -pi * qi.ln()).sum()
}

/// Share of the gap between `baseline` and `reference` closed by `improved`.
pub fn relative_gap_closure(baseline: f64, improved: f64, reference: f64) -> f64 {
    (improved - baseline) / (reference - baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_trace_settles_at_first_window() {
        let spec = CritTimeSpec::default();
        assert_eq!(t_crit(&vec![1.3; 400], 1.3, &spec), Ok(25));
        assert_eq!(t_crit(&vec![2.6; 400], 1.3, &spec), Err(MetricsError::NotReached));
        assert_eq!(t_crit(&vec![1.3; 10], 1.3, &spec), Err(MetricsError::NotReached));
    }

    #[test]
    fn exponential_decay_crossing() {
        let b = 0.9;
        let spec = CritTimeSpec::default();
        for tau in [50.0, 120.0, 300.0] {
            let losses: Vec<f64> = (0..3000).map(|t| b * (1.0 + 0.5 * (-(t as f64) / tau).exp())).collect();
            let exact = (tau * 5f64.ln()).ceil() as i64;
            let got = t_crit(&losses, b, &spec).unwrap() as i64;
            assert!((got - exact).abs() <= spec.smooth_window as i64, "tau {tau}: {got} vs {exact}");
        }
    }

    #[test]
    fn looser_margin_never_takes_longer() {
        let losses: Vec<f64> = (0..2000).map(|t| 1.0 + 2.0 * (-(t as f64) / 200.0).exp()).collect();
        let tight = t_crit(&losses, 1.0, &CritTimeSpec { epsilon_rel: 0.05, ..Default::default() }).unwrap();
        let loose = t_crit(&losses, 1.0, &CritTimeSpec { epsilon_rel: 0.2, ..Default::default() }).unwrap();
        assert!(tight >= loose);
    }

    #[test]
    fn spec_validation() {
        for bad in [
            CritTimeSpec { epsilon_rel: 0.0, ..Default::default() },
            CritTimeSpec { epsilon_rel: 0.6, ..Default::default() },
            CritTimeSpec { sustain: 0, ..Default::default() },
        ] {
            assert!(matches!(t_crit(&[1.0], 1.0, &bad), Err(MetricsError::InvalidSpec(_))));
        }
    }

    #[test]
    fn identical_arms_give_unit_ratio() {
        let pairs: Vec<PairCrit> = [3, 40, 200, 0].iter().map(|&t| PairCrit { vanilla: Some(t), dreaming: Some(t) }).collect();
        let p = ratio_point(1.5, &pairs).unwrap();
        assert_eq!((p.mean_ratio, p.std_ratio, p.n_pairs), (1.0, 0.0, 4));
    }

    #[test]
    fn unreached_pairs_are_excluded() {
        let pairs = vec![
            PairCrit { vanilla: Some(100), dreaming: Some(50) },
            PairCrit { vanilla: None, dreaming: Some(50) },
            PairCrit { vanilla: Some(100), dreaming: None },
        ];
        let p = ratio_point(2.0, &pairs).unwrap();
        assert_eq!((p.mean_ratio, p.n_pairs, p.n_excluded), (2.0, 1, 2));
        assert_eq!(ratio_point(2.0, &pairs[1..]), Err(MetricsError::NoValidPairs));
        assert_eq!(ratio_curve(&[(1.0, pairs.clone()), (2.0, pairs)]).unwrap().len(), 2);
    }

    #[test]
    fn bootstrap_brackets_the_mean() {
        let xs: Vec<f64> = (0..30).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let (lo, hi) = bootstrap_mean_ci(&xs, 0.05, 2000, 1);
        let (m, _) = mean_std(&xs);
        assert!(lo < m && m < hi);
        assert!(bootstrap_mean_lower(&xs, 0.05, 2000, 1) >= lo);
        assert_eq!(bootstrap_mean_ci(&[2.0; 5], 0.05, 100, 0), (2.0, 2.0));
    }

    #[test]
    fn white_noise_hurst_near_half() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let hs: Vec<f64> = (0..20)
            .map(|s| {
                let mut r = rng::seeded(s);
                let x: Vec<f64> = (0..1 << 14).map(|_| normal.sample(&mut r)).collect();
                hurst_exponent(&x, &hurst_scales(x.len())).unwrap().exponent
            })
            .collect();
        let (m, _) = mean_std(&hs);
        assert!((m - 0.5).abs() < 0.05, "mean H {m}");
    }

    #[test]
    fn ramp_is_persistent() {
        let x: Vec<f64> = (0..4096).map(|i| i as f64).collect();
        let e = hurst_exponent(&x, &hurst_scales(x.len())).unwrap();
        assert!(e.exponent >= 0.95, "{e:?}");
    }

    #[test]
    fn hurst_errors() {
        assert!(matches!(hurst_exponent(&[0.0; 100], &[16, 32]), Err(MetricsError::SeriesTooShort { .. })));
        assert_eq!(hurst_exponent(&[1.0; 2048], &hurst_scales(2048)), Err(MetricsError::DegenerateSeries));
        let x: Vec<f64> = (0..2048).map(|i| (i % 5) as f64).collect();
        assert!(matches!(hurst_exponent(&x, &[16, 32]), Err(MetricsError::TooFewScales { got: 2, .. })));
    }

    #[test]
    fn heaps_extremes() {
        let same = TokenSequence::new(vec![0; 20_000], 1).unwrap();
        assert_eq!(heaps_exponent(&same).unwrap().exponent, 0.0);
        let distinct = TokenSequence::new((0..20_000).collect(), 20_000).unwrap();
        assert!((heaps_exponent(&distinct).unwrap().exponent - 1.0).abs() < 1e-12);
        let short = TokenSequence::new(vec![0; 10], 1).unwrap();
        assert!(matches!(heaps_exponent(&short), Err(MetricsError::SeriesTooShort { .. })));
    }

    /// Inverse-CDF Zipf(2) sampler over `support` types.
    fn zipf_tokens(len: usize, support: usize, seed: u64) -> Vec<usize> {
        let mut cdf = Vec::with_capacity(support);
        let mut acc = 0.0;
        for k in 1..=support {
            acc += 1.0 / (k as f64).powi(2);
            cdf.push(acc);
        }
        let mut r = rng::seeded(seed);
        (0..len)
            .map(|_| {
                let u = r.random::<f64>() * acc;
                cdf.partition_point(|&c| c < u).min(support - 1)
            })
            .collect()
    }

    #[test]
    fn heaps_zipf_oracle() {
        for seed in 0..3 {
            let toks = zipf_tokens(100_000, 1_000_000, seed);
            let e = heaps_exponent(&TokenSequence::new(toks, 1_000_000).unwrap()).unwrap();
            assert!((e.exponent - 0.5).abs() < 0.1, "seed {seed}: {e:?}");
        }
    }

    #[test]
    fn decomposition_examples() {
        let (h, kl) = loss_decomposition(&[0.5, 0.5], &[0.75, 0.25]).unwrap();
        assert!((kl - (0.5 * (2.0f64 / 3.0).ln() + 0.5 * 2f64.ln())).abs() < 1e-15);
        assert!((kl - 0.14384).abs() < 1e-5);
        assert!((h - 2f64.ln()).abs() < 1e-15);
        let p = [0.2, 0.3, 0.5];
        assert_eq!(loss_decomposition(&p, &p).unwrap().1, 0.0);
        let (h, kl) = loss_decomposition(&p, &[1.0 / 3.0; 3]).unwrap();
        assert!((kl - (3f64.ln() - h)).abs() < 1e-12);
        assert_eq!(loss_decomposition(&[0.5, 0.5], &[1.0, 0.0]), Err(MetricsError::SupportMismatch { index: 1 }));
        assert!(matches!(loss_decomposition(&[1.0], &[0.5, 0.5]), Err(MetricsError::LengthMismatch(1, 2))));
        assert!(matches!(loss_decomposition(&[0.7, 0.7], &[0.5, 0.5]), Err(MetricsError::NotProbability(_))));
    }

    fn random_simplex(r: &mut impl RngCore, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| -(r.random::<f64>().max(1e-300)).ln()).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    }

    #[test]
    fn decomposition_sums_to_cross_entropy() {
        let mut r = rng::seeded(17);
        for _ in 0..10_000 {
            let n = r.random_range(2..20);
            let p = random_simplex(&mut r, n);
            let q = random_simplex(&mut r, n);
            let (h, kl) = loss_decomposition(&p, &q).unwrap();
            assert!((h + kl - cross_entropy_of(&p, &q)).abs() < 1e-12);
            assert!(kl >= 0.0);
        }
    }

    proptest! {
        #[test]
        fn hurst_affine_invariant(seed in 0u64..1000, a in 0.01f64..100.0, b in -1e3f64..1e3) {
            let mut r = rng::seeded(seed);
            let x: Vec<f64> = (0..2048).map(|_| r.random::<f64>()).collect();
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let s = hurst_scales(x.len());
            let hx = hurst_exponent(&x, &s).unwrap().exponent;
            let hy = hurst_exponent(&y, &s).unwrap().exponent;
            prop_assert!((hx - hy).abs() < 1e-9);
        }

        #[test]
        fn heaps_permutation_invariant(seed in 0u64..1000, shift in 1usize..500) {
            let toks = zipf_tokens(10_000, 500, seed);
            let relabeled: Vec<usize> = toks.iter().map(|t| (t * 7 + shift) % 500).collect();
            let a = heaps_exponent(&TokenSequence::new(toks, 500).unwrap()).unwrap();
            let b = heaps_exponent(&TokenSequence::new(relabeled, 500).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn kl_vanishes_only_at_equality(seed in 0u64..10_000) {
            let mut r = rng::seeded(seed);
            let p = random_simplex(&mut r, 6);
            let q = random_simplex(&mut r, 6);
            prop_assert!(loss_decomposition(&p, &p).unwrap().1 < 1e-9);
            let diff: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
            if diff > 1e-3 {
                prop_assert!(loss_decomposition(&p, &q).unwrap().1 > 0.0);
            }
        }
    }

    #[test]
    fn token_mappings() {
        let seq = TokenSequence::new(vec![0, 0, 0, 1, 2, 2], 3).unwrap();
        let neg = token_series(&seq, TokenMapping::NegLogFrequency);
        assert!((neg[0] - 2f64.ln()).abs() < 1e-12);
        assert_eq!(token_series(&seq, TokenMapping::Rank), vec![1.0, 1.0, 1.0, 3.0, 2.0, 2.0]);
    }

    #[test]
    fn gap_closure() {
        let c = relative_gap_closure(0.601, 0.662, 0.710);
        assert!((c - 0.5596).abs() < 1e-3);
    }
}
