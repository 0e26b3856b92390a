//! Market state and the per-step selection dynamics.
//!
//! Each step first flips a coin with success probability `beta`. On success
//! an item is drawn from the rank-power law over current popularity ranks,
//! otherwise proportionally to intrinsic quality. The chosen item gains one
//! selection. Random draws are consumed in exactly that order (coin, then
//! item), so a seeded stream replays bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MetricsError, TauVariant, TraceSchedule};
use crate::rank::{RankError, RankIndex, TieRankMode};
use crate::scalar::Scalar;

/// Random stream owned by one realization.
pub type RandomStream = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("quality vector has {got} entries, expected {expected}")]
    QualityLength { expected: usize, got: usize },
    #[error("quality of item {index} is {value}, outside [0, 1]")]
    QualityOutOfRange { index: usize, value: f64 },
    #[error("all qualities are zero; quality-proportional selection is undefined")]
    DegenerateQuality,
    #[error("trace time {last} exceeds the {steps} simulated steps")]
    TraceBeyondHorizon { last: u64, steps: u64 },
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<S> {
    alpha: S,
    beta: S,
    n_items: usize,
    tie_rank_mode: TieRankMode,
}

impl<S: Scalar> ModelParams<S> {
    pub fn new(
        alpha: S,
        beta: S,
        n_items: usize,
        tie_rank_mode: TieRankMode,
    ) -> Result<Self, MarketError> {
        if !(alpha.is_finite() && alpha >= S::zero()) {
            return Err(MarketError::InvalidParameter {
                name: "alpha",
                value: alpha.to_f64_lossy(),
                reason: "must be finite and >= 0",
            });
        }
        if !(beta >= S::zero() && beta <= S::one()) {
            return Err(MarketError::InvalidParameter {
                name: "beta",
                value: beta.to_f64_lossy(),
                reason: "must lie in [0, 1]",
            });
        }
        if n_items < 2 {
            return Err(MarketError::InvalidParameter {
                name: "n_items",
                value: n_items as f64,
                reason: "must be at least 2",
            });
        }
        Ok(ModelParams {
            alpha,
            beta,
            n_items,
            tie_rank_mode,
        })
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn beta(&self) -> S {
        self.beta
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn tie_rank_mode(&self) -> TieRankMode {
        self.tie_rank_mode
    }
}

/// Where item qualities come from.
#[derive(Debug, Clone, PartialEq)]
pub enum QualitySource<S> {
    /// Independent uniform draws from the realization's own stream.
    Uniform,
    Explicit(Vec<S>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Popularity,
    Quality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionRecord {
    /// Number of selections made so far, including this one.
    pub step: u64,
    pub item: usize,
    pub branch: Branch,
}

#[derive(Debug, Clone)]
pub struct MarketState<S> {
    params: ModelParams<S>,
    qualities: Vec<S>,
    /// Running sums of `qualities`, for inverse-CDF sampling.
    cumulative: Vec<S>,
    last_positive: usize,
    ranking: RankIndex<S>,
    steps: u64,
}

impl<S: Scalar> MarketState<S> {
    pub fn init<R: Rng + ?Sized>(
        params: ModelParams<S>,
        source: &QualitySource<S>,
        rng: &mut R,
    ) -> Result<Self, MarketError> {
        let n = params.n_items;
        let qualities = match source {
            QualitySource::Uniform => (0..n).map(|_| S::sample_unit(rng)).collect(),
            QualitySource::Explicit(q) => {
                if q.len() != n {
                    return Err(MarketError::QualityLength {
                        expected: n,
                        got: q.len(),
                    });
                }
                if let Some((index, &value)) = q
                    .iter()
                    .enumerate()
                    .find(|(_, &v)| !(v >= S::zero() && v <= S::one()))
                {
                    return Err(MarketError::QualityOutOfRange {
                        index,
                        value: value.to_f64_lossy(),
                    });
                }
                q.clone()
            }
        };
        let last_positive = qualities
            .iter()
            .rposition(|&q| q > S::zero())
            .ok_or(MarketError::DegenerateQuality)?;
        let cumulative = qualities
            .iter()
            .scan(S::zero(), |acc, &q| {
                *acc = *acc + q;
                Some(*acc)
            })
            .collect();
        let ranking = RankIndex::build(&vec![1; n], params.alpha, params.tie_rank_mode)?;
        Ok(MarketState {
            params,
            qualities,
            cumulative,
            last_positive,
            ranking,
            steps: 0,
        })
    }

    /// Draws `i` with probability `q_i / sum_j q_j`.
    #[inline]
    pub fn select_by_quality<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = self.cumulative[self.cumulative.len() - 1];
        let u = S::sample_unit(rng) * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.last_positive)
    }

    /// Draws `i` with probability `r_i^-alpha / sum_j r_j^-alpha`.
    #[inline]
    pub fn select_by_popularity<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.ranking.sample(rng)
    }

    /// Performs one selection and records it in the popularity counts.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> SelectionRecord {
        let (item, branch) = if S::sample_unit(rng) < self.params.beta {
            (self.select_by_popularity(rng), Branch::Popularity)
        } else {
            (self.select_by_quality(rng), Branch::Quality)
        };
        self.ranking
            .increment(item)
            .expect("selected item is always in range");
        self.steps += 1;
        SelectionRecord {
            step: self.steps,
            item,
            branch,
        }
    }

    pub fn params(&self) -> &ModelParams<S> {
        &self.params
    }

    pub fn qualities(&self) -> &[S] {
        &self.qualities
    }

    pub fn popularity(&self) -> &[u64] {
        self.ranking.counts()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn ranking(&self) -> &RankIndex<S> {
        &self.ranking
    }

    pub fn average_quality(&self) -> S {
        metrics::average_quality(self.popularity(), &self.qualities)
            .expect("popularity counts start at 1")
    }

    pub fn quality_probabilities(&self) -> Vec<S> {
        let total = self.cumulative[self.cumulative.len() - 1];
        self.qualities.iter().map(|&q| q / total).collect()
    }

    pub fn popularity_probabilities(&self) -> Vec<S> {
        self.ranking.probabilities()
    }
}

/// Everything needed to run one market from scratch, except its seed.
#[derive(Debug, Clone)]
pub struct RealizationConfig<S> {
    pub params: ModelParams<S>,
    pub quality: QualitySource<S>,
    pub steps: u64,
    pub trace: Option<TraceSchedule>,
    pub tau_variant: TauVariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint<S> {
    pub t: u64,
    pub mean_quality: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationResult<S> {
    pub popularity: Vec<u64>,
    pub qualities: Vec<S>,
    pub mean_quality: S,
    /// `None` when the correlation is undefined (e.g. every popularity tied).
    pub tau: Option<f64>,
    /// How many selections came from the popularity branch.
    pub popularity_selections: u64,
    pub trace: Vec<TracePoint<S>>,
}

/// Runs `config.steps` selections on a fresh market seeded with `seed`.
pub fn run_realization<S: Scalar>(
    config: &RealizationConfig<S>,
    seed: u64,
) -> Result<RealizationResult<S>, MarketError> {
    if config.steps == 0 {
        return Err(MarketError::InvalidParameter {
            name: "steps",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let times: &[u64] = config.trace.as_ref().map_or(&[], |s| s.times());
    if let Some(&last) = times.last() {
        if last > config.steps {
            return Err(MarketError::TraceBeyondHorizon {
                last,
                steps: config.steps,
            });
        }
    }

    let mut rng = RandomStream::seed_from_u64(seed);
    let mut market = MarketState::init(config.params, &config.quality, &mut rng)?;
    let mut trace = Vec::with_capacity(times.len());
    let mut next_trace = 0;
    let mut popularity_selections = 0;
    for _ in 0..config.steps {
        let record = market.step(&mut rng);
        if record.branch == Branch::Popularity {
            popularity_selections += 1;
        }
        if next_trace < times.len() && record.step == times[next_trace] {
            trace.push(TracePoint {
                t: record.step,
                mean_quality: market.average_quality(),
            });
            next_trace += 1;
        }
    }

    let tau = match metrics::kendall_tau(market.popularity(), market.qualities(), config.tau_variant) {
        Ok(t) => Some(t),
        Err(MetricsError::UndefinedCorrelation(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(RealizationResult {
        popularity: market.popularity().to_vec(),
        mean_quality: market.average_quality(),
        qualities: market.qualities,
        tau,
        popularity_selections,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{trace_schedule, TraceScale};

    fn params(alpha: f64, beta: f64, n: usize) -> ModelParams<f64> {
        ModelParams::new(alpha, beta, n, TieRankMode::MaxRank).unwrap()
    }

    fn explicit(alpha: f64, beta: f64, q: &[f64]) -> MarketState<f64> {
        let mut rng = RandomStream::seed_from_u64(0);
        MarketState::init(
            params(alpha, beta, q.len()),
            &QualitySource::Explicit(q.to_vec()),
            &mut rng,
        )
        .unwrap()
    }

    fn config(alpha: f64, beta: f64, n: usize, steps: u64) -> RealizationConfig<f64> {
        RealizationConfig {
            params: params(alpha, beta, n),
            quality: QualitySource::Uniform,
            steps,
            trace: None,
            tau_variant: TauVariant::TauB,
        }
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1.0, 1.5, 10, TieRankMode::MaxRank).is_err());
        assert!(ModelParams::new(1.0, -0.1, 10, TieRankMode::MaxRank).is_err());
        assert!(ModelParams::new(-1.0, 0.5, 10, TieRankMode::MaxRank).is_err());
        assert!(ModelParams::new(1.0, 0.5, 1, TieRankMode::MaxRank).is_err());
        assert!(ModelParams::new(f64::NAN, 0.5, 10, TieRankMode::MaxRank).is_err());
        assert!(ModelParams::new(0.0, 1.0, 2, TieRankMode::MinRank).is_ok());
    }

    #[test]
    fn init_with_explicit_qualities() {
        let m = explicit(1.0, 0.5, &[0.2, 0.5, 0.9]);
        assert_eq!(m.popularity(), &[1, 1, 1]);
        assert_eq!(m.steps(), 0);
        for p in m.popularity_probabilities() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn init_errors() {
        let mut rng = RandomStream::seed_from_u64(0);
        let p = params(1.0, 0.5, 2);
        assert_eq!(
            MarketState::init(p, &QualitySource::Explicit(vec![0.0, 0.0]), &mut rng).unwrap_err(),
            MarketError::DegenerateQuality
        );
        assert_eq!(
            MarketState::init(p, &QualitySource::Explicit(vec![0.5]), &mut rng).unwrap_err(),
            MarketError::QualityLength { expected: 2, got: 1 }
        );
        assert!(matches!(
            MarketState::init(p, &QualitySource::Explicit(vec![0.5, 1.2]), &mut rng),
            Err(MarketError::QualityOutOfRange { index: 1, .. })
        ));
        // a single zero-quality item is allowed
        assert!(MarketState::init(p, &QualitySource::Explicit(vec![0.0, 0.3]), &mut rng).is_ok());
    }

    #[test]
    fn uniform_qualities_pass_ks_test() {
        let mut pooled = Vec::with_capacity(100_000);
        for seed in 0..1000 {
            let mut rng = RandomStream::seed_from_u64(seed);
            let m = MarketState::init(params(1.0, 0.5, 100), &QualitySource::Uniform, &mut rng)
                .unwrap();
            pooled.extend_from_slice(m.qualities());
        }
        pooled.sort_by(f64::total_cmp);
        let n = pooled.len() as f64;
        let d = pooled
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
            .fold(0.0, f64::max);
        // Kolmogorov critical value at significance 0.001
        let critical = (-(0.0005f64).ln() / 2.0).sqrt() / n.sqrt();
        assert!(d < critical, "D = {d}, critical {critical}");
    }

    #[test]
    fn quality_probabilities_are_normalized_weights() {
        let m = explicit(1.0, 0.0, &[0.2, 0.8]);
        assert_eq!(m.quality_probabilities(), vec![0.2, 0.8]);
        let m = explicit(1.0, 0.0, &[0.5, 0.5]);
        assert_eq!(m.quality_probabilities(), vec![0.5, 0.5]);
        let m = explicit(1.0, 0.0, &[0.1, 0.4, 0.3]);
        let s: f64 = m.quality_probabilities().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quality_selection_frequencies() {
        let m = explicit(1.0, 0.0, &[0.1, 0.4, 0.3]);
        let mut rng = RandomStream::seed_from_u64(42);
        let draws = 100_000;
        let mut hits = [0usize; 3];
        for _ in 0..draws {
            hits[m.select_by_quality(&mut rng)] += 1;
        }
        for (h, p) in hits.iter().zip([0.125, 0.5, 0.375]) {
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((*h as f64 - draws as f64 * p).abs() < 5.0 * sd);
        }
    }

    #[test]
    fn zero_quality_items_are_never_chosen_by_quality() {
        let m = explicit(1.0, 0.0, &[0.0, 0.6, 0.0, 0.4, 0.0]);
        let mut rng = RandomStream::seed_from_u64(9);
        for _ in 0..20_000 {
            let i = m.select_by_quality(&mut rng);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn popularity_selection_uses_current_ranks() {
        let mut m = explicit(1.0, 1.0, &[0.3, 0.3, 0.3]);
        let mut rng = RandomStream::seed_from_u64(1);
        // counts [5,5,3] -> max ranks [2,2,3] -> P = [3/8, 3/8, 2/8]
        for (item, times) in [(0, 4), (1, 4), (2, 2)] {
            for _ in 0..times {
                m.ranking.increment(item).unwrap();
            }
        }
        let p = m.popularity_probabilities();
        for (got, want) in p.iter().zip([0.375, 0.375, 0.25]) {
            assert!((got - want).abs() < 1e-12);
        }
        let mut hits = [0usize; 3];
        for _ in 0..100_000 {
            hits[m.select_by_popularity(&mut rng)] += 1;
        }
        for (h, p) in hits.iter().zip([0.375f64, 0.375, 0.25]) {
            let sd = (100_000.0 * p * (1.0 - p)).sqrt();
            assert!((*h as f64 - 100_000.0 * p).abs() < 5.0 * sd);
        }
    }

    #[test]
    fn mixture_boundaries_and_conservation() {
        let mut rng = RandomStream::seed_from_u64(5);
        let mut quality_only = explicit(2.0, 0.0, &[0.1, 0.5, 0.9, 0.3]);
        let mut popularity_only = explicit(2.0, 1.0, &[0.1, 0.5, 0.9, 0.3]);
        for k in 1..=5_000u64 {
            assert_eq!(quality_only.step(&mut rng).branch, Branch::Quality);
            assert_eq!(popularity_only.step(&mut rng).branch, Branch::Popularity);
            assert_eq!(quality_only.popularity().iter().sum::<u64>(), 4 + k);
            assert_eq!(popularity_only.popularity().iter().sum::<u64>(), 4 + k);
        }
    }

    #[test]
    fn branch_fraction_follows_beta() {
        let mut m = explicit(1.0, 0.4, &[0.2, 0.4, 0.6, 0.8]);
        let mut rng = RandomStream::seed_from_u64(77);
        let steps = 100_000;
        let hits = (0..steps)
            .filter(|_| m.step(&mut rng).branch == Branch::Popularity)
            .count();
        let sd = (steps as f64 * 0.4 * 0.6).sqrt();
        assert!((hits as f64 - 40_000.0).abs() < 5.0 * sd, "{hits}");
    }

    #[test]
    fn zero_alpha_popularity_branch_ignores_history() {
        let mut m = explicit(0.0, 1.0, &[0.2, 0.4, 0.6]);
        let mut rng = RandomStream::seed_from_u64(2);
        for _ in 0..1000 {
            m.step(&mut rng);
            for p in m.popularity_probabilities() {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn realization_conservation_and_determinism() {
        let mut cfg = config(1.0, 0.0, 2, 100);
        cfg.quality = QualitySource::Explicit(vec![0.5, 0.5]);
        let r = run_realization(&cfg, 3).unwrap();
        assert_eq!(r.popularity.iter().sum::<u64>(), 102);

        let mut cfg = config(1.5, 0.6, 30, 5_000);
        cfg.trace = Some(trace_schedule(5_000, 8, TraceScale::Log).unwrap());
        let a = run_realization(&cfg, 99).unwrap();
        let b = run_realization(&cfg, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace.len(), 8);
        assert_eq!(a.trace.last().unwrap().mean_quality, a.mean_quality);
        assert_ne!(a, run_realization(&cfg, 100).unwrap());
    }

    #[test]
    fn realization_rejects_bad_horizons() {
        assert!(run_realization(&config(1.0, 0.5, 10, 0), 1).is_err());
        let mut cfg = config(1.0, 0.5, 10, 10);
        cfg.trace = Some(trace_schedule(20, 2, TraceScale::Linear).unwrap());
        assert_eq!(
            run_realization(&cfg, 1).unwrap_err(),
            MarketError::TraceBeyondHorizon { last: 20, steps: 10 }
        );
    }

    #[test]
    fn quality_only_realization_matches_closed_form() {
        for seed in [1, 2, 3] {
            let r = run_realization(&config(1.7, 0.0, 100, 100_000), seed).unwrap();
            let q = &r.qualities;
            let expected =
                q.iter().map(|x| x * x).sum::<f64>() / q.iter().sum::<f64>();
            assert!(
                (r.mean_quality - expected).abs() < 0.02,
                "{} vs {expected}",
                r.mean_quality
            );
            assert_eq!(r.popularity_selections, 0);
        }
    }

    #[test]
    fn single_precision_realization() {
        let cfg = RealizationConfig::<f32> {
            params: ModelParams::new(1.0, 0.3, 50, TieRankMode::MinRank).unwrap(),
            quality: QualitySource::Uniform,
            steps: 20_000,
            trace: None,
            tau_variant: TauVariant::TauB,
        };
        let r = run_realization(&cfg, 4).unwrap();
        assert_eq!(r.popularity.iter().sum::<u64>(), 20_050);
        assert!(r.mean_quality > 0.0 && r.mean_quality < 1.0);
    }
}
