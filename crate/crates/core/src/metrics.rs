//! Outcome measures: popularity-weighted average quality, Kendall rank
//! correlation, trace scheduling and aggregation over realizations.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::RealizationResult;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} != {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("total popularity is zero")]
    ZeroPopularity,
    #[error("at least two observations are required, got {0}")]
    TooShort(usize),
    #[error("correlation is undefined: every value in {0} is tied")]
    UndefinedCorrelation(&'static str),
    #[error("input contains values that cannot be ordered (NaN)")]
    Unordered,
    #[error("invalid trace point count {n_points} for {steps} steps")]
    InvalidTracePoints { n_points: usize, steps: u64 },
    #[error("no realizations to summarize")]
    NoRuns,
    #[error("realizations were traced at different times")]
    TraceMismatch,
}

/// `sum_i p_i q_i / sum_i p_i`.
pub fn average_quality<S: Scalar>(popularity: &[u64], quality: &[S]) -> Result<S, MetricsError> {
    if popularity.len() != quality.len() {
        return Err(MetricsError::LengthMismatch {
            left: popularity.len(),
            right: quality.len(),
        });
    }
    let total: u64 = popularity.iter().sum();
    if total == 0 {
        return Err(MetricsError::ZeroPopularity);
    }
    let weighted: S = popularity
        .iter()
        .zip(quality)
        .map(|(&p, &q)| S::lit(p as f64) * q)
        .sum();
    Ok(weighted / S::lit(total as f64))
}

/// Kendall tau flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauVariant {
    /// Tie-corrected: `(C - D) / sqrt((n0 - t_x)(n0 - t_y))`.
    #[default]
    TauB,
    /// Uncorrected: `(C - D) / n0`.
    TauA,
}

impl TauVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            TauVariant::TauB => "tau_b",
            TauVariant::TauA => "tau_a",
        }
    }
}

/// Kendall rank correlation between `x` and `y` by direct pair counting.
///
/// Populations here are at most a few thousand items, where the quadratic
/// count is fast enough.
pub fn kendall_tau<X, Y>(x: &[X], y: &[Y], variant: TauVariant) -> Result<f64, MetricsError>
where
    X: PartialOrd,
    Y: PartialOrd,
{
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(MetricsError::TooShort(n));
    }

    let (mut concordant, mut discordant) = (0u64, 0u64);
    let (mut tied_x, mut tied_y) = (0u64, 0u64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i].partial_cmp(&x[j]).ok_or(MetricsError::Unordered)?;
            let dy = y[i].partial_cmp(&y[j]).ok_or(MetricsError::Unordered)?;
            match (dx, dy) {
                (Ordering::Equal, Ordering::Equal) => {
                    tied_x += 1;
                    tied_y += 1;
                }
                (Ordering::Equal, _) => tied_x += 1,
                (_, Ordering::Equal) => tied_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }

    let pairs = (n * (n - 1) / 2) as u64;
    let score = concordant as f64 - discordant as f64;
    match variant {
        TauVariant::TauA => Ok(score / pairs as f64),
        TauVariant::TauB => {
            if tied_x == pairs {
                return Err(MetricsError::UndefinedCorrelation("x"));
            }
            if tied_y == pairs {
                return Err(MetricsError::UndefinedCorrelation("y"));
            }
            let denom = ((pairs - tied_x) as f64 * (pairs - tied_y) as f64).sqrt();
            Ok((score / denom).clamp(-1.0, 1.0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceScale {
    #[default]
    Log,
    Linear,
}

/// Strictly increasing selection counts at which average quality is recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSchedule {
    times: Vec<u64>,
    scale: TraceScale,
}

impl TraceSchedule {
    pub fn times(&self) -> &[u64] {
        &self.times
    }

    pub fn scale(&self) -> TraceScale {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> u64 {
        *self.times.last().expect("schedule is never empty")
    }
}

/// Builds `n_points` trace times in `[1, steps]`, always ending at `steps`.
///
/// Log spacing starts at `max(10, steps / 10^4)` (capped at `steps`);
/// rounding collisions are dropped, so fewer than `n_points` may remain.
pub fn trace_schedule(
    steps: u64,
    n_points: usize,
    scale: TraceScale,
) -> Result<TraceSchedule, MetricsError> {
    if n_points == 0 || n_points as u64 > steps {
        return Err(MetricsError::InvalidTracePoints { n_points, steps });
    }
    let mut times: Vec<u64> = match scale {
        TraceScale::Linear => (1..=n_points as u64)
            .map(|k| steps * k / n_points as u64)
            .collect(),
        TraceScale::Log => {
            if n_points == 1 {
                vec![steps]
            } else {
                let lo = ((steps / 10_000).max(10)).min(steps) as f64;
                let ratio = (steps as f64 / lo).ln();
                (0..n_points)
                    .map(|k| {
                        let frac = k as f64 / (n_points - 1) as f64;
                        ((lo.ln() + ratio * frac).exp().round() as u64).clamp(1, steps)
                    })
                    .collect()
            }
        }
    };
    times.dedup();
    *times.last_mut().expect("n_points >= 1") = steps;
    Ok(TraceSchedule { times, scale })
}

/// Aggregate of one `(alpha, beta)` cell over its realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub alpha: f64,
    pub beta: f64,
    pub n_runs: usize,
    pub mean_q: f64,
    pub stderr_q: f64,
    /// Over runs with a defined correlation; NaN if there are none.
    pub mean_tau: f64,
    pub stderr_tau: f64,
}

/// Mean and standard error of `average_quality` at one trace time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub t: u64,
    pub mean_q: f64,
    pub stderr_q: f64,
}

/// Mean and standard error (`sd / sqrt(n)`, zero for a single value).
///
/// Values are sorted before summation so the result does not depend on the
/// order they arrive in.
pub fn mean_stderr(mut values: Vec<f64>) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    values.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn summarize_runs<S: Scalar>(
    results: &[RealizationResult<S>],
    alpha: f64,
    beta: f64,
) -> Result<CellSummary, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::NoRuns);
    }
    let (mean_q, stderr_q) =
        mean_stderr(results.iter().map(|r| r.mean_quality.to_f64_lossy()).collect());
    let (mean_tau, stderr_tau) = mean_stderr(results.iter().filter_map(|r| r.tau).collect());
    Ok(CellSummary {
        alpha,
        beta,
        n_runs: results.len(),
        mean_q,
        stderr_q,
        mean_tau,
        stderr_tau,
    })
}

/// Per-time mean and standard error of the traced average quality.
pub fn summarize_traces<S: Scalar>(
    results: &[RealizationResult<S>],
) -> Result<Vec<TraceSummary>, MetricsError> {
    let first = results.first().ok_or(MetricsError::NoRuns)?;
    let times: Vec<u64> = first.trace.iter().map(|p| p.t).collect();
    if results
        .iter()
        .any(|r| r.trace.len() != times.len() || r.trace.iter().zip(&times).any(|(p, &t)| p.t != t))
    {
        return Err(MetricsError::TraceMismatch);
    }
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let (mean_q, stderr_q) = mean_stderr(
                results
                    .iter()
                    .map(|r| r.trace[k].mean_quality.to_f64_lossy())
                    .collect(),
            );
            TraceSummary { t, mean_q, stderr_q }
        })
        .collect())
}
