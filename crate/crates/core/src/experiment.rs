//! Replicated, seeded parameter sweeps over `(alpha, beta)` grids.
//!
//! Every realization gets its own seed derived from the master seed and its
//! `(alpha_index, beta_index, run_index)` coordinates, so a grid result does
//! not depend on how many workers computed it or in which order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::market::{
    run_realization, MarketError, ModelParams, QualitySource, RealizationConfig, RealizationResult,
};
use crate::metrics::{
    summarize_runs, summarize_traces, trace_schedule, CellSummary, MetricsError, TauVariant,
    TraceScale, TraceSchedule, TraceSummary,
};
use crate::rank::TieRankMode;

pub const DEFAULT_N_ITEMS: usize = 100;
pub const DEFAULT_STEPS: u64 = 100_000;
pub const DEFAULT_N_RUNS: usize = 50;
pub const DEFAULT_MASTER_SEED: u64 = 1;
pub const DEFAULT_TRACE_POINTS: usize = 20;

fn default_n_items() -> usize {
    DEFAULT_N_ITEMS
}

fn default_steps() -> u64 {
    DEFAULT_STEPS
}

fn default_n_runs() -> usize {
    DEFAULT_N_RUNS
}

fn default_master_seed() -> u64 {
    DEFAULT_MASTER_SEED
}

fn default_trace_points() -> usize {
    DEFAULT_TRACE_POINTS
}

/// How average quality is traced over time, if at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    #[serde(default = "default_trace_points")]
    pub points: usize,
    #[serde(default)]
    pub scale: TraceScale,
}

impl Default for TraceSpec {
    fn default() -> Self {
        TraceSpec {
            points: DEFAULT_TRACE_POINTS,
            scale: TraceScale::Log,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    #[serde(default = "default_n_items")]
    pub n_items: usize,
    /// Selections per realization.
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default)]
    pub tie_rank_mode: TieRankMode,
    #[serde(default)]
    pub tau_variant: TauVariant,
    #[serde(default)]
    pub trace: Option<TraceSpec>,
}

impl SweepConfig {
    /// A config with every optional field at its default.
    pub fn new(alphas: Vec<f64>, betas: Vec<f64>) -> Self {
        SweepConfig {
            alphas,
            betas,
            n_items: DEFAULT_N_ITEMS,
            steps: DEFAULT_STEPS,
            n_runs: DEFAULT_N_RUNS,
            master_seed: DEFAULT_MASTER_SEED,
            tie_rank_mode: TieRankMode::default(),
            tau_variant: TauVariant::default(),
            trace: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.alphas.is_empty() {
            return Err(ConfigError::out_of_range("alphas", "alpha grid must not be empty"));
        }
        for (i, &a) in self.alphas.iter().enumerate() {
            if !(a.is_finite() && a >= 0.0) {
                return Err(ConfigError::out_of_range(
                    format!("alphas[{i}]"),
                    format!("alpha must be finite and >= 0, got {a}"),
                ));
            }
        }
        if self.betas.is_empty() {
            return Err(ConfigError::out_of_range("betas", "beta grid must not be empty"));
        }
        for (i, &b) in self.betas.iter().enumerate() {
            if !(0.0..=1.0).contains(&b) {
                return Err(ConfigError::out_of_range(
                    format!("betas[{i}]"),
                    format!("beta must lie in [0, 1], got {b}"),
                ));
            }
        }
        if self.n_items < 2 {
            return Err(ConfigError::out_of_range(
                "n_items",
                format!("need at least 2 items, got {}", self.n_items),
            ));
        }
        if self.steps == 0 {
            return Err(ConfigError::out_of_range("steps", "need at least 1 step"));
        }
        if self.n_runs == 0 {
            return Err(ConfigError::out_of_range("n_runs", "need at least 1 run"));
        }
        if let Some(trace) = &self.trace {
            if trace.points == 0 || trace.points as u64 > self.steps {
                return Err(ConfigError::out_of_range(
                    "trace.points",
                    format!(
                        "must lie in [1, steps = {}], got {}",
                        self.steps, trace.points
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.alphas.len() * self.betas.len()
    }

    pub fn trace_schedule(&self) -> Result<Option<TraceSchedule>, MetricsError> {
        self.trace
            .map(|t| trace_schedule(self.steps, t.points, t.scale))
            .transpose()
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{axis} index {index} is out of range for a grid of {len}")]
    IndexOutOfRange {
        axis: &'static str,
        index: usize,
        len: usize,
    },
    #[error("run {run} of cell (alpha #{alpha_index}, beta #{beta_index}) failed: {source}")]
    Realization {
        alpha_index: usize,
        beta_index: usize,
        run: usize,
        source: MarketError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("grid aborted with {completed} of {total} cells completed: {source}")]
    Grid {
        completed: usize,
        total: usize,
        source: Box<ExperimentError>,
    },
    #[error("cannot start worker pool: {0}")]
    Workers(String),
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 output function: a bijection on `u64` with strong avalanche.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one realization.
///
/// `h0 = splitmix64(master)`, then for each of `alpha_index`, `beta_index`,
/// `run_index` in turn: `h = splitmix64(h ^ splitmix64(index))`. Each fold is
/// a bijection of the index for a fixed prefix, so seeds that differ in a
/// single coordinate never collide.
pub fn derive_seed(master_seed: u64, alpha_index: usize, beta_index: usize, run_index: usize) -> u64 {
    [alpha_index, beta_index, run_index]
        .iter()
        .fold(splitmix64(master_seed), |h, &i| {
            splitmix64(h ^ splitmix64(i as u64))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub alpha_index: usize,
    pub beta_index: usize,
    pub summary: CellSummary,
    pub trace: Option<Vec<TraceSummary>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub config: SweepConfig,
    /// Row-major by `(alpha_index, beta_index)`.
    pub cells: Vec<CellResult>,
}

impl GridResult {
    pub fn cell(&self, alpha_index: usize, beta_index: usize) -> Option<&CellResult> {
        if alpha_index >= self.config.alphas.len() || beta_index >= self.config.betas.len() {
            return None;
        }
        self.cells
            .get(alpha_index * self.config.betas.len() + beta_index)
    }
}

fn check_indices(
    config: &SweepConfig,
    alpha_index: usize,
    beta_index: usize,
) -> Result<(), ExperimentError> {
    if alpha_index >= config.alphas.len() {
        return Err(ExperimentError::IndexOutOfRange {
            axis: "alpha",
            index: alpha_index,
            len: config.alphas.len(),
        });
    }
    if beta_index >= config.betas.len() {
        return Err(ExperimentError::IndexOutOfRange {
            axis: "beta",
            index: beta_index,
            len: config.betas.len(),
        });
    }
    Ok(())
}

/// All realizations of one cell, in run order, each with fresh quality draws.
pub fn cell_realizations(
    config: &SweepConfig,
    alpha_index: usize,
    beta_index: usize,
) -> Result<Vec<RealizationResult<f64>>, ExperimentError> {
    config.validate()?;
    check_indices(config, alpha_index, beta_index)?;
    let realization_error = |run, source| ExperimentError::Realization {
        alpha_index,
        beta_index,
        run,
        source,
    };
    let params = ModelParams::new(
        config.alphas[alpha_index],
        config.betas[beta_index],
        config.n_items,
        config.tie_rank_mode,
    )
    .map_err(|e| realization_error(0, e))?;
    let realization = RealizationConfig {
        params,
        quality: QualitySource::Uniform,
        steps: config.steps,
        trace: config.trace_schedule()?,
        tau_variant: config.tau_variant,
    };
    (0..config.n_runs)
        .into_par_iter()
        .map(|run| {
            let seed = derive_seed(config.master_seed, alpha_index, beta_index, run);
            run_realization(&realization, seed).map_err(|e| realization_error(run, e))
        })
        .collect()
}

pub fn run_cell(
    config: &SweepConfig,
    alpha_index: usize,
    beta_index: usize,
) -> Result<CellResult, ExperimentError> {
    let runs = cell_realizations(config, alpha_index, beta_index)?;
    let summary = summarize_runs(
        &runs,
        config.alphas[alpha_index],
        config.betas[beta_index],
    )?;
    let trace = match config.trace {
        Some(_) => Some(summarize_traces(&runs)?),
        None => None,
    };
    Ok(CellResult {
        alpha_index,
        beta_index,
        summary,
        trace,
    })
}

/// Runs every cell on the current rayon pool.
pub fn run_grid(config: &SweepConfig) -> Result<GridResult, ExperimentError> {
    config.validate()?;
    let n_betas = config.betas.len();
    let total = config.n_cells();
    let outcomes: Vec<Result<CellResult, ExperimentError>> = (0..total)
        .into_par_iter()
        .map(|k| run_cell(config, k / n_betas, k % n_betas))
        .collect();

    let completed = outcomes.iter().filter(|o| o.is_ok()).count();
    let mut cells = Vec::with_capacity(total);
    for outcome in outcomes {
        match outcome {
            Ok(cell) => cells.push(cell),
            Err(e) => {
                return Err(ExperimentError::Grid {
                    completed,
                    total,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(GridResult {
        config: config.clone(),
        cells,
    })
}

/// Runs `job` on a dedicated pool of `workers` threads.
pub fn with_workers<T, F>(workers: usize, job: F) -> Result<T, ExperimentError>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExperimentError::Workers(e.to_string()))?;
    Ok(pool.install(job))
}

/// Runs the grid on a dedicated pool of `workers` threads.
pub fn run_grid_with_workers(
    config: &SweepConfig,
    workers: usize,
) -> Result<GridResult, ExperimentError> {
    with_workers(workers, || run_grid(config))?
}

/// `(beta_hat, mean_q)` maximizing mean average quality along one alpha row.
///
/// Ties go to the smaller beta.
pub fn argmax_beta(grid: &GridResult, alpha_index: usize) -> Result<(f64, f64), ExperimentError> {
    if alpha_index >= grid.config.alphas.len() {
        return Err(ExperimentError::IndexOutOfRange {
            axis: "alpha",
            index: alpha_index,
            len: grid.config.alphas.len(),
        });
    }
    grid.cells
        .iter()
        .filter(|c| c.alpha_index == alpha_index)
        .map(|c| (c.summary.beta, c.summary.mean_q))
        .reduce(|best, cand| {
            if cand.1 > best.1 || (cand.1 == best.1 && cand.0 < best.0) {
                cand
            } else {
                best
            }
        })
        .ok_or(ExperimentError::IndexOutOfRange {
            axis: "alpha",
            index: alpha_index,
            len: 0,
        })
}
