//! Simulation of a cultural market where each selection follows either item
//! quality or a rank-biased popularity law.
//!
//! With probability `beta` an item is drawn with probability proportional to
//! `rank^-alpha` (rank by popularity), otherwise proportional to its intrinsic
//! quality. The crate measures the popularity-weighted average quality of
//! what gets consumed and the Kendall correlation between popularity and
//! quality, over replicated `(alpha, beta)` sweeps.
//!
//! The market, ranking and metric code is generic over [`Scalar`] (`f32` or
//! `f64`); the aliases below fix it to `f64`, which the sweep machinery uses.

pub mod config;
pub mod experiment;
pub mod market;
pub mod metrics;
pub mod output;
pub mod rank;
pub mod scalar;

pub use config::{parse_config, parse_config_str, ConfigError};
pub use experiment::{
    argmax_beta, derive_seed, run_cell, run_grid, run_grid_with_workers, CellResult,
    ExperimentError, GridResult, SweepConfig, TraceSpec,
};
pub use market::{
    run_realization, Branch, MarketError, MarketState, ModelParams, QualitySource, RandomStream,
    RealizationConfig, RealizationResult, SelectionRecord,
};
pub use metrics::{
    average_quality, kendall_tau, summarize_runs, trace_schedule, CellSummary, MetricsError,
    TauVariant, TraceScale, TraceSchedule, TraceSummary,
};
pub use output::{write_grid_csv, write_trace_csv, OutputError, RunManifest};
pub use rank::{naive_ranks, RankError, RankIndex, TieRankMode};
pub use scalar::Scalar;

pub type Market = MarketState<f64>;
pub type Market32 = MarketState<f32>;
pub type Params = ModelParams<f64>;
pub type Params32 = ModelParams<f32>;
pub type Ranking = RankIndex<f64>;
pub type Ranking32 = RankIndex<f32>;
pub type Realization = RealizationResult<f64>;
pub type Realization32 = RealizationResult<f32>;
