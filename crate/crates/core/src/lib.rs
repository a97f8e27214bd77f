//! Core of the evalboard leaderboard.
//!
//! Models are points in a space of goods (performance, throughput, memory
//! saved, fairness, robustness). Each non-performance metric is converted into
//! performance units through an exchange rate estimated from the submitted
//! models themselves, and a weighted sum of the converted values gives the
//! Dynascore used for ranking.
//!
//! The crate is organised bottom-up:
//!
//! - [`task`]: task configurations, metric catalogs, model entries, records
//! - [`weights`]: weight normalization and the default weighting
//! - [`aggregate`]: dataset aggregation and the goods transformation
//! - [`scoring`]: MRS/AMRS exchange rates, Dynascore, z-scores, ranking
//! - [`metrics`]: task performance metrics behind a registry
//! - [`dataset`]: example and prediction types, JSONL IO
//! - [`perturb`]: fairness and robustness perturbations
//! - [`store`]: flat-file persistence
//! - [`service`]: the scoring entry point shared by the HTTP API and the CLI
//! - [`fixtures`]: bundled fixture tasks, lexicon and published reference rows

pub mod aggregate;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod perturb;
pub mod scoring;
pub mod service;
pub mod store;
pub mod task;
pub mod weights;

pub use aggregate::{aggregate_datasets, to_good};
pub use error::{AggregateError, AmrsError, ScoreError, TaskError, WeightError};
pub use scoring::{
    amrs, avg_zscore, dynascore, exchange_rates, mrs_set, rank_leaderboard, ExchangeRate,
    ExchangeRateTable, Leaderboard, LeaderboardRow,
};
pub use task::{
    Direction, DatasetRef, MetricRecord, MetricSpec, ModelEntry, ModelMetrics, TaskConfig,
};
pub use weights::{default_weights, normalize_weights, WeightSpec};
