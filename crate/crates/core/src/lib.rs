//! benchstitch places AI models and benchmarks on one latent numerical
//! scale by fitting a sigmoidal score model to sparse model×benchmark
//! results, then derives capability trends, forecasts, algorithmic-progress
//! rates, acceleration detections and robustness analyses from the fitted
//! scale.
//!
//! Module map:
//! - [`dataset`]: score/compute/horizon/label ingestion and table ops.
//! - [`stitch`]: the latent score model, its fit, gauge fixing,
//!   diagnostics, sensitivity error bars and cross-validation.
//! - [`trends`]: capability frontier, linear trends, forecasting,
//!   backtesting, time-horizon mapping and breakpoint detection.
//! - [`algoprog`]: compute-scaling slopes, algorithmic-quality estimates
//!   and compute-efficiency rates.
//! - [`synth`]: synthetic-data generation and detection experiments.
//! - [`robustness`]: anchor sweeps, benchmark-subset stability, the
//!   optimized-for permutation test and link comparison.

pub mod algoprog;
pub mod dataset;
pub mod error;
pub mod robustness;
pub mod solver;
pub mod stats;
pub mod stitch;
pub mod synth;
pub mod trends;

pub use dataset::{
    fractional_year, load_compute, load_horizons, load_labels, load_scores, write_scores,
    BenchmarkLabel, ComputeRecord, HorizonRecord, LoadOptions, OverlapMatrix, ScoreRecord,
    ScoreTable,
};
pub use error::{Error, Result};
pub use stitch::{
    apply_gauge, cross_validate, diagnostics, fit, predict_score, sensitivity_errors,
    Diagnostics, FitConfig, FitResult, GaugeSpec, Link, StitchParams,
};
