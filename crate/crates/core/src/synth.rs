//! Synthetic score datasets with planted capability accelerations, plus the
//! rolling-detection, sweep and false-positive experiments built on them.
//!
//! Model capabilities follow a piecewise-linear law, continuous at the
//! acceleration time: before the cutoff both models and benchmarks improve
//! at ΔC per year; after it, an accelerating model's slope is multiplied by
//! N while benchmark difficulties stay on the original line. Per-entity
//! Gaussian noise enters the latent capability/difficulty, not the score.
//! Scores are produced by the sigmoid link with unit slopes and retained
//! only strictly inside [clip, 1 − clip].

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LoadOptions, ScoreRecord, ScoreTable};
use crate::error::{Error, Result};
use crate::stats::{binomial_ci_exact, median, percentile, sigmoid};
use crate::stitch::{fit, FitConfig, GaugeSpec};
use crate::trends::{detect_breakpoint, frontier, BreakpointFit, CapabilityPoint};

/// Parameters of the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub t_start: f64,
    pub t_end: f64,
    /// Total capability increase over [t_start, t_end] on the unaccelerated
    /// law; sets ΔC per year.
    pub total_capability_increase: f64,
    /// Capability at t_start.
    pub base_capability: f64,
    /// Difficulty at t_start.
    pub base_difficulty: f64,
    /// Post-cutoff slope multiplier N (1 = no acceleration).
    pub accel_factor: f64,
    pub t_cutoff: f64,
    /// Fraction of models that accelerate.
    pub accel_fraction: f64,
    /// Std dev of the per-entity latent noise.
    pub noise_sigma: f64,
    pub n_models: usize,
    pub n_benchmarks: usize,
    /// Fraction of all benchmarks each model is evaluated on.
    pub benchmarks_per_model_frac: f64,
    /// Scores outside (clip, 1 − clip) are dropped.
    pub score_clip: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            t_start: 2024.0,
            t_end: 2030.0,
            total_capability_increase: 3.3,
            base_capability: 0.0,
            base_difficulty: 0.5,
            accel_factor: 1.0,
            t_cutoff: 2027.0,
            accel_fraction: 1.0,
            noise_sigma: 0.05,
            n_models: 300,
            n_benchmarks: 30,
            benchmarks_per_model_frac: 0.25,
            score_clip: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_start >= self.t_end {
            return Err(Error::Config("t_start must precede t_end".to_string()));
        }
        if self.accel_factor != 1.0
            && !(self.t_start < self.t_cutoff && self.t_cutoff < self.t_end)
        {
            return Err(Error::Config(
                "t_cutoff must lie strictly inside [t_start, t_end] when accelerating".to_string(),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise_sigma must be non-negative".to_string()));
        }
        if !(self.benchmarks_per_model_frac > 0.0 && self.benchmarks_per_model_frac <= 1.0) {
            return Err(Error::Config(
                "benchmarks_per_model_frac must be in (0, 1]".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.accel_fraction) {
            return Err(Error::Config("accel_fraction must be in [0, 1]".to_string()));
        }
        if !(0.0..0.5).contains(&self.score_clip) {
            return Err(Error::Config("score_clip must be in [0, 0.5)".to_string()));
        }
        if self.n_models == 0 || self.n_benchmarks == 0 {
            return Err(Error::Config(
                "need at least one model and one benchmark".to_string(),
            ));
        }
        Ok(())
    }

    /// ΔC in capability units per year.
    pub fn slope_per_year(&self) -> f64 {
        self.total_capability_increase / (self.t_end - self.t_start)
    }

    /// Noiseless capability law at time `t`. Continuous at the cutoff: both
    /// branches meet at base + (t_cutoff − t_start)·ΔC.
    pub fn capability_law(&self, t: f64, accelerated: bool) -> f64 {
        let dc = self.slope_per_year();
        let tau = t - self.t_start;
        let tau_cut = self.t_cutoff - self.t_start;
        if !accelerated || tau <= tau_cut {
            self.base_capability + tau * dc
        } else {
            self.base_capability + tau_cut * dc + (tau - tau_cut) * self.accel_factor * dc
        }
    }

    /// Noiseless difficulty law (always linear, same slope as capabilities).
    pub fn difficulty_law(&self, t: f64) -> f64 {
        self.base_difficulty + (t - self.t_start) * self.slope_per_year()
    }
}

/// The latent state behind a generated table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticTruth {
    /// model_id → (release time, realized capability including noise).
    pub models: BTreeMap<String, (f64, f64)>,
    /// benchmark_id → (release time, realized difficulty including noise).
    pub benchmarks: BTreeMap<String, (f64, f64)>,
    pub accelerated: BTreeSet<String>,
    pub delta_c_per_year: f64,
}

/// Convert fractional years back to a calendar date (nearest day).
pub fn date_from_fractional_year(fy: f64) -> NaiveDate {
    let year = fy.floor() as i32;
    let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).expect("year in range");
    let days = if jan1.leap_year() { 366.0 } else { 365.0 };
    let doy = ((fy - year as f64) * days).round() as u64;
    jan1 + chrono::Days::new(doy.min(days as u64 - 1))
}

/// Generate a synthetic score table and its ground truth. Deterministic
/// given the config (including its seed).
pub fn generate(config: &SyntheticConfig) -> Result<(ScoreTable, SyntheticTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = if config.noise_sigma > 0.0 {
        Some(Normal::new(0.0, config.noise_sigma).map_err(|e| Error::Numerical(e.to_string()))?)
    } else {
        None
    };
    let draw_noise = |rng: &mut ChaCha8Rng| normal.map_or(0.0, |n| n.sample(rng));

    let n = config.n_models;
    let b = config.n_benchmarks;
    let width = (n.max(1) as f64).log10().ceil() as usize;

    // Model release times, uniform over the window.
    let model_times: Vec<f64> = (0..n)
        .map(|_| rng.random_range(config.t_start..config.t_end))
        .collect();
    // Seeded choice of the accelerating fraction.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_accel = (config.accel_fraction * n as f64).round() as usize;
    let accel_idx: BTreeSet<usize> = order.into_iter().take(n_accel).collect();

    let mut models = BTreeMap::new();
    let mut accelerated = BTreeSet::new();
    for (i, &t) in model_times.iter().enumerate() {
        let id = format!("m{i:0width$}");
        let is_accel = accel_idx.contains(&i);
        let cap = config.capability_law(t, is_accel) + draw_noise(&mut rng);
        if is_accel {
            accelerated.insert(id.clone());
        }
        models.insert(id, (t, cap));
    }

    let bwidth = (b.max(1) as f64).log10().ceil() as usize;
    let mut benchmarks = BTreeMap::new();
    for i in 0..b {
        let t = rng.random_range(config.t_start..config.t_end);
        let diff = config.difficulty_law(t) + draw_noise(&mut rng);
        benchmarks.insert(format!("b{i:0bwidth$}"), (t, diff));
    }
    let bench_ids: Vec<&String> = benchmarks.keys().collect();

    let per_model = ((config.benchmarks_per_model_frac * b as f64).round() as usize)
        .clamp(1, b);
    let mut records = Vec::new();
    for (id, (t, cap)) in &models {
        let picks = rand::seq::index::sample(&mut rng, b, per_model);
        for bi in picks.iter() {
            let bench_id = bench_ids[bi];
            let (bt, diff) = benchmarks[bench_id];
            let score = sigmoid(cap - diff);
            if score <= config.score_clip || score >= 1.0 - config.score_clip {
                continue;
            }
            records.push(ScoreRecord {
                model_id: id.clone(),
                benchmark_id: bench_id.clone(),
                score,
                model_release: date_from_fractional_year(*t),
                benchmark_release: Some(date_from_fractional_year(bt)),
            });
        }
    }

    let table = ScoreTable::from_records(records, LoadOptions::default())?;
    Ok((
        table,
        SyntheticTruth {
            models,
            benchmarks,
            accelerated,
            delta_c_per_year: config.slope_per_year(),
        },
    ))
}

/// Settings of the rolling breakpoint detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Post/pre slope ratio at which an acceleration counts as detected.
    pub threshold: f64,
    pub min_segment: usize,
    /// Models evaluated on fewer benchmarks are dropped before fitting.
    pub min_benchmarks: usize,
    /// The detector gives no verdict until the fitted frontier spans at
    /// least this many years. Very short windows produce wild slope ratios
    /// from fit distortion alone.
    pub min_span_years: f64,
    pub observation_step_months: f64,
    pub fit: FitConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            threshold: 2.0,
            min_segment: 3,
            min_benchmarks: 4,
            min_span_years: 1.5,
            observation_step_months: 1.0,
            fit: FitConfig::default(),
        }
    }
}

/// Outcome of one rolling-detection replay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionOutcome {
    pub detected: bool,
    /// Months between the true acceleration start and the first firing
    /// observation cutoff; present iff detected.
    pub detection_lag_months: Option<f64>,
    /// The breakpoint fit at the firing cutoff (or the last attempted one).
    pub breakpoint: Option<BreakpointFit>,
    /// Observation cutoffs evaluated.
    pub looks: usize,
}

/// Fit the stitch model on the records visible at `cutoff` and run the
/// breakpoint detector on the fitted frontier. `Ok(None)` means this look
/// could not produce a verdict (too little data), which counts as not fired.
fn detect_at_cutoff(
    table: &ScoreTable,
    cutoff: f64,
    det: &DetectorConfig,
) -> Result<Option<BreakpointFit>> {
    let visible = table.subset(|i| {
        crate::dataset::fractional_year(table.records()[i].model_release) <= cutoff
    });
    if visible.n_records() == 0 {
        return Ok(None);
    }
    let filtered = visible.filter_min_benchmarks(det.min_benchmarks)?;
    if filtered.n_records() == 0 {
        return Ok(None);
    }
    // Deterministic anchor: the benchmark with the widest model coverage,
    // ties to the lexicographically first id.
    let anchor = filtered
        .models_per_benchmark()
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(id, _)| id.to_string())
        .expect("non-empty table");
    let gauge = GaugeSpec::benchmark_anchor(anchor);
    let fitted = match fit(&filtered, &det.fit, &gauge) {
        Ok(f) => f,
        // A degenerate visible slice is a non-verdict, not a failure of the
        // whole replay.
        Err(Error::InsufficientData(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let points: Vec<CapabilityPoint> = fitted
        .params
        .capability
        .iter()
        .map(|(id, c)| {
            let release = filtered.model_release(id).expect("fitted model in table");
            CapabilityPoint::new(id.clone(), crate::dataset::fractional_year(release), *c)
        })
        .collect();
    let front = frontier(&points);
    if front.len() < 2 * det.min_segment {
        return Ok(None);
    }
    if front.last().unwrap().t - front[0].t < det.min_span_years {
        return Ok(None);
    }
    Ok(Some(detect_breakpoint(
        &front,
        det.threshold,
        det.min_segment,
    )?))
}

/// Replay a synthetic dataset in monthly observation increments starting at
/// the true acceleration time, refitting from scratch at each cutoff, and
/// report the first cutoff at which the detector fires.
pub fn detection_experiment(
    config: &SyntheticConfig,
    det: &DetectorConfig,
) -> Result<DetectionOutcome> {
    if config.accel_factor <= 1.0 {
        return Err(Error::Config(
            "detection experiment needs an accelerating config (N > 1)".to_string(),
        ));
    }
    let (table, _) = generate(config)?;
    let step = det.observation_step_months / 12.0;
    let mut looks = 0;
    let mut last_fit = None;
    let mut cutoff = config.t_cutoff + step;
    while cutoff <= config.t_end + 1e-9 {
        looks += 1;
        if let Some(bp) = detect_at_cutoff(&table, cutoff, det)? {
            let fired = bp.detected;
            last_fit = Some(bp);
            if fired {
                return Ok(DetectionOutcome {
                    detected: true,
                    detection_lag_months: Some((cutoff - config.t_cutoff) * 12.0),
                    breakpoint: last_fit,
                    looks,
                });
            }
        }
        cutoff += step;
    }
    Ok(DetectionOutcome {
        detected: false,
        detection_lag_months: None,
        breakpoint: last_fit,
        looks,
    })
}

use crate::stats::child_seed;

/// One sweep cell: a labelled synthetic config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCellSpec {
    pub accel_factor: f64,
    pub noise_mult: f64,
    pub accel_fraction: f64,
    pub label: String,
    pub config: SyntheticConfig,
}

/// Baseline latent noise level the sweep multipliers scale.
pub const BASELINE_NOISE_SIGMA: f64 = 0.05;

/// The primary sweep grid: acceleration × noise multiplier × accelerating
/// fraction.
pub fn primary_grid(
    base: &SyntheticConfig,
    accel_factors: &[f64],
    noise_mults: &[f64],
    fractions: &[f64],
) -> Vec<SweepCellSpec> {
    let mut cells = Vec::new();
    for &n in accel_factors {
        for &nm in noise_mults {
            for &f in fractions {
                let config = SyntheticConfig {
                    accel_factor: n,
                    noise_sigma: BASELINE_NOISE_SIGMA * nm,
                    accel_fraction: f,
                    ..base.clone()
                };
                cells.push(SweepCellSpec {
                    accel_factor: n,
                    noise_mult: nm,
                    accel_fraction: f,
                    label: format!("N={n}_noise={nm}_f={f}"),
                    config,
                });
            }
        }
    }
    cells
}

/// Alternative data-density grid: models per year × benchmarks per year at
/// fixed accelerations.
pub fn data_density_grid(
    base: &SyntheticConfig,
    models_per_year: &[usize],
    benchmarks_per_year: &[usize],
    accel_factors: &[f64],
) -> Vec<SweepCellSpec> {
    let years = base.t_end - base.t_start;
    let mut cells = Vec::new();
    for &mpy in models_per_year {
        for &bpy in benchmarks_per_year {
            for &n in accel_factors {
                let config = SyntheticConfig {
                    n_models: (mpy as f64 * years).round() as usize,
                    n_benchmarks: (bpy as f64 * years).round().max(1.0) as usize,
                    accel_factor: n,
                    ..base.clone()
                };
                cells.push(SweepCellSpec {
                    accel_factor: n,
                    noise_mult: 1.0,
                    accel_fraction: base.accel_fraction,
                    label: format!("mpy={mpy}_bpy={bpy}_N={n}"),
                    config,
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub replica: usize,
    pub seed: u64,
    pub detected: bool,
    pub lag_months: Option<f64>,
    pub t_break: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCellResult {
    pub spec: SweepCellSpec,
    pub outcomes: Vec<SweepOutcome>,
    pub detection_rate: f64,
    /// Median lag over detected replicas.
    pub median_lag_months: Option<f64>,
    /// 25th/75th percentile of detected lags.
    pub lag_iqr_months: Option<(f64, f64)>,
}

/// Run every cell × replica, in parallel, each replica on an independently
/// derived child seed. Aggregation is by replica index, so the result does
/// not depend on scheduling.
pub fn sweep(
    cells: &[SweepCellSpec],
    det: &DetectorConfig,
    replicas: usize,
    master_seed: u64,
) -> Result<Vec<SweepCellResult>> {
    if replicas == 0 {
        return Err(Error::Config("sweep needs at least one replica".to_string()));
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..replicas).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<(usize, SweepOutcome)> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let seed = child_seed(master_seed, (c * replicas + r) as u64);
            let config = SyntheticConfig {
                seed,
                ..cells[c].config.clone()
            };
            let outcome = detection_experiment(&config, det).map(|o| SweepOutcome {
                replica: r,
                seed,
                detected: o.detected,
                lag_months: o.detection_lag_months,
                t_break: o.breakpoint.as_ref().map(|b| b.t_break),
                ratio: o.breakpoint.as_ref().and_then(|b| b.ratio),
            });
            outcome.map(|o| (c, o))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_cell: Vec<Vec<SweepOutcome>> = vec![Vec::new(); cells.len()];
    for (c, o) in outcomes {
        per_cell[c].push(o);
    }
    let mut results = Vec::with_capacity(cells.len());
    for (spec, mut outcomes) in cells.iter().cloned().zip(per_cell) {
        outcomes.sort_by_key(|o| o.replica);
        let lags: Vec<f64> = outcomes.iter().filter_map(|o| o.lag_months).collect();
        let detection_rate = lags.len() as f64 / outcomes.len() as f64;
        let (median_lag_months, lag_iqr_months) = if lags.is_empty() {
            (None, None)
        } else {
            (
                Some(median(&lags)),
                Some((percentile(&lags, 0.25), percentile(&lags, 0.75))),
            )
        };
        results.push(SweepCellResult {
            spec,
            outcomes,
            detection_rate,
            median_lag_months,
            lag_iqr_months,
        });
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FalsePositiveReport {
    pub rate: f64,
    /// Exact binomial 95% CI.
    pub ci: (f64, f64),
    pub n_replicas: usize,
    pub n_fired: usize,
    /// First and last observation cutoff of the replay window.
    pub window: (f64, f64),
}

/// Fraction of no-acceleration replicas on which the detector fires at any
/// observation cutoff in the window.
///
/// The observation window is configurable: cutoffs step monthly from
/// `obs_start` (default: one step after t_start) to t_end.
pub fn false_positive_rate(
    config: &SyntheticConfig,
    det: &DetectorConfig,
    replicas: usize,
    obs_start: Option<f64>,
) -> Result<FalsePositiveReport> {
    if config.accel_factor != 1.0 {
        return Err(Error::Config(
            "false-positive runs need a non-accelerating config (N = 1)".to_string(),
        ));
    }
    if replicas < 20 {
        return Err(Error::Config(format!(
            "false-positive rate needs at least 20 replicas, got {replicas}"
        )));
    }
    let step = det.observation_step_months / 12.0;
    let start = obs_start.unwrap_or(config.t_start + step);
    if start <= config.t_start || start > config.t_end {
        return Err(Error::Config(
            "obs_start must lie inside (t_start, t_end]".to_string(),
        ));
    }

    let fired: Vec<bool> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<bool> {
            let seed = child_seed(config.seed, r as u64);
            let (table, _) = generate(&SyntheticConfig {
                seed,
                ..config.clone()
            })?;
            let mut cutoff = start;
            while cutoff <= config.t_end + 1e-9 {
                if let Some(bp) = detect_at_cutoff(&table, cutoff, det)? {
                    if bp.detected {
                        return Ok(true);
                    }
                }
                cutoff += step;
            }
            Ok(false)
        })
        .collect::<Result<Vec<_>>>()?;

    let n_fired = fired.iter().filter(|f| **f).count();
    let rate = n_fired as f64 / replicas as f64;
    let ci = binomial_ci_exact(n_fired, replicas, 0.95)?;
    Ok(FalsePositiveReport {
        rate,
        ci,
        n_replicas: replicas,
        n_fired,
        window: (start, config.t_end),
    })
}
