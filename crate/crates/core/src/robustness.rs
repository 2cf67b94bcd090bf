//! Stress tests of the fitted scale: anchor sweeps, random benchmark
//! subsets, the optimized-for permutation test, and sigmoid vs
//! clipped-linear link comparison.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Datelike;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{BenchmarkLabel, ScoreTable};
use crate::error::{Error, Result};
use crate::stats::{child_seed, median, percentile, SimpleOls};
use crate::stitch::{
    cross_validate, diagnostics, fit, FitConfig, FitResult, GaugeSpec, Link, StitchParams,
};
use crate::trends::{fit_linear_trend, frontier, CapabilityPoint};

/// Spread of gauged estimates when the anchor choice varies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorSweepResult {
    /// model_id → (mean capability, std across anchors).
    pub models: BTreeMap<String, (f64, f64)>,
    /// benchmark_id → (mean difficulty, std across anchors).
    pub benchmarks: BTreeMap<String, (f64, f64)>,
    /// Labels of the anchors whose fits converged and were included.
    pub anchors_used: Vec<String>,
    /// Anchors excluded, with the reason.
    pub failed: Vec<(String, String)>,
}

fn gauge_label(g: &GaugeSpec) -> String {
    match g {
        GaugeSpec::BenchmarkAnchor { anchor_benchmark } => anchor_benchmark.clone(),
        GaugeSpec::ModelPairAnchor { anchor_models } => {
            format!("{}+{}", anchor_models[0].0, anchor_models[1].0)
        }
    }
}

/// Align `params` onto `reference` by the least-squares affine map of
/// capabilities (the gauge freedom is exactly affine).
fn align_to_reference(params: &StitchParams, reference: &StitchParams) -> Result<StitchParams> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (id, c) in &params.capability {
        if let Some(r) = reference.capability.get(id) {
            xs.push(*c);
            ys.push(*r);
        }
    }
    let ols = SimpleOls::fit(&xs, &ys)?;
    let (u, v) = (ols.slope, ols.intercept);
    if u <= 0.0 {
        return Err(Error::Gauge(
            "alignment map reverses orientation".to_string(),
        ));
    }
    Ok(StitchParams {
        capability: params
            .capability
            .iter()
            .map(|(id, c)| (id.clone(), u * c + v))
            .collect(),
        difficulty: params
            .difficulty
            .iter()
            .map(|(id, d)| (id.clone(), u * d + v))
            .collect(),
        slope: params
            .slope
            .iter()
            .map(|(id, a)| (id.clone(), a / u))
            .collect(),
        gauge: reference.gauge.clone(),
    })
}

/// Refit the table under each anchor, align all fits into the first
/// converged anchor's frame, and report the per-entity spread.
pub fn anchor_sweep(
    table: &ScoreTable,
    config: &FitConfig,
    anchors: &[GaugeSpec],
) -> Result<AnchorSweepResult> {
    if anchors.is_empty() {
        return Err(Error::Config("anchor sweep needs at least one anchor".to_string()));
    }
    let fits: Vec<(String, Result<FitResult>)> = anchors
        .par_iter()
        .map(|g| (gauge_label(g), fit(table, config, g)))
        .collect();

    let mut aligned: Vec<StitchParams> = Vec::new();
    let mut anchors_used = Vec::new();
    let mut failed = Vec::new();
    let mut reference: Option<StitchParams> = None;
    for (label, outcome) in fits {
        match outcome {
            Ok(f) if f.converged => match &reference {
                None => {
                    reference = Some(f.params.clone());
                    aligned.push(f.params);
                    anchors_used.push(label);
                }
                Some(r) => match align_to_reference(&f.params, r) {
                    Ok(p) => {
                        aligned.push(p);
                        anchors_used.push(label);
                    }
                    Err(e) => failed.push((label, e.to_string())),
                },
            },
            Ok(_) => failed.push((label, "fit did not converge".to_string())),
            Err(e) => failed.push((label, e.to_string())),
        }
    }
    if aligned.is_empty() {
        return Err(Error::Numerical(
            "every anchor fit failed or diverged".to_string(),
        ));
    }

    let spread = |values: Vec<f64>| -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let mut models = BTreeMap::new();
    for id in aligned[0].capability.keys() {
        let vals: Vec<f64> = aligned.iter().map(|p| p.capability[id]).collect();
        models.insert(id.clone(), spread(vals));
    }
    let mut benchmarks = BTreeMap::new();
    for id in aligned[0].difficulty.keys() {
        let vals: Vec<f64> = aligned.iter().map(|p| p.difficulty[id]).collect();
        benchmarks.insert(id.clone(), spread(vals));
    }
    Ok(AnchorSweepResult {
        models,
        benchmarks,
        anchors_used,
        failed,
    })
}

/// Frontier-trend slope distribution under random benchmark subsets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetSlopes {
    /// (run index, slope) for runs that produced a trend.
    pub slopes: Vec<(usize, f64)>,
    /// Runs that failed, with reasons; never silently dropped.
    pub failed: Vec<(usize, String)>,
    pub median: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    pub drop_frac: f64,
    pub n_runs: usize,
    pub seed: u64,
}

/// Per run: drop a seeded fraction of benchmarks, refit, and record the
/// frontier trend slope.
pub fn random_subset_slopes(
    table: &ScoreTable,
    config: &FitConfig,
    drop_frac: f64,
    n_runs: usize,
    min_benchmarks: usize,
    seed: u64,
) -> Result<SubsetSlopes> {
    if !(0.0..1.0).contains(&drop_frac) {
        return Err(Error::Config("drop_frac must be in [0, 1)".to_string()));
    }
    if n_runs == 0 {
        return Err(Error::Config("need at least one run".to_string()));
    }
    let all_benches: Vec<String> = table.benchmarks().keys().cloned().collect();
    let keep_count = ((1.0 - drop_frac) * all_benches.len() as f64).round() as usize;
    if keep_count < 5 {
        return Err(Error::InsufficientData(format!(
            "subset runs must keep at least 5 benchmarks, would keep {keep_count}"
        )));
    }

    let runs: Vec<(usize, std::result::Result<f64, String>)> = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, run as u64));
            let mut ids = all_benches.clone();
            ids.shuffle(&mut rng);
            let keep: BTreeSet<String> = ids.into_iter().take(keep_count).collect();
            let outcome = subset_slope(table, config, &keep, min_benchmarks);
            (run, outcome.map_err(|e| e.to_string()))
        })
        .collect();

    let mut slopes = Vec::new();
    let mut failed = Vec::new();
    for (run, outcome) in runs {
        match outcome {
            Ok(s) => slopes.push((run, s)),
            Err(reason) => failed.push((run, reason)),
        }
    }
    if slopes.is_empty() {
        return Err(Error::Numerical("every subset run failed".to_string()));
    }
    let values: Vec<f64> = slopes.iter().map(|(_, s)| *s).collect();
    Ok(SubsetSlopes {
        median: median(&values),
        p2_5: percentile(&values, 0.025),
        p97_5: percentile(&values, 0.975),
        slopes,
        failed,
        drop_frac,
        n_runs,
        seed,
    })
}

fn subset_slope(
    table: &ScoreTable,
    config: &FitConfig,
    keep: &BTreeSet<String>,
    min_benchmarks: usize,
) -> Result<f64> {
    let sub = table.restrict_benchmarks(keep);
    let filtered = sub.filter_min_benchmarks(min_benchmarks)?;
    if filtered.n_records() == 0 {
        return Err(Error::InsufficientData(
            "subset left no usable records".to_string(),
        ));
    }
    let anchor = filtered
        .models_per_benchmark()
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(id, _)| id.to_string())
        .expect("non-empty table");
    let fitted = fit(&filtered, config, &GaugeSpec::benchmark_anchor(anchor))?;
    if !fitted.converged {
        return Err(Error::Numerical("subset fit did not converge".to_string()));
    }
    let points: Vec<CapabilityPoint> = fitted
        .params
        .capability
        .iter()
        .map(|(id, c)| {
            CapabilityPoint::new(
                id.clone(),
                crate::dataset::fractional_year(filtered.model_release(id).unwrap()),
                *c,
            )
        })
        .collect();
    let trend = fit_linear_trend(&frontier(&points))?;
    Ok(trend.slope)
}

/// Result of the optimized-for benchmark-gaming test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationResult {
    /// Mean capability difference, optimized-for minus not, averaged over
    /// anchors.
    pub observed_diff: f64,
    pub per_anchor: Vec<AnchorTest>,
    /// Arithmetic mean of the per-anchor p-values.
    pub mean_p: f64,
    pub n_permutations: usize,
    pub recency_year: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorTest {
    pub anchor: String,
    pub anchor_is_optimized_for: bool,
    /// Mean capability difference (optimized-for fit minus other fit) over
    /// shared models.
    pub diff: f64,
    pub p_value: f64,
}

/// Benchmark-gaming test: fit capabilities separately on optimized-for and
/// not-optimized-for benchmark sets (recency-filtered, anchor included in
/// both sides) and compare against random equal partitions.
#[allow(clippy::too_many_arguments)]
pub fn optimized_for_test(
    table: &ScoreTable,
    labels: &[BenchmarkLabel],
    config: &FitConfig,
    anchor_pool_size: usize,
    n_permutations: usize,
    recency_year: i32,
    seed: u64,
) -> Result<PermutationResult> {
    if n_permutations == 0 {
        return Err(Error::Config(
            "permutation test needs at least one permutation".to_string(),
        ));
    }
    if anchor_pool_size == 0 {
        return Err(Error::Config("anchor_pool_size must be positive".to_string()));
    }
    let label_map: BTreeMap<&str, bool> = labels
        .iter()
        .map(|l| (l.benchmark_id.as_str(), l.optimized_for))
        .collect();

    // Recency filter: benchmarks released in `recency_year` or later;
    // benchmarks without a release date cannot pass the filter.
    let recent: BTreeSet<String> = table
        .benchmarks()
        .iter()
        .filter(|(_, release)| release.map_or(false, |d| d.year() >= recency_year))
        .map(|(id, _)| id.clone())
        .collect();
    let filtered = table.restrict_benchmarks(&recent);
    if filtered.n_records() == 0 {
        return Err(Error::Protocol(format!(
            "no benchmarks released in {recency_year} or later"
        )));
    }
    for id in filtered.benchmarks().keys() {
        if !label_map.contains_key(id.as_str()) {
            return Err(Error::Protocol(format!(
                "benchmark {id} has no optimized-for label"
            )));
        }
    }

    let coverage = filtered.models_per_benchmark();
    let mut by_class: [Vec<(&str, usize)>; 2] = [Vec::new(), Vec::new()];
    for (id, count) in &coverage {
        let class = usize::from(label_map[*id]);
        by_class[class].push((id, *count));
    }
    if by_class[0].is_empty() || by_class[1].is_empty() {
        return Err(Error::Protocol(
            "both optimized-for and not-optimized-for classes must be non-empty after the recency filter"
                .to_string(),
        ));
    }
    // Top coverage first, ties to the lexicographically first id.
    for class in by_class.iter_mut() {
        class.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    }
    let mut anchors: Vec<(String, bool)> = Vec::new();
    for (class_idx, class) in by_class.iter().enumerate() {
        for (id, _) in class.iter().take(anchor_pool_size) {
            anchors.push((id.to_string(), class_idx == 1));
        }
    }

    let optimized: BTreeSet<String> = filtered
        .benchmarks()
        .keys()
        .filter(|id| label_map[id.as_str()])
        .cloned()
        .collect();
    let not_optimized: BTreeSet<String> = filtered
        .benchmarks()
        .keys()
        .filter(|id| !label_map[id.as_str()])
        .cloned()
        .collect();

    let per_anchor: Vec<AnchorTest> = anchors
        .iter()
        .enumerate()
        .map(|(ai, (anchor, is_opt))| -> Result<AnchorTest> {
            let mut opt_side = optimized.clone();
            opt_side.insert(anchor.clone());
            let mut not_side = not_optimized.clone();
            not_side.insert(anchor.clone());
            let diff = split_diff(&filtered, config, anchor, &opt_side, &not_side)?;

            // Null distribution: random equal partitions of the remaining
            // benchmarks, anchor added to both sides.
            let rest: Vec<String> = filtered
                .benchmarks()
                .keys()
                .filter(|id| *id != anchor)
                .cloned()
                .collect();
            let null_diffs: Vec<f64> = (0..n_permutations)
                .into_par_iter()
                .map(|p| -> Result<f64> {
                    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(
                        seed,
                        (ai * n_permutations + p) as u64,
                    ));
                    let (side_a, side_b) =
                        equal_partition(&filtered, &rest, anchor, &mut rng);
                    split_diff(&filtered, config, anchor, &side_a, &side_b)
                })
                .collect::<Result<Vec<_>>>()?;
            let exceed = null_diffs.iter().filter(|d| **d >= diff).count();
            let p_value = (1 + exceed) as f64 / (n_permutations + 1) as f64;
            Ok(AnchorTest {
                anchor: anchor.clone(),
                anchor_is_optimized_for: *is_opt,
                diff,
                p_value,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let observed_diff =
        per_anchor.iter().map(|a| a.diff).sum::<f64>() / per_anchor.len() as f64;
    let mean_p = per_anchor.iter().map(|a| a.p_value).sum::<f64>() / per_anchor.len() as f64;
    Ok(PermutationResult {
        observed_diff,
        per_anchor,
        mean_p,
        n_permutations,
        recency_year,
    })
}

/// Random equal split of `rest` into two sides, both including the anchor.
/// Resampled (bounded) until every model of `table` keeps at least one
/// benchmark on each side, so the two sub-fits share all models.
fn equal_partition(
    table: &ScoreTable,
    rest: &[String],
    anchor: &str,
    rng: &mut ChaCha8Rng,
) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut ids: Vec<&String> = rest.iter().collect();
    let half = ids.len() / 2;
    for _ in 0..50 {
        ids.shuffle(rng);
        let mut side_a: BTreeSet<String> = ids[..half].iter().map(|s| s.to_string()).collect();
        let mut side_b: BTreeSet<String> = ids[half..].iter().map(|s| s.to_string()).collect();
        side_a.insert(anchor.to_string());
        side_b.insert(anchor.to_string());
        let covered = |side: &BTreeSet<String>| -> bool {
            let sub = table.restrict_benchmarks(side);
            sub.n_models() == table.n_models()
        };
        if covered(&side_a) && covered(&side_b) {
            return (side_a, side_b);
        }
    }
    // Accept the last resample; the difference is then computed over the
    // models shared between the two sides.
    let mut side_a: BTreeSet<String> = ids[..half].iter().map(|s| s.to_string()).collect();
    let mut side_b: BTreeSet<String> = ids[half..].iter().map(|s| s.to_string()).collect();
    side_a.insert(anchor.to_string());
    side_b.insert(anchor.to_string());
    (side_a, side_b)
}

/// Mean capability difference (fit on side_a minus fit on side_b) over the
/// models present in both sub-fits, with the anchor benchmark fixing the
/// gauge on both sides.
fn split_diff(
    table: &ScoreTable,
    config: &FitConfig,
    anchor: &str,
    side_a: &BTreeSet<String>,
    side_b: &BTreeSet<String>,
) -> Result<f64> {
    let gauge = GaugeSpec::benchmark_anchor(anchor);
    let fit_a = fit(&table.restrict_benchmarks(side_a), config, &gauge)?;
    let fit_b = fit(&table.restrict_benchmarks(side_b), config, &gauge)?;
    let mut diffs = Vec::new();
    for (id, ca) in &fit_a.params.capability {
        if let Some(cb) = fit_b.params.capability.get(id) {
            diffs.push(ca - cb);
        }
    }
    if diffs.is_empty() {
        return Err(Error::Protocol(
            "no shared models between the two benchmark sides".to_string(),
        ));
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// Fit metrics per link function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkMetrics {
    pub link: Link,
    pub r2: f64,
    pub mse: f64,
    pub aic: f64,
    pub bic: f64,
    pub n_params: usize,
    pub converged: bool,
    /// Mean held-out MSE from k-fold cross-validation; absent when CV is
    /// infeasible (e.g. degenerate tables).
    pub cv_mse: Option<f64>,
    pub cv_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkComparison {
    pub rows: Vec<LinkMetrics>,
    pub cv_folds: usize,
}

/// Fit, diagnose and cross-validate the table under both link functions.
pub fn link_comparison(
    table: &ScoreTable,
    base: &FitConfig,
    gauge: &GaugeSpec,
    cv_folds: usize,
    seed: u64,
) -> Result<LinkComparison> {
    let mut rows = Vec::new();
    for link in [Link::Sigmoid, Link::ClippedLinear] {
        let config = FitConfig { link, ..*base };
        let fitted = fit(table, &config, gauge)?;
        let diag = diagnostics(&fitted, table)?;
        let cv = cross_validate(table, &config, gauge, cv_folds, seed).ok();
        rows.push(LinkMetrics {
            link,
            r2: diag.r2,
            mse: diag.mse,
            aic: diag.aic,
            bic: diag.bic,
            n_params: fitted.n_params,
            converged: fitted.converged,
            cv_mse: cv.as_ref().map(|c| c.mean_mse),
            cv_r2: cv.as_ref().map(|c| c.mean_r2),
        });
    }
    Ok(LinkComparison { rows, cv_folds })
}
