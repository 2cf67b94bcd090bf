//! Seeded k-fold cross-validation of the latent score model.
//!
//! Records are shuffled once per attempt and dealt into contiguous folds.
//! A partition is only accepted when every model and benchmark keeps at
//! least one training observation in every fold; otherwise it is resampled
//! a bounded number of times.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ScoreTable;
use crate::error::{Error, Result};
use crate::stitch::{fit, predict_score, FitConfig, GaugeSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFold {
    pub fold: usize,
    pub n_test: usize,
    /// Held-out mean squared error.
    pub mse: f64,
    /// Held-out R².
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<CvFold>,
    /// Mean of the per-fold MSEs.
    pub mean_mse: f64,
    /// Total held-out squared error divided by the total observation count.
    pub pooled_mse: f64,
    pub mean_r2: f64,
    pub folds_requested: usize,
    pub seed: u64,
}

const MAX_PARTITION_ATTEMPTS: usize = 100;

pub fn cross_validate(
    table: &ScoreTable,
    config: &FitConfig,
    gauge: &GaugeSpec,
    folds: usize,
    seed: u64,
) -> Result<CvSummary> {
    let n = table.n_records();
    if folds < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 2 folds, got {folds}"
        )));
    }
    if folds > n {
        return Err(Error::Config(format!(
            "cannot split {n} records into {folds} folds"
        )));
    }

    let assignment = find_partition(table, folds, seed)?;

    let mut fold_reports = Vec::with_capacity(folds);
    let mut pooled_sse = 0.0;
    for fold in 0..folds {
        let train = table.subset(|i| assignment[i] != fold);
        let fitted = fit(&train, config, gauge)?;
        let mut sse = 0.0;
        let mut actual = Vec::new();
        for (i, rec) in table.records().iter().enumerate() {
            if assignment[i] != fold {
                continue;
            }
            let pred = predict_score(
                &fitted.params,
                &rec.model_id,
                &rec.benchmark_id,
                config.link,
            )?;
            let r = rec.score - pred;
            sse += r * r;
            actual.push(rec.score);
        }
        pooled_sse += sse;
        let n_test = actual.len();
        let mean = actual.iter().sum::<f64>() / n_test as f64;
        let tss: f64 = actual.iter().map(|s| (s - mean).powi(2)).sum();
        let r2 = if tss > 0.0 {
            1.0 - sse / tss
        } else if sse <= 1e-12 {
            1.0
        } else {
            0.0
        };
        fold_reports.push(CvFold {
            fold,
            n_test,
            mse: sse / n_test as f64,
            r2,
        });
    }

    let mean_mse = fold_reports.iter().map(|f| f.mse).sum::<f64>() / folds as f64;
    let mean_r2 = fold_reports.iter().map(|f| f.r2).sum::<f64>() / folds as f64;
    Ok(CvSummary {
        folds: fold_reports,
        mean_mse,
        pooled_mse: pooled_sse / n as f64,
        mean_r2,
        folds_requested: folds,
        seed,
    })
}

/// Assign each record index to a fold such that no fold swallows all the
/// records of any model or benchmark.
fn find_partition(table: &ScoreTable, folds: usize, seed: u64) -> Result<Vec<usize>> {
    let n = table.n_records();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..MAX_PARTITION_ATTEMPTS {
        order.shuffle(&mut rng);
        let mut assignment = vec![0usize; n];
        for (pos, &rec_idx) in order.iter().enumerate() {
            assignment[rec_idx] = pos * folds / n;
        }
        if partition_ok(table, &assignment, folds) {
            return Ok(assignment);
        }
    }

    // Report the most constrained entity; with one record it can never keep
    // a training observation when its fold is held out.
    let offender = table
        .benchmarks_per_model()
        .into_iter()
        .map(|(id, c)| (format!("model {id}"), c))
        .chain(
            table
                .models_per_benchmark()
                .into_iter()
                .map(|(id, c)| (format!("benchmark {id}"), c)),
        )
        .min_by_key(|(_, c)| *c)
        .map(|(id, _)| id)
        .unwrap_or_else(|| "unknown".to_string());
    Err(Error::Partition { entity: offender })
}

fn partition_ok(table: &ScoreTable, assignment: &[usize], folds: usize) -> bool {
    // counts[entity][fold]; an entity fails when one fold holds all its
    // records.
    let n_models = table.n_models();
    let model_ids: Vec<&str> = table.models().keys().map(String::as_str).collect();
    let bench_ids: Vec<&str> = table.benchmarks().keys().map(String::as_str).collect();
    let model_pos: std::collections::BTreeMap<&str, usize> = model_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (*id, i))
        .collect();
    let bench_pos: std::collections::BTreeMap<&str, usize> = bench_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (*id, i))
        .collect();
    let mut counts = vec![0usize; (n_models + bench_ids.len()) * folds];
    let mut totals = vec![0usize; n_models + bench_ids.len()];
    for (i, rec) in table.records().iter().enumerate() {
        let f = assignment[i];
        let mi = model_pos[rec.model_id.as_str()];
        let bi = n_models + bench_pos[rec.benchmark_id.as_str()];
        counts[mi * folds + f] += 1;
        counts[bi * folds + f] += 1;
        totals[mi] += 1;
        totals[bi] += 1;
    }
    for e in 0..totals.len() {
        for f in 0..folds {
            if counts[e * folds + f] == totals[e] {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LoadOptions, ScoreRecord};
    use crate::stitch::{apply_gauge, GaugeSpec, Link, StitchParams};
    use chrono::NaiveDate;
    use rand::Rng;

    fn build_zero_noise_table(n_models: usize, n_benches: usize, seed: u64) -> ScoreTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = StitchParams {
            capability: (0..n_models)
                .map(|i| (format!("m{i:02}"), rng.random_range(-1.0..2.0)))
                .collect(),
            difficulty: (0..n_benches)
                .map(|i| (format!("b{i:02}"), rng.random_range(-0.5..1.5)))
                .collect(),
            slope: (0..n_benches)
                .map(|i| (format!("b{i:02}"), rng.random_range(0.6..1.8)))
                .collect(),
            gauge: GaugeSpec::benchmark_anchor("b00"),
        };
        let truth = apply_gauge(&truth, &GaugeSpec::benchmark_anchor("b00")).unwrap();
        let mut records = Vec::new();
        for m in truth.capability.keys() {
            for b in truth.difficulty.keys() {
                records.push(ScoreRecord {
                    model_id: m.clone(),
                    benchmark_id: b.clone(),
                    score: crate::stitch::predict_score(&truth, m, b, Link::Sigmoid).unwrap(),
                    model_release: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
                    benchmark_release: None,
                });
            }
        }
        ScoreTable::from_records(records, LoadOptions::default()).unwrap()
    }

    #[test]
    fn zero_noise_data_has_tiny_heldout_error() {
        let table = build_zero_noise_table(10, 5, 42);
        let config = FitConfig {
            l2_strength: 1e-8,
            ..Default::default()
        };
        let summary =
            cross_validate(&table, &config, &GaugeSpec::benchmark_anchor("b00"), 5, 7).unwrap();
        for fold in &summary.folds {
            assert!(fold.mse < 1e-6, "fold {} mse {}", fold.fold, fold.mse);
        }
    }

    #[test]
    fn leave_one_out_runs_on_complete_toy_table() {
        // 5 models × 2 benchmarks = 10 records; every entity keeps at least
        // one training record in every leave-one-out fold.
        let table = build_zero_noise_table(5, 2, 3);
        assert_eq!(table.n_records(), 10);
        let summary = cross_validate(
            &table,
            &FitConfig::default(),
            &GaugeSpec::benchmark_anchor("b00"),
            10,
            1,
        )
        .unwrap();
        assert_eq!(summary.folds.len(), 10);
        assert!(summary.folds.iter().all(|f| f.n_test == 1));
    }

    #[test]
    fn deterministic_given_seed() {
        let table = build_zero_noise_table(8, 3, 5);
        let config = FitConfig::default();
        let gauge = GaugeSpec::benchmark_anchor("b00");
        let a = cross_validate(&table, &config, &gauge, 4, 99).unwrap();
        let b = cross_validate(&table, &config, &gauge, 4, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_partition_names_offender() {
        // "lonely" has a single record: the fold holding it always strips
        // its training data.
        let mut records = Vec::new();
        for i in 0..4 {
            for b in ["w", "x"] {
                records.push(ScoreRecord {
                    model_id: format!("m{i}"),
                    benchmark_id: b.to_string(),
                    score: 0.5,
                    model_release: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
                    benchmark_release: None,
                });
            }
        }
        records.push(ScoreRecord {
            model_id: "lonely".to_string(),
            benchmark_id: "w".to_string(),
            score: 0.5,
            model_release: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            benchmark_release: None,
        });
        let table = ScoreTable::from_records(records, LoadOptions::default()).unwrap();
        match cross_validate(
            &table,
            &FitConfig::default(),
            &GaugeSpec::benchmark_anchor("w"),
            9,
            0,
        ) {
            Err(Error::Partition { entity }) => assert!(entity.contains("lonely")),
            other => panic!("expected partition error, got {other:?}"),
        }
    }

    #[test]
    fn too_many_folds_rejected() {
        let table = build_zero_noise_table(2, 2, 0);
        assert!(matches!(
            cross_validate(
                &table,
                &FitConfig::default(),
                &GaugeSpec::benchmark_anchor("b00"),
                50,
                0
            ),
            Err(Error::Config(_))
        ));
    }
}
