//! Ingestion, validation and normalization of the model×benchmark score data
//! and its side tables (training compute, time horizons, optimized-for
//! labels).
//!
//! A [`ScoreTable`] is canonical: records are unique per (model, benchmark)
//! pair (duplicates collapsed by maximum score), sorted, and every id in a
//! record appears in the model/benchmark sets. All operations here are pure;
//! they return new tables.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convert a calendar date to fractional years:
/// `year + (day_of_year - 1) / days_in_year`.
pub fn fractional_year(date: NaiveDate) -> f64 {
    let year = date.year() as f64;
    let doy = date.ordinal() as f64;
    let days = if date.leap_year() { 366.0 } else { 365.0 };
    year + (doy - 1.0) / days
}

/// One observed score of a model on a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub model_id: String,
    pub benchmark_id: String,
    /// Fraction in [0, 1].
    pub score: f64,
    pub model_release: NaiveDate,
    pub benchmark_release: Option<NaiveDate>,
}

/// Canonical table of scores plus the model/benchmark sets with their
/// release dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    records: Vec<ScoreRecord>,
    models: BTreeMap<String, NaiveDate>,
    benchmarks: BTreeMap<String, Option<NaiveDate>>,
}

/// Options for [`load_scores`] / [`ScoreTable::from_records`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Input scores are percentages; divide by 100 on load.
    pub percent: bool,
    /// Error on duplicate (model, benchmark) rows instead of taking the max.
    pub strict_duplicates: bool,
}

impl ScoreTable {
    /// Build a canonical table from raw records.
    ///
    /// Duplicate (model, benchmark) pairs collapse to the maximum score
    /// (or error under `strict_duplicates`). Release dates must be
    /// consistent across rows mentioning the same entity.
    pub fn from_records(records: Vec<ScoreRecord>, options: LoadOptions) -> Result<ScoreTable> {
        let mut models: BTreeMap<String, NaiveDate> = BTreeMap::new();
        let mut benchmarks: BTreeMap<String, Option<NaiveDate>> = BTreeMap::new();
        let mut by_pair: BTreeMap<(String, String), ScoreRecord> = BTreeMap::new();

        for rec in records {
            if !(0.0..=1.0).contains(&rec.score) {
                return Err(Error::Validation(format!(
                    "score {} for ({}, {}) outside [0, 1]",
                    rec.score, rec.model_id, rec.benchmark_id
                )));
            }
            match models.get(&rec.model_id) {
                None => {
                    models.insert(rec.model_id.clone(), rec.model_release);
                }
                Some(existing) if *existing != rec.model_release => {
                    return Err(Error::Validation(format!(
                        "inconsistent release date for model {}: {} vs {}",
                        rec.model_id, existing, rec.model_release
                    )));
                }
                _ => {}
            }
            match benchmarks.get(&rec.benchmark_id) {
                None => {
                    benchmarks.insert(rec.benchmark_id.clone(), rec.benchmark_release);
                }
                Some(existing) if *existing != rec.benchmark_release => {
                    return Err(Error::Validation(format!(
                        "inconsistent release date for benchmark {}",
                        rec.benchmark_id
                    )));
                }
                _ => {}
            }
            let key = (rec.model_id.clone(), rec.benchmark_id.clone());
            match by_pair.get_mut(&key) {
                None => {
                    by_pair.insert(key, rec);
                }
                Some(existing) => {
                    if options.strict_duplicates {
                        return Err(Error::Validation(format!(
                            "duplicate rows for ({}, {}) in strict mode",
                            key.0, key.1
                        )));
                    }
                    if rec.score > existing.score {
                        existing.score = rec.score;
                    }
                }
            }
        }

        Ok(ScoreTable {
            records: by_pair.into_values().collect(),
            models,
            benchmarks,
        })
    }

    pub fn records(&self) -> &[ScoreRecord] {
        &self.records
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn n_benchmarks(&self) -> usize {
        self.benchmarks.len()
    }

    pub fn models(&self) -> &BTreeMap<String, NaiveDate> {
        &self.models
    }

    pub fn benchmarks(&self) -> &BTreeMap<String, Option<NaiveDate>> {
        &self.benchmarks
    }

    pub fn model_release(&self, model_id: &str) -> Option<NaiveDate> {
        self.models.get(model_id).copied()
    }

    /// Number of benchmarks each model is scored on.
    pub fn benchmarks_per_model(&self) -> BTreeMap<&str, usize> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for rec in &self.records {
            *counts.entry(rec.model_id.as_str()).or_insert(0) += 1;
        }
        counts
    }

    /// Number of models scored on each benchmark.
    pub fn models_per_benchmark(&self) -> BTreeMap<&str, usize> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for rec in &self.records {
            *counts.entry(rec.benchmark_id.as_str()).or_insert(0) += 1;
        }
        counts
    }

    /// Keep only models evaluated on at least `min_count` benchmarks, then
    /// prune benchmarks left without any record. Idempotent.
    pub fn filter_min_benchmarks(&self, min_count: usize) -> Result<ScoreTable> {
        if min_count < 1 {
            return Err(Error::Config(format!(
                "min_count must be at least 1, got {min_count}"
            )));
        }
        let counts = self.benchmarks_per_model();
        let records: Vec<ScoreRecord> = self
            .records
            .iter()
            .filter(|r| counts.get(r.model_id.as_str()).copied().unwrap_or(0) >= min_count)
            .cloned()
            .collect();
        Ok(self.rebuild(records))
    }

    /// Keep records whose model release falls in `[start, end]` (inclusive),
    /// pruning entities left without records.
    pub fn date_window(&self, start: NaiveDate, end: NaiveDate) -> Result<ScoreTable> {
        if start > end {
            return Err(Error::Config(format!(
                "window start {start} after end {end}"
            )));
        }
        let records: Vec<ScoreRecord> = self
            .records
            .iter()
            .filter(|r| r.model_release >= start && r.model_release <= end)
            .cloned()
            .collect();
        Ok(self.rebuild(records))
    }

    /// Keep the records whose index satisfies `keep`, pruning empty
    /// entities. Indices refer to the canonical record order.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> ScoreTable {
        let records: Vec<ScoreRecord> = self
            .records
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, r)| r.clone())
            .collect();
        self.rebuild(records)
    }

    /// Restrict to the given benchmark ids, pruning empty models.
    pub fn restrict_benchmarks(&self, keep: &std::collections::BTreeSet<String>) -> ScoreTable {
        let records: Vec<ScoreRecord> = self
            .records
            .iter()
            .filter(|r| keep.contains(&r.benchmark_id))
            .cloned()
            .collect();
        self.rebuild(records)
    }

    fn rebuild(&self, records: Vec<ScoreRecord>) -> ScoreTable {
        let mut models = BTreeMap::new();
        let mut benchmarks = BTreeMap::new();
        for rec in &records {
            models
                .entry(rec.model_id.clone())
                .or_insert(rec.model_release);
            benchmarks
                .entry(rec.benchmark_id.clone())
                .or_insert(rec.benchmark_release);
        }
        ScoreTable {
            records,
            models,
            benchmarks,
        }
    }

    /// Pairwise model-overlap counts between benchmarks. Entry (i, j) is the
    /// number of models evaluated on both benchmarks; the diagonal holds
    /// per-benchmark model counts.
    pub fn overlap_matrix(&self) -> OverlapMatrix {
        let ids: Vec<String> = self.benchmarks.keys().cloned().collect();
        let index: BTreeMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let b = ids.len();
        let mut per_model: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for rec in &self.records {
            per_model
                .entry(rec.model_id.as_str())
                .or_default()
                .push(index[rec.benchmark_id.as_str()]);
        }
        let mut counts = vec![0u32; b * b];
        for benches in per_model.values() {
            for &i in benches {
                for &j in benches {
                    counts[i * b + j] += 1;
                }
            }
        }
        OverlapMatrix {
            benchmark_ids: ids,
            counts,
        }
    }
}

/// Symmetric benchmark-overlap matrix (see [`ScoreTable::overlap_matrix`]).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapMatrix {
    pub benchmark_ids: Vec<String>,
    /// Row-major `benchmark_ids.len()²` counts.
    pub counts: Vec<u32>,
}

impl OverlapMatrix {
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.benchmark_ids.len() + j]
    }
}

/// Training-compute record for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeRecord {
    pub model_id: String,
    /// Training FLOP, strictly positive.
    pub training_flop: f64,
    pub family: Option<String>,
    pub distilled: bool,
}

/// Human task-time horizon for one model, in the source data's units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRecord {
    pub model_id: String,
    pub horizon: f64,
}

/// Whether a benchmark is publicly reported on ("optimized for") by a
/// frontier lab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkLabel {
    pub benchmark_id: String,
    pub optimized_for: bool,
}

const SCORES_HEADER: [&str; 5] = [
    "model_id",
    "benchmark_id",
    "score",
    "model_release",
    "benchmark_release",
];

fn check_header(actual: &csv::StringRecord, expected: &[&str], what: &str) -> Result<Vec<usize>> {
    let actual_cols: Vec<&str> = actual.iter().map(|s| s.trim()).collect();
    for col in &actual_cols {
        if !expected.contains(col) {
            return Err(Error::Schema(format!(
                "unknown column {col:?} in {what} header; expected exactly {expected:?}"
            )));
        }
    }
    let mut positions = Vec::with_capacity(expected.len());
    for col in expected {
        match actual_cols.iter().position(|c| c == col) {
            Some(p) => positions.push(p),
            None => {
                return Err(Error::Schema(format!(
                    "missing column {col:?} in {what} header; expected exactly {expected:?}"
                )))
            }
        }
    }
    Ok(positions)
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_date(s: &str, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| Error::Parse {
        line,
        message: format!("invalid ISO-8601 date {s:?}"),
    })
}

fn parse_f64(s: &str, what: &str, line: u64) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} {s:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite {what} {s:?}"),
        });
    }
    Ok(v)
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

/// Load the scores CSV (`model_id,benchmark_id,score,model_release,
/// benchmark_release`) into a canonical [`ScoreTable`].
pub fn load_scores(path: &Path, options: LoadOptions) -> Result<ScoreTable> {
    let mut reader = open_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let pos = check_header(&header, &SCORES_HEADER, "scores")?;

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&row);
        if row.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", header.len(), row.len()),
            });
        }
        let field = |i: usize| row.get(pos[i]).unwrap_or("");
        let mut score = parse_f64(field(2), "score", line)?;
        if options.percent {
            score /= 100.0;
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Validation(format!(
                "line {line}: score {score} outside [0, 1]"
            )));
        }
        let benchmark_release = match field(4) {
            "" => None,
            s => Some(parse_date(s, line)?),
        };
        records.push(ScoreRecord {
            model_id: field(0).to_string(),
            benchmark_id: field(1).to_string(),
            score,
            model_release: parse_date(field(3), line)?,
            benchmark_release,
        });
    }
    ScoreTable::from_records(records, options)
}

/// Write a canonical table back out in the scores CSV schema.
pub fn write_scores(path: &Path, table: &ScoreTable) -> Result<()> {
    let mut out = String::new();
    out.push_str(&SCORES_HEADER.join(","));
    out.push('\n');
    for rec in table.records() {
        let bench_release = rec
            .benchmark_release
            .map(|d| d.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.model_id, rec.benchmark_id, rec.score, rec.model_release, bench_release
        ));
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load the compute CSV: `model_id,training_flop,family,distilled`.
pub fn load_compute(path: &Path) -> Result<Vec<ComputeRecord>> {
    let mut reader = open_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let pos = check_header(
        &header,
        &["model_id", "training_flop", "family", "distilled"],
        "compute",
    )?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&row);
        let field = |i: usize| row.get(pos[i]).unwrap_or("");
        let training_flop = parse_f64(field(1), "training_flop", line)?;
        if training_flop <= 0.0 || !training_flop.log10().is_finite() {
            return Err(Error::Validation(format!(
                "line {line}: training_flop must be positive and finite in log10"
            )));
        }
        let distilled = match field(3) {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("distilled must be true or false, got {other:?}"),
                })
            }
        };
        out.push(ComputeRecord {
            model_id: field(0).to_string(),
            training_flop,
            family: match field(2) {
                "" => None,
                s => Some(s.to_string()),
            },
            distilled,
        });
    }
    Ok(out)
}

/// Load the horizons CSV: `model_id,horizon`.
pub fn load_horizons(path: &Path) -> Result<Vec<HorizonRecord>> {
    let mut reader = open_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let pos = check_header(&header, &["model_id", "horizon"], "horizons")?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&row);
        let field = |i: usize| row.get(pos[i]).unwrap_or("");
        let horizon = parse_f64(field(1), "horizon", line)?;
        if horizon <= 0.0 {
            return Err(Error::Validation(format!(
                "line {line}: horizon must be positive"
            )));
        }
        out.push(HorizonRecord {
            model_id: field(0).to_string(),
            horizon,
        });
    }
    Ok(out)
}

/// Load the labels CSV: `benchmark_id,optimized_for`.
pub fn load_labels(path: &Path) -> Result<Vec<BenchmarkLabel>> {
    let mut reader = open_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let pos = check_header(&header, &["benchmark_id", "optimized_for"], "labels")?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record_line(&row);
        let field = |i: usize| row.get(pos[i]).unwrap_or("");
        let optimized_for = match field(1) {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("optimized_for must be true or false, got {other:?}"),
                })
            }
        };
        out.push(BenchmarkLabel {
            benchmark_id: field(0).to_string(),
            optimized_for,
        });
    }
    Ok(out)
}
