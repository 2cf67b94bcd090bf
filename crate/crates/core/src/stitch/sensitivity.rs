//! Sensitivity error bars: how far a single capability or difficulty can be
//! perturbed (all other parameters held fixed) before the total loss rises
//! by a given fraction of its value at the optimum.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::ScoreTable;
use crate::error::{Error, Result};
use crate::stitch::FitResult;

/// Interval around a fitted value, with flags for directions where the loss
/// stayed flat out to the search bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInterval {
    pub lo: f64,
    pub hi: f64,
    pub capped_lo: bool,
    pub capped_hi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityErrors {
    pub loss_bump: f64,
    pub search_bound: f64,
    /// model_id → capability interval.
    pub models: BTreeMap<String, SensitivityInterval>,
    /// benchmark_id → difficulty interval.
    pub benchmarks: BTreeMap<String, SensitivityInterval>,
}

const DEFAULT_SEARCH_BOUND: f64 = 50.0;

/// Sensitivity intervals with the default loss bump semantics: each interval
/// endpoint raises the total loss by exactly `loss_bump` (e.g. 0.05 = 5%)
/// relative to its value at the fitted parameters.
pub fn sensitivity_errors(
    fit: &FitResult,
    table: &ScoreTable,
    loss_bump: f64,
) -> Result<SensitivityErrors> {
    sensitivity_errors_with_bound(fit, table, loss_bump, DEFAULT_SEARCH_BOUND)
}

pub fn sensitivity_errors_with_bound(
    fit: &FitResult,
    table: &ScoreTable,
    loss_bump: f64,
    search_bound: f64,
) -> Result<SensitivityErrors> {
    if !fit.converged {
        return Err(Error::Config(
            "sensitivity analysis requires a converged fit".to_string(),
        ));
    }
    if loss_bump < 0.0 {
        return Err(Error::Config(format!(
            "loss_bump must be non-negative, got {loss_bump}"
        )));
    }

    let total = crate::stitch::total_loss(&fit.params, table, &fit.config)?;
    let target_rise = loss_bump * total;

    // Per-entity record lists: perturbing one parameter only moves the
    // residuals of the records that touch it.
    let mut by_model: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut by_bench: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, rec) in table.records().iter().enumerate() {
        by_model.entry(&rec.model_id).or_default().push(i);
        by_bench.entry(&rec.benchmark_id).or_default().push(i);
    }

    let link = fit.config.link;
    let l2 = fit.config.l2_strength;
    let records = table.records();

    let mut models = BTreeMap::new();
    for (id, value) in &fit.params.capability {
        let idxs = by_model.get(id.as_str()).cloned().unwrap_or_default();
        // Loss restricted to this capability as a function of its value.
        let partial = |v: f64| -> f64 {
            let mut loss = l2 * v * v;
            for &i in &idxs {
                let rec = &records[i];
                let d = fit.params.difficulty[&rec.benchmark_id];
                let a = fit.params.slope[&rec.benchmark_id];
                let r = rec.score - link.value(a * (v - d));
                loss += r * r;
            }
            loss
        };
        models.insert(
            id.clone(),
            bump_interval(*value, target_rise, search_bound, partial),
        );
    }

    let mut benchmarks = BTreeMap::new();
    for (id, value) in &fit.params.difficulty {
        let idxs = by_bench.get(id.as_str()).cloned().unwrap_or_default();
        let a = fit.params.slope[id];
        let partial = |v: f64| -> f64 {
            let mut loss = l2 * v * v;
            for &i in &idxs {
                let rec = &records[i];
                let c = fit.params.capability[&rec.model_id];
                let r = rec.score - link.value(a * (c - v));
                loss += r * r;
            }
            loss
        };
        benchmarks.insert(
            id.clone(),
            bump_interval(*value, target_rise, search_bound, partial),
        );
    }

    Ok(SensitivityErrors {
        loss_bump,
        search_bound,
        models,
        benchmarks,
    })
}

fn bump_interval(
    value: f64,
    target_rise: f64,
    search_bound: f64,
    partial: impl Fn(f64) -> f64,
) -> SensitivityInterval {
    if target_rise <= 0.0 {
        return SensitivityInterval {
            lo: value,
            hi: value,
            capped_lo: false,
            capped_hi: false,
        };
    }
    let base = partial(value);
    let (up, capped_hi) = bisect_bump(|d| partial(value + d) - base, target_rise, search_bound);
    let (down, capped_lo) = bisect_bump(|d| partial(value - d) - base, target_rise, search_bound);
    SensitivityInterval {
        lo: value - down,
        hi: value + up,
        capped_lo,
        capped_hi,
    }
}

/// Find the smallest δ ≥ 0 with `rise(δ) = target`, expanding the bracket
/// geometrically and then bisecting. Returns `(δ, capped)` where `capped`
/// marks a loss that never reached the target within `bound`.
pub(crate) fn bisect_bump(rise: impl Fn(f64) -> f64, target: f64, bound: f64) -> (f64, bool) {
    debug_assert!(target > 0.0);
    let mut hi = 1e-4_f64;
    while rise(hi) < target {
        hi *= 2.0;
        if hi >= bound {
            if rise(bound) < target {
                return (bound, true);
            }
            hi = bound;
            break;
        }
    }
    let mut lo = 0.0_f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rise(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    (0.5 * (lo + hi), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LoadOptions, ScoreRecord, ScoreTable};
    use crate::stitch::{fit, FitConfig, GaugeSpec};
    use chrono::NaiveDate;

    fn rec(m: &str, b: &str, score: f64) -> ScoreRecord {
        ScoreRecord {
            model_id: m.to_string(),
            benchmark_id: b.to_string(),
            score,
            model_release: NaiveDate::from_ymd_opt(2024, 6, 1).unwrap(),
            benchmark_release: None,
        }
    }

    // On a pure quadratic rise L(δ) = c·δ², the bump point has the closed
    // form δ = √(target/c), identically on both sides.
    #[test]
    fn bisection_matches_quadratic_closed_form() {
        let l0 = 3.7;
        let c = 2.4;
        let target = 0.05 * l0;
        let (delta, capped) = bisect_bump(|d| c * d * d, target, 50.0);
        assert!(!capped);
        let expected = (0.05 * l0 / c).sqrt();
        assert!(
            (delta - expected).abs() < 1e-9,
            "delta {delta} vs {expected}"
        );
    }

    #[test]
    fn zero_bump_gives_zero_width_intervals() {
        let table = ScoreTable::from_records(
            vec![rec("m", "w", 0.6), rec("m", "x", 0.4), rec("n", "w", 0.3)],
            LoadOptions::default(),
        )
        .unwrap();
        let f = fit(
            &table,
            &FitConfig::default(),
            &GaugeSpec::benchmark_anchor("w"),
        )
        .unwrap();
        let s = sensitivity_errors(&f, &table, 0.0).unwrap();
        for (id, iv) in &s.models {
            assert_eq!(iv.lo, iv.hi, "model {id}");
        }
        for iv in s.benchmarks.values() {
            assert_eq!(iv.lo, iv.hi);
        }
    }

    #[test]
    fn well_constrained_entity_gets_narrower_interval() {
        // Model "tight" has five consistent observations, model "loose" one.
        let mut records = Vec::new();
        for b in ["w", "x", "y", "z", "v"] {
            records.push(rec("tight", b, 0.6));
        }
        records.push(rec("loose", "w", 0.6));
        // Anchor the benchmarks with a second model so difficulties are tied
        // down by more than the regularizer.
        for b in ["w", "x", "y", "z", "v"] {
            records.push(rec("ref", b, 0.4));
        }
        let table = ScoreTable::from_records(records, LoadOptions::default()).unwrap();
        let f = fit(
            &table,
            &FitConfig::default(),
            &GaugeSpec::benchmark_anchor("w"),
        )
        .unwrap();
        let s = sensitivity_errors(&f, &table, 0.05).unwrap();
        let tight = s.models["tight"];
        let loose = s.models["loose"];
        assert!(
            tight.hi - tight.lo < loose.hi - loose.lo,
            "tight {:?} vs loose {:?}",
            tight,
            loose
        );
    }

    #[test]
    fn flat_direction_is_capped_and_flagged() {
        // A clipped-link record saturated at 1: raising the capability
        // further never changes the data loss, and with λ=0 nothing else
        // pushes back.
        use crate::stitch::{Link, StitchParams};
        let config = FitConfig {
            link: Link::ClippedLinear,
            l2_strength: 0.0,
            ..Default::default()
        };
        // A second model with an imperfect score keeps the total loss
        // positive so the 5% target is non-trivial.
        let table = ScoreTable::from_records(
            vec![rec("m", "w", 1.0), rec("n", "w", 0.25)],
            LoadOptions::default(),
        )
        .unwrap();
        let params = StitchParams {
            capability: [("m".to_string(), 2.0), ("n".to_string(), 0.5)]
                .into_iter()
                .collect(),
            difficulty: [("w".to_string(), 0.0)].into_iter().collect(),
            slope: [("w".to_string(), 1.0)].into_iter().collect(),
            gauge: GaugeSpec::benchmark_anchor("w"),
        };
        let fitres = crate::stitch::FitResult {
            params,
            rss: 0.0,
            n_obs: 2,
            n_params: 1,
            converged: true,
            iterations: 0,
            config,
        };
        let s = sensitivity_errors(&fitres, &table, 0.05).unwrap();
        let m = s.models["m"];
        assert!(m.capped_hi, "expected capped upper direction: {m:?}");
        assert!(!m.capped_lo);
        assert_eq!(m.hi, 2.0 + s.search_bound);
    }
}
