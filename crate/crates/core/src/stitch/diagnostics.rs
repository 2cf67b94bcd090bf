//! Goodness-of-fit diagnostics: global and per-benchmark R², MSE, AIC/BIC,
//! residual list and a Kolmogorov-Smirnov normality check on the residuals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::ScoreTable;
use crate::error::Result;
use crate::stats::ks_normality_pvalue;
use crate::stitch::{predict_score, FitResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub model_id: String,
    pub benchmark_id: String,
    pub observed: f64,
    pub predicted: f64,
    /// observed − predicted.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub r2: f64,
    pub mse: f64,
    /// AIC under the convention n·ln(RSS/n) + 2p.
    pub aic: f64,
    /// BIC under the convention n·ln(RSS/n) + p·ln(n).
    pub bic: f64,
    /// False when n_obs ≤ n_params, where the information criteria are not
    /// meaningful (still computed).
    pub aic_bic_reliable: bool,
    /// R² of predicted vs actual per benchmark, for benchmarks with at
    /// least 3 scores.
    pub per_benchmark_r2: BTreeMap<String, f64>,
    pub residuals: Vec<ResidualRow>,
    /// KS p-value for residual normality, with mean/variance estimated from
    /// the residuals.
    pub ks_p_value: f64,
}

fn r2_of(observed: &[f64], rss: f64) -> f64 {
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let tss: f64 = observed.iter().map(|s| (s - mean).powi(2)).sum();
    if tss > 0.0 {
        1.0 - rss / tss
    } else if rss <= 1e-12 {
        1.0
    } else {
        0.0
    }
}

/// Compute diagnostics for a fit on the table it was fitted to.
pub fn diagnostics(fit: &FitResult, table: &ScoreTable) -> Result<Diagnostics> {
    let link = fit.config.link;
    let mut residuals = Vec::with_capacity(table.n_records());
    let mut rss = 0.0;
    let mut observed = Vec::with_capacity(table.n_records());
    let mut per_bench: BTreeMap<&str, (Vec<f64>, f64)> = BTreeMap::new();

    for rec in table.records() {
        let predicted = predict_score(&fit.params, &rec.model_id, &rec.benchmark_id, link)?;
        let residual = rec.score - predicted;
        rss += residual * residual;
        observed.push(rec.score);
        let entry = per_bench.entry(&rec.benchmark_id).or_default();
        entry.0.push(rec.score);
        entry.1 += residual * residual;
        residuals.push(ResidualRow {
            model_id: rec.model_id.clone(),
            benchmark_id: rec.benchmark_id.clone(),
            observed: rec.score,
            predicted,
            residual,
        });
    }

    let n = table.n_records();
    let nf = n as f64;
    let p = fit.n_params as f64;
    let mse = if n > 0 { rss / nf } else { 0.0 };
    let aic = nf * (rss.max(1e-300) / nf).ln() + 2.0 * p;
    let bic = nf * (rss.max(1e-300) / nf).ln() + p * nf.ln();

    let per_benchmark_r2 = per_bench
        .into_iter()
        .filter(|(_, (scores, _))| scores.len() >= 3)
        .map(|(id, (scores, b_rss))| (id.to_string(), r2_of(&scores, b_rss)))
        .collect();

    let resid_values: Vec<f64> = residuals.iter().map(|r| r.residual).collect();

    Ok(Diagnostics {
        r2: r2_of(&observed, rss),
        mse,
        aic,
        bic,
        aic_bic_reliable: n > fit.n_params,
        per_benchmark_r2,
        residuals,
        ks_p_value: ks_normality_pvalue(&resid_values),
    })
}
