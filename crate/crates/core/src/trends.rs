//! Trends over the fitted capability scale: running-max frontier
//! extraction, linear trend fits with confidence intervals, forecasting,
//! backtesting, the capability→time-horizon map, and single-breakpoint
//! piecewise-linear acceleration detection.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::HorizonRecord;
use crate::error::{Error, Result};
use crate::stats::{t_critical, SimpleOls};

/// One model's fitted capability at its release time (fractional years).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityPoint {
    pub model_id: String,
    pub t: f64,
    pub capability: f64,
}

impl CapabilityPoint {
    pub fn new(model_id: impl Into<String>, t: f64, capability: f64) -> CapabilityPoint {
        CapabilityPoint {
            model_id: model_id.into(),
            t,
            capability,
        }
    }
}

/// Linear trend of capability over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    /// Capability units per year.
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence interval on the slope.
    pub slope_ci: (f64, f64),
    pub n_points: usize,
    pub residual_std: f64,
    /// Mean of the time regressor (needed for prediction intervals).
    pub t_mean: f64,
    /// Centered sum of squares of the time regressor.
    pub t_ss: f64,
}

/// Continuous two-segment linear fit with a single breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakpointFit {
    pub t_break: f64,
    pub pre_slope: f64,
    pub post_slope: f64,
    /// post_slope / pre_slope; absent when pre_slope ≤ 0.
    pub ratio: Option<f64>,
    pub rss: f64,
    /// True when the ratio is defined and at least the detection threshold.
    pub detected: bool,
    pub n_points: usize,
}

/// Fitted map capability → time horizon: horizon = exp(a·C + c).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMap {
    /// Slope on capability inside the exponential.
    pub a: f64,
    /// Intercept inside the exponential.
    pub c: f64,
    pub train_r2: f64,
    pub test_r2: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub split_seed: u64,
}

/// Annual growth implied by a capability slope through a horizon map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonGrowth {
    /// Multiplicative horizon growth per year.
    pub annual_multiplier: f64,
    /// Doubling time in months; absent when the multiplier is ≤ 1.
    pub doubling_months: Option<f64>,
}

/// Point forecast with a 95% prediction interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub t_target: f64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Comparison of a pre-cutoff trend against the frontier that materialized
/// afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub cutoff: f64,
    pub horizon_years: f64,
    pub trend: TrendFit,
    pub comparisons: Vec<BacktestPoint>,
    /// Mean of realized − forecast; positive means the trend underestimated.
    pub mean_signed_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestPoint {
    pub model_id: String,
    pub t: f64,
    pub realized: f64,
    pub forecast: f64,
    pub lo: f64,
    pub hi: f64,
    /// realized − forecast.
    pub signed_error: f64,
}

/// Strict running-max frontier: keep points whose capability exceeds every
/// earlier point's, ties resolved by keeping the earliest.
pub fn frontier(points: &[CapabilityPoint]) -> Vec<CapabilityPoint> {
    let mut sorted: Vec<&CapabilityPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .expect("non-finite time")
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    let mut out = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for p in sorted {
        if p.capability > best {
            best = p.capability;
            out.push(p.clone());
        }
    }
    out
}

/// OLS of capability on time with a t-based 95% CI on the slope.
pub fn fit_linear_trend(points: &[CapabilityPoint]) -> Result<TrendFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "linear trend needs at least 3 points, got {}",
            points.len()
        )));
    }
    let t: Vec<f64> = points.iter().map(|p| p.t).collect();
    let c: Vec<f64> = points.iter().map(|p| p.capability).collect();
    let ols = SimpleOls::fit(&t, &c)?;
    let slope_ci = ols.slope_ci(0.95)?;
    Ok(TrendFit {
        slope: ols.slope,
        intercept: ols.intercept,
        slope_ci,
        n_points: ols.n,
        residual_std: ols.residual_std,
        t_mean: ols.x_mean,
        t_ss: ols.sxx,
    })
}

impl TrendFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }

    /// 95% prediction interval for a new observation at `t`, combining the
    /// coefficient covariance with the residual variance.
    pub fn prediction_interval(&self, t: f64) -> Result<(f64, f64)> {
        let fitted = self.predict(t);
        if self.n_points <= 2 || self.residual_std == 0.0 {
            return Ok((fitted, fitted));
        }
        let nf = self.n_points as f64;
        let se = self.residual_std
            * (1.0 + 1.0 / nf + (t - self.t_mean).powi(2) / self.t_ss).sqrt();
        let tcrit = t_critical(0.95, nf - 2.0)?;
        Ok((fitted - tcrit * se, fitted + tcrit * se))
    }
}

/// Linear extrapolation of a trend with its 95% prediction interval.
pub fn forecast(trend: &TrendFit, t_target: f64) -> Result<Forecast> {
    let (lo, hi) = trend.prediction_interval(t_target)?;
    Ok(Forecast {
        t_target,
        estimate: trend.predict(t_target),
        lo,
        hi,
    })
}

/// Fit a trend on the pre-cutoff frontier only and compare its forecasts
/// against the frontier points realized within the horizon.
pub fn backtest(
    points: &[CapabilityPoint],
    cutoff: f64,
    horizon_years: f64,
) -> Result<BacktestReport> {
    let front = frontier(points);
    let pre: Vec<CapabilityPoint> = front.iter().filter(|p| p.t <= cutoff).cloned().collect();
    let post: Vec<CapabilityPoint> = front
        .iter()
        .filter(|p| p.t > cutoff && p.t <= cutoff + horizon_years)
        .cloned()
        .collect();
    if pre.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "backtest needs at least 3 frontier points before the cutoff, got {}",
            pre.len()
        )));
    }
    if post.is_empty() {
        return Err(Error::InsufficientData(
            "backtest needs at least one realized frontier point after the cutoff".to_string(),
        ));
    }
    let trend = fit_linear_trend(&pre)?;
    let mut comparisons = Vec::with_capacity(post.len());
    let mut total = 0.0;
    for p in &post {
        let f = forecast(&trend, p.t)?;
        let signed_error = p.capability - f.estimate;
        total += signed_error;
        comparisons.push(BacktestPoint {
            model_id: p.model_id.clone(),
            t: p.t,
            realized: p.capability,
            forecast: f.estimate,
            lo: f.lo,
            hi: f.hi,
            signed_error,
        });
    }
    let mean_signed_error = total / comparisons.len() as f64;
    Ok(BacktestReport {
        cutoff,
        horizon_years,
        trend,
        comparisons,
        mean_signed_error,
    })
}

/// Fit `ln(horizon) = a·C + c` on a seeded train split of the models shared
/// between the capability map and the horizon records.
pub fn fit_horizon_map(
    caps: &BTreeMap<String, f64>,
    horizons: &[HorizonRecord],
    train_frac: f64,
    seed: u64,
) -> Result<HorizonMap> {
    if !(train_frac > 0.0 && train_frac <= 1.0) {
        return Err(Error::Config(format!(
            "train_frac must be in (0, 1], got {train_frac}"
        )));
    }
    let mut shared: Vec<(&str, f64, f64)> = Vec::new();
    for h in horizons {
        if let Some(c) = caps.get(&h.model_id) {
            if h.horizon <= 0.0 {
                return Err(Error::Validation(format!(
                    "horizon for {} must be positive",
                    h.model_id
                )));
            }
            shared.push((h.model_id.as_str(), *c, h.horizon.ln()));
        }
    }
    shared.sort_by(|a, b| a.0.cmp(b.0));
    if shared.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "horizon map needs at least 5 models with both capability and horizon, got {}",
            shared.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..shared.len()).collect();
    order.shuffle(&mut rng);
    let n_train =
        ((train_frac * shared.len() as f64).round() as usize).clamp(2, shared.len() - 1);
    let train_idx = &order[..n_train];
    let test_idx = &order[n_train..];

    let tx: Vec<f64> = train_idx.iter().map(|&i| shared[i].1).collect();
    let ty: Vec<f64> = train_idx.iter().map(|&i| shared[i].2).collect();
    let ols = SimpleOls::fit(&tx, &ty)?;

    let r2_on = |idx: &[usize]| -> f64 {
        if idx.is_empty() {
            return 1.0;
        }
        let ys: Vec<f64> = idx.iter().map(|&i| shared[i].2).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let tss: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
        let sse: f64 = idx
            .iter()
            .map(|&i| (shared[i].2 - ols.predict(shared[i].1)).powi(2))
            .sum();
        if tss > 0.0 {
            1.0 - sse / tss
        } else if sse <= 1e-12 {
            1.0
        } else {
            0.0
        }
    };

    Ok(HorizonMap {
        a: ols.slope,
        c: ols.intercept,
        train_r2: r2_on(train_idx),
        test_r2: r2_on(test_idx),
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        split_seed: seed,
    })
}

impl HorizonMap {
    /// horizon = exp(a·C + c), in the units of the source horizon data.
    pub fn capability_to_horizon(&self, capability: f64) -> f64 {
        (self.a * capability + self.c).exp()
    }

    /// Annual horizon multiplier and doubling time implied by a capability
    /// slope (units/year).
    pub fn slope_to_growth(&self, slope: f64) -> HorizonGrowth {
        let annual_multiplier = (self.a * slope).exp();
        let doubling_months = if annual_multiplier > 1.0 {
            Some(12.0 * std::f64::consts::LN_2 / annual_multiplier.ln())
        } else {
            None
        };
        HorizonGrowth {
            annual_multiplier,
            doubling_months,
        }
    }
}

/// Exhaustive single-breakpoint search over a grid of candidate break times
/// (every point plus every midpoint between consecutive points).
///
/// Each candidate is scored by the RSS of the continuous hinge regression
/// `y = β₀ + β₁·t + β₂·(t − τ)₊`; the global minimizer wins, ties going to
/// the earliest break. Detection fires when post/pre ≥ `threshold`.
pub fn detect_breakpoint(
    points: &[CapabilityPoint],
    threshold: f64,
    min_segment: usize,
) -> Result<BreakpointFit> {
    if min_segment < 1 {
        return Err(Error::Config("min_segment must be at least 1".to_string()));
    }
    if points.len() < 2 * min_segment {
        return Err(Error::InsufficientData(format!(
            "breakpoint detection needs at least {} points, got {}",
            2 * min_segment,
            points.len()
        )));
    }
    let mut sorted: Vec<(f64, f64)> = points.iter().map(|p| (p.t, p.capability)).collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("non-finite time"));

    let mut candidates: Vec<f64> = Vec::with_capacity(2 * sorted.len());
    for w in sorted.windows(2) {
        candidates.push(w[0].0);
        if w[1].0 > w[0].0 {
            candidates.push(0.5 * (w[0].0 + w[1].0));
        }
    }
    candidates.push(sorted[sorted.len() - 1].0);
    candidates.dedup();

    let mut best: Option<(f64, [f64; 3], f64)> = None; // (rss, coefs, tau)
    for &tau in &candidates {
        let left = sorted.iter().filter(|(t, _)| *t <= tau).count();
        let right = sorted.len() - left;
        if left < min_segment || right < min_segment {
            continue;
        }
        if let Some((coefs, rss)) = hinge_fit(&sorted, tau) {
            let better = match &best {
                None => true,
                // Strict improvement keeps the earliest break on ties.
                Some((best_rss, _, _)) => rss < best_rss - 1e-15,
            };
            if better {
                best = Some((rss, coefs, tau));
            }
        }
    }

    let (rss, coefs, t_break) = best.ok_or_else(|| {
        Error::InsufficientData("no admissible breakpoint candidate".to_string())
    })?;
    let pre_slope = coefs[1];
    let post_slope = coefs[1] + coefs[2];
    let ratio = if pre_slope > 0.0 {
        Some(post_slope / pre_slope)
    } else {
        None
    };
    Ok(BreakpointFit {
        t_break,
        pre_slope,
        post_slope,
        ratio,
        rss,
        detected: ratio.map_or(false, |r| r >= threshold),
        n_points: sorted.len(),
    })
}

/// Least squares for the continuous hinge design [1, t, (t − τ)₊], solved
/// by explicit 3×3 normal equations. Time is centered first: calendar-year
/// regressors would otherwise make the normal matrix badly conditioned.
/// Returns None when the design is singular for this candidate.
fn hinge_fit(sorted: &[(f64, f64)], tau: f64) -> Option<([f64; 3], f64)> {
    let t_mean = sorted.iter().map(|(t, _)| t).sum::<f64>() / sorted.len() as f64;
    let mut xtx = [[0.0f64; 3]; 3];
    let mut xty = [0.0f64; 3];
    for &(t, y) in sorted {
        // The hinge column stays in raw time so points exactly at the
        // candidate contribute an exact zero.
        let row = [1.0, t - t_mean, (t - tau).max(0.0)];
        for i in 0..3 {
            xty[i] += row[i] * y;
            for j in 0..3 {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    let coefs = solve3(&xtx, &xty)?;
    let mut rss = 0.0;
    for &(t, y) in sorted {
        let pred = coefs[0] + coefs[1] * (t - t_mean) + coefs[2] * (t - tau).max(0.0);
        let r = y - pred;
        rss += r * r;
    }
    // Slopes are shift-invariant; only the reported intercept needs
    // un-centering, and callers never use it.
    Some((coefs, rss.max(0.0)))
}

/// Solve a 3×3 linear system by Gauss-Jordan elimination with partial
/// pivoting; None when effectively singular.
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if m[pivot][col].abs() < 1e-12 * scale {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}
