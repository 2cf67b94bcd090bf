//! Regularized nonlinear least-squares fit of the latent score model.
//!
//! The objective is the stacked sum of squares
//!
//! ```text
//! Σ (observed − link(α_b(C_m − D_b)))²
//!   + λ (Σ C_m² + Σ D_b² + Σ (α_b − 1)²)
//! ```
//!
//! minimized with the damped Gauss-Newton solver in [`crate::solver`].
//! Slopes are optimized as log α to keep them positive. Under a benchmark
//! anchor the anchor's slope is held at 1 during the fit and the common
//! additive shift is applied afterwards so the anchor's difficulty is
//! exactly 0.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::ScoreTable;
use crate::error::{Error, Result};
use crate::solver::{minimize, NormalEquationsProblem, SolveOptions, SolveReport};
use crate::stitch::{apply_gauge, GaugeSpec, Link, StitchParams};

/// Fit settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub link: Link,
    /// L2 regularization strength λ.
    pub l2_strength: f64,
    /// Also penalize slopes toward 1 (capabilities and difficulties are
    /// always penalized toward 0).
    pub penalize_slopes: bool,
    pub max_iterations: usize,
    /// Relative loss-change convergence threshold.
    pub convergence_tol: f64,
    /// Seed for seeded procedures built on top of the fit (e.g.
    /// cross-validation folds); the fit itself is deterministic.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            link: Link::Sigmoid,
            l2_strength: 0.1,
            penalize_slopes: true,
            max_iterations: 2000,
            convergence_tol: 1e-10,
            seed: 0,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.l2_strength < 0.0 {
            return Err(Error::Config(format!(
                "l2_strength must be non-negative, got {}",
                self.l2_strength
            )));
        }
        if self.convergence_tol <= 0.0 {
            return Err(Error::Config(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// Converged parameters plus the loss decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: StitchParams,
    /// Residual sum of squares over the data (regularization excluded).
    pub rss: f64,
    pub n_obs: usize,
    /// Effective parameter count: |models| + 2·|benchmarks| − 2.
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    pub config: FitConfig,
}

/// Indexed view of the fitting problem.
struct Problem {
    link: Link,
    l2: f64,
    penalize_slopes: bool,
    n_models: usize,
    n_benchmarks: usize,
    /// (model index, benchmark index, observed score).
    records: Vec<(u32, u32, f64)>,
    /// Per-benchmark parameter index of log α, or None when held at 1.
    slope_param: Vec<Option<u32>>,
    n_free: usize,
}

impl Problem {
    #[inline]
    fn unpack(&self, x: &[f64], mi: u32, bi: u32) -> (f64, f64, f64, Option<u32>) {
        let c = x[mi as usize];
        let d = x[self.n_models + bi as usize];
        let (alpha, up) = match self.slope_param[bi as usize] {
            Some(ui) => (x[ui as usize].exp(), Some(ui)),
            None => (1.0, None),
        };
        (c, d, alpha, up)
    }
}

impl NormalEquationsProblem for Problem {
    fn num_params(&self) -> usize {
        self.n_free
    }

    fn loss(&self, x: &[f64]) -> f64 {
        let mut loss = 0.0;
        for &(mi, bi, s) in &self.records {
            let (c, d, alpha, _) = self.unpack(x, mi, bi);
            let r = self.link.value(alpha * (c - d)) - s;
            loss += r * r;
        }
        if self.l2 > 0.0 {
            for v in x.iter().take(self.n_models + self.n_benchmarks) {
                loss += self.l2 * v * v;
            }
            if self.penalize_slopes {
                for u in x.iter().skip(self.n_models + self.n_benchmarks) {
                    let a = u.exp() - 1.0;
                    loss += self.l2 * a * a;
                }
            }
        }
        loss
    }

    fn normal_equations(&self, x: &[f64], jtj: &mut DMatrix<f64>, jtr: &mut DVector<f64>) -> f64 {
        let mut loss = 0.0;
        let mut idx = [0usize; 3];
        let mut grad = [0.0f64; 3];
        for &(mi, bi, s) in &self.records {
            let (c, d, alpha, up) = self.unpack(x, mi, bi);
            let z = alpha * (c - d);
            let pred = self.link.value(z);
            let dz = self.link.deriv(z);
            let r = pred - s;
            loss += r * r;
            if dz == 0.0 {
                continue;
            }
            let gc = dz * alpha;
            idx[0] = mi as usize;
            grad[0] = gc;
            idx[1] = self.n_models + bi as usize;
            grad[1] = -gc;
            let k = match up {
                Some(ui) => {
                    idx[2] = ui as usize;
                    grad[2] = dz * z;
                    3
                }
                None => 2,
            };
            for a in 0..k {
                jtr[idx[a]] += grad[a] * r;
                for b in 0..k {
                    jtj[(idx[a], idx[b])] += grad[a] * grad[b];
                }
            }
        }
        if self.l2 > 0.0 {
            // Regularization residuals √λ·C, √λ·D and √λ·(e^u − 1).
            for i in 0..self.n_models + self.n_benchmarks {
                jtj[(i, i)] += self.l2;
                jtr[i] += self.l2 * x[i];
                loss += self.l2 * x[i] * x[i];
            }
            if self.penalize_slopes {
                for i in self.n_models + self.n_benchmarks..self.n_free {
                    let a = x[i].exp();
                    jtj[(i, i)] += self.l2 * a * a;
                    jtr[i] += self.l2 * a * (a - 1.0);
                    loss += self.l2 * (a - 1.0) * (a - 1.0);
                }
            }
        }
        loss
    }
}

fn index_table(
    table: &ScoreTable,
    config: &FitConfig,
    gauge: &GaugeSpec,
) -> Result<(Problem, Vec<String>, Vec<String>)> {
    if table.n_records() == 0 {
        return Err(Error::InsufficientData(
            "cannot fit an empty score table".to_string(),
        ));
    }
    let model_ids: Vec<String> = table.models().keys().cloned().collect();
    let bench_ids: Vec<String> = table.benchmarks().keys().cloned().collect();
    let model_index: BTreeMap<&str, u32> = model_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i as u32))
        .collect();
    let bench_index: BTreeMap<&str, u32> = bench_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i as u32))
        .collect();

    let anchor_bench = match gauge {
        GaugeSpec::BenchmarkAnchor { anchor_benchmark } => Some(
            *bench_index
                .get(anchor_benchmark.as_str())
                .ok_or_else(|| {
                    Error::Config(format!(
                        "anchor benchmark {anchor_benchmark} not present in the table"
                    ))
                })?,
        ),
        GaugeSpec::ModelPairAnchor { anchor_models } => {
            let [(m1, v1), (m2, v2)] = anchor_models;
            for m in [m1, m2] {
                if !model_index.contains_key(m.as_str()) {
                    return Err(Error::Config(format!(
                        "anchor model {m} not present in the table"
                    )));
                }
            }
            if m1 == m2 {
                return Err(Error::Config(
                    "anchor models must be distinct".to_string(),
                ));
            }
            if v1 == v2 {
                return Err(Error::Config(
                    "anchor model values must differ".to_string(),
                ));
            }
            None
        }
    };

    let n_models = model_ids.len();
    let n_benchmarks = bench_ids.len();
    let mut slope_param = vec![None; n_benchmarks];
    let mut next = (n_models + n_benchmarks) as u32;
    for (bi, slot) in slope_param.iter_mut().enumerate() {
        if anchor_bench == Some(bi as u32) {
            continue;
        }
        *slot = Some(next);
        next += 1;
    }

    let records = table
        .records()
        .iter()
        .map(|r| {
            (
                model_index[r.model_id.as_str()],
                bench_index[r.benchmark_id.as_str()],
                r.score,
            )
        })
        .collect();

    Ok((
        Problem {
            link: config.link,
            l2: config.l2_strength,
            penalize_slopes: config.penalize_slopes,
            n_models,
            n_benchmarks,
            records,
            slope_param,
            n_free: next as usize,
        },
        model_ids,
        bench_ids,
    ))
}

/// Fit the latent model, initializing capabilities and difficulties at 0
/// and slopes at 1.
pub fn fit(table: &ScoreTable, config: &FitConfig, gauge: &GaugeSpec) -> Result<FitResult> {
    fit_with_init(table, config, gauge, None)
}

/// Fit starting from a previous solution. A solver step is only accepted
/// when it reduces the loss, so refitting from an optimum cannot end worse.
pub fn fit_with_init(
    table: &ScoreTable,
    config: &FitConfig,
    gauge: &GaugeSpec,
    init: Option<&StitchParams>,
) -> Result<FitResult> {
    config.validate()?;
    let (problem, model_ids, bench_ids) = index_table(table, config, gauge)?;

    let mut x = vec![0.0; problem.n_free];
    if let Some(init) = init {
        for (i, id) in model_ids.iter().enumerate() {
            if let Some(c) = init.capability.get(id) {
                x[i] = *c;
            }
        }
        for (i, id) in bench_ids.iter().enumerate() {
            if let Some(d) = init.difficulty.get(id) {
                x[problem.n_models + i] = *d;
            }
            if let Some(ui) = problem.slope_param[i] {
                if let Some(a) = init.slope.get(id) {
                    if *a > 0.0 {
                        x[ui as usize] = a.ln();
                    }
                }
            }
        }
    }

    let SolveReport {
        iterations,
        converged,
        ..
    } = minimize(
        &problem,
        &mut x,
        SolveOptions {
            max_iterations: config.max_iterations,
            tol: config.convergence_tol,
        },
    );

    let raw = StitchParams {
        capability: model_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), x[i]))
            .collect(),
        difficulty: bench_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), x[problem.n_models + i]))
            .collect(),
        slope: bench_ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let a = match problem.slope_param[i] {
                    Some(ui) => x[ui as usize].exp(),
                    None => 1.0,
                };
                (id.clone(), a)
            })
            .collect(),
        gauge: gauge.clone(),
    };
    let params = apply_gauge(&raw, gauge)?;

    // Data-only residual sum of squares in the final gauge.
    let mut rss = 0.0;
    for rec in table.records() {
        let pred = crate::stitch::predict_score(
            &params,
            &rec.model_id,
            &rec.benchmark_id,
            config.link,
        )?;
        let r = rec.score - pred;
        rss += r * r;
    }

    Ok(FitResult {
        params,
        rss,
        n_obs: table.n_records(),
        n_params: model_ids.len() + 2 * bench_ids.len() - 2,
        converged,
        iterations,
        config: *config,
    })
}

/// Total objective (data residuals plus regularization penalties) of a
/// parameter set on a table. This is the loss whose 5% bump defines the
/// sensitivity error bars.
pub fn total_loss(params: &StitchParams, table: &ScoreTable, config: &FitConfig) -> Result<f64> {
    let mut loss = 0.0;
    for rec in table.records() {
        let pred =
            crate::stitch::predict_score(params, &rec.model_id, &rec.benchmark_id, config.link)?;
        let r = rec.score - pred;
        loss += r * r;
    }
    if config.l2_strength > 0.0 {
        for c in params.capability.values() {
            loss += config.l2_strength * c * c;
        }
        for d in params.difficulty.values() {
            loss += config.l2_strength * d * d;
        }
        if config.penalize_slopes {
            for a in params.slope.values() {
                loss += config.l2_strength * (a - 1.0) * (a - 1.0);
            }
        }
    }
    Ok(loss)
}
