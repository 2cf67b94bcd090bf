//! Small statistical building blocks shared across the analysis modules:
//! stable link functions, simple/multiple OLS with coefficient standard
//! errors, quantile helpers, a Kolmogorov-Smirnov normality check, and an
//! exact binomial confidence interval.

use statrs::distribution::{Beta, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// SplitMix64 step: derive an independent child seed for a parallel stream
/// (replica, run, permutation) from a master seed.
pub fn child_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the logistic function, computed from `x` (not from σ(x))
/// to stay accurate in the tails.
#[inline]
pub fn sigmoid_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

#[inline]
pub fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Two-sided Student-t critical value for the given confidence level.
pub fn t_critical(confidence: f64, df: f64) -> Result<f64> {
    if df <= 0.0 {
        return Err(Error::InsufficientData(format!(
            "t critical value needs positive degrees of freedom, got {df}"
        )));
    }
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Numerical(format!("t distribution: {e}")))?;
    Ok(dist.inverse_cdf(0.5 + confidence / 2.0))
}

/// Ordinary least squares of `y` on `x` with slope inference.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SimpleOls {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    /// Residual standard deviation (n-2 degrees of freedom).
    pub residual_std: f64,
    pub r2: f64,
    pub n: usize,
    pub x_mean: f64,
    /// Centered sum of squares of x.
    pub sxx: f64,
}

impl SimpleOls {
    pub fn fit(x: &[f64], y: &[f64]) -> Result<SimpleOls> {
        assert_eq!(x.len(), y.len());
        let n = x.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "OLS needs at least 2 points, got {n}"
            )));
        }
        let nf = n as f64;
        let x_mean = x.iter().sum::<f64>() / nf;
        let y_mean = y.iter().sum::<f64>() / nf;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        let mut syy = 0.0;
        for i in 0..n {
            let dx = x[i] - x_mean;
            let dy = y[i] - y_mean;
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        if sxx <= 0.0 {
            return Err(Error::Singular(
                "zero variance in the regressor".to_string(),
            ));
        }
        let slope = sxy / sxx;
        let intercept = y_mean - slope * x_mean;
        let mut rss = 0.0;
        for i in 0..n {
            let r = y[i] - (intercept + slope * x[i]);
            rss += r * r;
        }
        // Exact fits can leave a tiny negative rss from cancellation.
        rss = rss.max(0.0);
        let (residual_std, slope_se) = if n > 2 {
            let s2 = rss / (n as f64 - 2.0);
            (s2.sqrt(), (s2 / sxx).sqrt())
        } else {
            (0.0, 0.0)
        };
        let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
        Ok(SimpleOls {
            slope,
            intercept,
            slope_se,
            residual_std,
            r2,
            n,
            x_mean,
            sxx,
        })
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Two-sided confidence interval for the slope.
    pub fn slope_ci(&self, confidence: f64) -> Result<(f64, f64)> {
        if self.n <= 2 || self.slope_se == 0.0 {
            return Ok((self.slope, self.slope));
        }
        let t = t_critical(confidence, self.n as f64 - 2.0)?;
        Ok((self.slope - t * self.slope_se, self.slope + t * self.slope_se))
    }
}

/// Multiple linear regression via normal equations.
///
/// `rows` holds one regressor vector per observation (an intercept column is
/// NOT added automatically). Returns coefficients, their standard errors and
/// the residual sum of squares.
#[derive(Debug)]
pub struct MultiOls {
    pub coefs: Vec<f64>,
    pub std_errs: Vec<f64>,
    pub rss: f64,
    pub n: usize,
}

impl MultiOls {
    pub fn fit(rows: &[Vec<f64>], y: &[f64]) -> Result<MultiOls> {
        let n = rows.len();
        assert_eq!(n, y.len());
        if n == 0 {
            return Err(Error::InsufficientData("no observations".to_string()));
        }
        let p = rows[0].len();
        if n < p {
            return Err(Error::InsufficientData(format!(
                "{n} observations for {p} coefficients"
            )));
        }
        let mut xtx = nalgebra::DMatrix::<f64>::zeros(p, p);
        let mut xty = nalgebra::DVector::<f64>::zeros(p);
        for (row, &yi) in rows.iter().zip(y) {
            debug_assert_eq!(row.len(), p);
            for i in 0..p {
                xty[i] += row[i] * yi;
                for j in 0..p {
                    xtx[(i, j)] += row[i] * row[j];
                }
            }
        }
        let chol = xtx.clone().cholesky().ok_or_else(|| {
            let cond = condition_estimate(&xtx);
            Error::Singular(format!(
                "collinear regressors (normal matrix not positive definite, condition estimate {cond:.3e})"
            ))
        })?;
        let coefs_v = chol.solve(&xty);
        let mut rss = 0.0;
        for (row, &yi) in rows.iter().zip(y) {
            let pred: f64 = row.iter().zip(coefs_v.iter()).map(|(a, b)| a * b).sum();
            let r = yi - pred;
            rss += r * r;
        }
        rss = rss.max(0.0);
        let dof = (n as f64 - p as f64).max(1.0);
        let s2 = rss / dof;
        let inv = chol.inverse();
        let std_errs = (0..p).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect();
        Ok(MultiOls {
            coefs: coefs_v.iter().copied().collect(),
            std_errs,
            rss,
            n,
        })
    }
}

fn condition_estimate(m: &nalgebra::DMatrix<f64>) -> f64 {
    let mut max_d = f64::MIN;
    let mut min_d = f64::MAX;
    for i in 0..m.nrows() {
        max_d = max_d.max(m[(i, i)].abs());
        min_d = min_d.min(m[(i, i)].abs());
    }
    if min_d <= 0.0 {
        f64::INFINITY
    } else {
        max_d / min_d
    }
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for i in 0..a.len() {
        let da = a[i] - ma;
        let db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Linear-interpolation percentile of an unsorted sample; `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let pos = q.clamp(0.0, 1.0) * (sorted.len() as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 0.5)
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} exp(-2 j² λ²)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Kolmogorov-Smirnov p-value for normality of a sample, with the normal
/// mean and standard deviation estimated from the sample itself.
///
/// Uses the asymptotic Kolmogorov distribution with the small-sample
/// correction `λ = D (√n + 0.12 + 0.11/√n)`. Estimating the parameters from
/// the data makes the p-value conservative (biased upward), matching the
/// common practice of running a plain KS test against a fitted normal.
pub fn ks_normality_pvalue(sample: &[f64]) -> f64 {
    let n = sample.len();
    if n < 2 {
        return 1.0;
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let std = var.sqrt();
    if std <= 0.0 {
        return 0.0;
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite residual"));
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let z = (x - mean) / std;
        let cdf = standard_normal_cdf(z);
        let upper = (i as f64 + 1.0) / nf - cdf;
        let lower = cdf - i as f64 / nf;
        d = d.max(upper).max(lower);
    }
    let sqrt_n = nf.sqrt();
    let lambda = d * (sqrt_n + 0.12 + 0.11 / sqrt_n);
    kolmogorov_sf(lambda)
}

/// Standard normal CDF via the complementary error function.
pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * erfc_approx(-z / std::f64::consts::SQRT_2)
}

// Abramowitz & Stegun 7.1.26-style rational approximation of erfc,
// accurate to ~1.5e-7 which is plenty for KS distances.
fn erfc_approx(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Exact (Clopper-Pearson) two-sided binomial confidence interval for a
/// success probability, from `successes` out of `trials`.
pub fn binomial_ci_exact(successes: usize, trials: usize, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::InsufficientData("binomial CI with 0 trials".into()));
    }
    let alpha = 1.0 - confidence;
    let k = successes as f64;
    let n = trials as f64;
    let lo = if successes == 0 {
        0.0
    } else {
        let d = Beta::new(k, n - k + 1.0)
            .map_err(|e| Error::Numerical(format!("beta distribution: {e}")))?;
        d.inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        let d = Beta::new(k + 1.0, n - k)
            .map_err(|e| Error::Numerical(format!("beta distribution: {e}")))?;
        d.inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn sigmoid_basics() {
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!((sigmoid(3.0_f64.ln()) - 0.75).abs() < 1e-12);
        assert!(sigmoid(-30.0) > 0.0);
        assert!(sigmoid(30.0) < 1.0);
        assert!(sigmoid(800.0) == 1.0 && sigmoid(-800.0) == 0.0); // saturates cleanly
    }

    #[test]
    fn ols_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|t| 0.55 * t + 1.0).collect();
        let fit = SimpleOls::fit(&x, &y).unwrap();
        assert!((fit.slope - 0.55).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!(fit.residual_std < 1e-10);
        let (lo, hi) = fit.slope_ci(0.95).unwrap();
        assert!(hi - lo < 1e-9);
    }

    #[test]
    fn ols_zero_variance_is_singular() {
        let x = vec![2.0; 5];
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(matches!(SimpleOls::fit(&x, &y), Err(Error::Singular(_))));
    }

    #[test]
    fn multi_ols_recovers_plane() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let a = i as f64 * 0.3;
            let b = (i as f64 * 0.7).sin();
            rows.push(vec![1.0, a, b]);
            y.push(2.0 - 0.5 * a + 1.5 * b);
        }
        let fit = MultiOls::fit(&rows, &y).unwrap();
        assert!((fit.coefs[0] - 2.0).abs() < 1e-9);
        assert!((fit.coefs[1] + 0.5).abs() < 1e-9);
        assert!((fit.coefs[2] - 1.5).abs() < 1e-9);
        assert!(fit.rss < 1e-15);
    }

    #[test]
    fn multi_ols_collinear_errors() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![1.0, i as f64, 2.0 * i as f64])
            .collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let err = MultiOls::fit(&rows, &y).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
        assert!(err.to_string().contains("condition"));
    }

    #[test]
    fn percentile_interpolates() {
        let v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert!((median(&v) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn t_critical_matches_table() {
        // Standard table value for 95% two-sided with 10 dof.
        let t = t_critical(0.95, 10.0).unwrap();
        assert!((t - 2.228).abs() < 1e-3);
    }

    #[test]
    fn clopper_pearson_edges() {
        let (lo, hi) = binomial_ci_exact(0, 50, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.15);
        let (lo, hi) = binomial_ci_exact(50, 50, 0.95).unwrap();
        assert!(lo > 0.85);
        assert_eq!(hi, 1.0);
        let (lo, hi) = binomial_ci_exact(19, 50, 0.95).unwrap();
        assert!(lo < 0.38 && 0.38 < hi);
    }

    // Monte-Carlo calibration of the KS implementation: true Gaussian
    // samples must rarely be rejected at the 5% level.
    #[test]
    fn ks_calibrated_on_gaussian_samples() {
        let normal = Normal::new(0.1, 0.05).unwrap();
        let mut ok = 0;
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let sample: Vec<f64> = (0..200).map(|_| normal.sample(&mut rng)).collect();
            if ks_normality_pvalue(&sample) > 0.05 {
                ok += 1;
            }
        }
        assert!(ok >= 90, "only {ok}/100 Gaussian samples passed KS at 5%");
    }

    #[test]
    fn ks_rejects_clearly_non_normal() {
        // Strongly bimodal sample.
        let mut sample = vec![-1.0; 150];
        sample.extend(vec![1.0; 150]);
        assert!(ks_normality_pvalue(&sample) < 0.01);
    }

    #[test]
    fn kolmogorov_sf_known_values() {
        // Q(0.83) ≈ 0.50 is a classic reference point.
        assert!((kolmogorov_sf(0.8276) - 0.5).abs() < 1e-3);
        assert!(kolmogorov_sf(0.0) == 1.0);
        assert!(kolmogorov_sf(2.0) < 0.001);
    }
}
