//! The latent score model: predicted score = link(α_b · (C_m − D_b)) with
//! per-model capabilities C, per-benchmark difficulties D and slopes α.
//!
//! The model is only identified up to an affine gauge (rescale slopes while
//! counter-scaling C and D, plus a common shift of C and D). [`GaugeSpec`]
//! pins that freedom either to a benchmark (slope 1, difficulty 0) or to a
//! pair of models with prescribed capability values.

mod cv;
mod diagnostics;
mod fit;
mod sensitivity;

pub use cv::{cross_validate, CvFold, CvSummary};
pub use diagnostics::{diagnostics, Diagnostics, ResidualRow};
pub use fit::{fit, fit_with_init, total_loss, FitConfig, FitResult};
pub use sensitivity::{
    sensitivity_errors, sensitivity_errors_with_bound, SensitivityErrors, SensitivityInterval,
};

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{clamp01, sigmoid, sigmoid_deriv};

/// Link function mapping the latent margin to a score in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Sigmoid,
    ClippedLinear,
}

impl Link {
    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Link::Sigmoid => sigmoid(z),
            Link::ClippedLinear => clamp01(z),
        }
    }

    /// Derivative d link / dz. The clipped link uses the interior derivative
    /// at exactly 0 and 1 and a zero sub-gradient outside.
    #[inline]
    pub fn deriv(self, z: f64) -> f64 {
        match self {
            Link::Sigmoid => sigmoid_deriv(z),
            Link::ClippedLinear => {
                if (0.0..=1.0).contains(&z) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Link> {
        match s {
            "sigmoid" => Ok(Link::Sigmoid),
            "clipped" | "clipped_linear" => Ok(Link::ClippedLinear),
            other => Err(Error::Config(format!(
                "unknown link {other:?} (expected sigmoid or clipped_linear)"
            ))),
        }
    }
}

/// How the two gauge degrees of freedom are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GaugeSpec {
    /// Fix one benchmark's slope to 1 and difficulty to 0.
    BenchmarkAnchor { anchor_benchmark: String },
    /// Affine-map capabilities so two models take prescribed values.
    ModelPairAnchor { anchor_models: [(String, f64); 2] },
}

impl GaugeSpec {
    pub fn benchmark_anchor(id: impl Into<String>) -> GaugeSpec {
        GaugeSpec::BenchmarkAnchor {
            anchor_benchmark: id.into(),
        }
    }

    pub fn model_pair(
        m1: impl Into<String>,
        v1: f64,
        m2: impl Into<String>,
        v2: f64,
    ) -> GaugeSpec {
        GaugeSpec::ModelPairAnchor {
            anchor_models: [(m1.into(), v1), (m2.into(), v2)],
        }
    }
}

/// Fitted latent parameters in a specific gauge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchParams {
    /// model_id → capability C_m.
    pub capability: BTreeMap<String, f64>,
    /// benchmark_id → difficulty D_b.
    pub difficulty: BTreeMap<String, f64>,
    /// benchmark_id → slope α_b (> 0).
    pub slope: BTreeMap<String, f64>,
    pub gauge: GaugeSpec,
}

impl StitchParams {
    /// Hash of the parameter values and gauge, used to reject mixing
    /// capabilities from different fits downstream.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (id, v) in &self.capability {
            id.hash(&mut h);
            v.to_bits().hash(&mut h);
        }
        for (id, v) in &self.difficulty {
            id.hash(&mut h);
            v.to_bits().hash(&mut h);
        }
        for (id, v) in &self.slope {
            id.hash(&mut h);
            v.to_bits().hash(&mut h);
        }
        format!("{:?}", self.gauge).hash(&mut h);
        h.finish()
    }
}

/// Predicted score of `model_id` on `benchmark_id` under the given link.
pub fn predict_score(
    params: &StitchParams,
    model_id: &str,
    benchmark_id: &str,
    link: Link,
) -> Result<f64> {
    let c = params.capability.get(model_id).ok_or_else(|| Error::UnknownId {
        kind: "model",
        id: model_id.to_string(),
    })?;
    let d = params
        .difficulty
        .get(benchmark_id)
        .ok_or_else(|| Error::UnknownId {
            kind: "benchmark",
            id: benchmark_id.to_string(),
        })?;
    let alpha = params.slope.get(benchmark_id).ok_or_else(|| Error::UnknownId {
        kind: "benchmark",
        id: benchmark_id.to_string(),
    })?;
    Ok(link.value(alpha * (c - d)))
}

/// Re-express parameters in the frame demanded by `gauge`.
///
/// Predictions are invariant: the transformation applies the multiplicative
/// rescale {α/u, u·C, u·D} followed by a common shift of C and D.
pub fn apply_gauge(params: &StitchParams, gauge: &GaugeSpec) -> Result<StitchParams> {
    let (scale, shift) = match gauge {
        GaugeSpec::BenchmarkAnchor { anchor_benchmark } => {
            let alpha = params
                .slope
                .get(anchor_benchmark)
                .ok_or_else(|| Error::UnknownId {
                    kind: "benchmark",
                    id: anchor_benchmark.clone(),
                })?;
            if *alpha <= 0.0 {
                return Err(Error::Gauge(format!(
                    "anchor benchmark {anchor_benchmark} has non-positive slope {alpha}"
                )));
            }
            let d_anchor = params.difficulty[anchor_benchmark];
            // Scale by the anchor slope, then shift its difficulty to 0.
            (*alpha, -d_anchor * *alpha)
        }
        GaugeSpec::ModelPairAnchor { anchor_models } => {
            let [(m1, v1), (m2, v2)] = anchor_models;
            let c1 = params.capability.get(m1).ok_or_else(|| Error::UnknownId {
                kind: "model",
                id: m1.clone(),
            })?;
            let c2 = params.capability.get(m2).ok_or_else(|| Error::UnknownId {
                kind: "model",
                id: m2.clone(),
            })?;
            let dc = c1 - c2;
            if dc.abs() < 1e-12 {
                return Err(Error::Gauge(format!(
                    "anchor models {m1} and {m2} have equal capability; gauge is degenerate"
                )));
            }
            let scale = (v1 - v2) / dc;
            if scale <= 0.0 {
                return Err(Error::Gauge(format!(
                    "anchor values for {m1} and {m2} reverse the fitted ordering; slopes would change sign"
                )));
            }
            (scale, v1 - scale * c1)
        }
    };

    let capability = params
        .capability
        .iter()
        .map(|(id, c)| (id.clone(), scale * c + shift))
        .collect();
    let mut difficulty: BTreeMap<String, f64> = params
        .difficulty
        .iter()
        .map(|(id, d)| (id.clone(), scale * d + shift))
        .collect();
    let mut slope: BTreeMap<String, f64> = params
        .slope
        .iter()
        .map(|(id, a)| (id.clone(), a / scale))
        .collect();

    if let GaugeSpec::BenchmarkAnchor { anchor_benchmark } = gauge {
        // Pin the anchor exactly; the arithmetic above already lands within
        // rounding error of (0, 1).
        difficulty.insert(anchor_benchmark.clone(), 0.0);
        slope.insert(anchor_benchmark.clone(), 1.0);
    }

    Ok(StitchParams {
        capability,
        difficulty,
        slope,
        gauge: gauge.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn params_from(
        caps: &[(&str, f64)],
        diffs: &[(&str, f64)],
        slopes: &[(&str, f64)],
    ) -> StitchParams {
        StitchParams {
            capability: caps.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            difficulty: diffs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            slope: slopes.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            gauge: GaugeSpec::benchmark_anchor("w"),
        }
    }

    #[test]
    fn predict_is_half_at_equal_capability_and_difficulty() {
        let p = params_from(&[("m", 1.3)], &[("w", 1.3)], &[("w", 2.5)]);
        let s = predict_score(&p, "m", "w", Link::Sigmoid).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn predict_logistic_identity() {
        let p = params_from(&[("m", 3.0_f64.ln())], &[("w", 0.0)], &[("w", 1.0)]);
        let s = predict_score(&p, "m", "w", Link::Sigmoid).unwrap();
        assert!((s - 0.75).abs() < 1e-12);
    }

    #[test]
    fn predict_clipped_saturates() {
        let p = params_from(&[("m", 1.7)], &[("w", 0.0)], &[("w", 1.0)]);
        let s = predict_score(&p, "m", "w", Link::ClippedLinear).unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn predict_unknown_id_errors() {
        let p = params_from(&[("m", 0.0)], &[("w", 0.0)], &[("w", 1.0)]);
        assert!(matches!(
            predict_score(&p, "nope", "w", Link::Sigmoid),
            Err(Error::UnknownId { .. })
        ));
        assert!(matches!(
            predict_score(&p, "m", "nope", Link::Sigmoid),
            Err(Error::UnknownId { .. })
        ));
    }

    #[test]
    fn predict_monotone_in_capability_and_difficulty() {
        let base = params_from(&[("m", 0.3)], &[("w", 0.1)], &[("w", 1.7)]);
        let s0 = predict_score(&base, "m", "w", Link::Sigmoid).unwrap();
        let mut up = base.clone();
        up.capability.insert("m".into(), 0.4);
        assert!(predict_score(&up, "m", "w", Link::Sigmoid).unwrap() > s0);
        let mut harder = base.clone();
        harder.difficulty.insert("w".into(), 0.2);
        assert!(predict_score(&harder, "m", "w", Link::Sigmoid).unwrap() < s0);
    }

    #[test]
    fn gauge_hand_derived_example() {
        // α_w = 2, D_w = 0.4, C = 1.4 → α_w = 1, D_w = 0, C = 1.4·2 − 0.8 = 2.0
        let p = params_from(&[("m", 1.4)], &[("w", 0.4)], &[("w", 2.0)]);
        let g = apply_gauge(&p, &GaugeSpec::benchmark_anchor("w")).unwrap();
        assert_eq!(g.slope["w"], 1.0);
        assert_eq!(g.difficulty["w"], 0.0);
        assert!((g.capability["m"] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gauge_is_identity_on_already_gauged() {
        let p = params_from(
            &[("m", 2.0)],
            &[("w", 0.0), ("x", 0.7)],
            &[("w", 1.0), ("x", 1.3)],
        );
        let g = apply_gauge(&p, &GaugeSpec::benchmark_anchor("w")).unwrap();
        assert_eq!(p.capability, g.capability);
        assert_eq!(p.difficulty, g.difficulty);
        assert_eq!(p.slope, g.slope);
    }

    #[test]
    fn gauge_preserves_predictions_and_ranking() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let models: Vec<String> = (0..8).map(|i| format!("m{i}")).collect();
            let benches: Vec<String> = (0..5).map(|i| format!("b{i}")).collect();
            let params = StitchParams {
                capability: models
                    .iter()
                    .map(|m| (m.clone(), rng.random_range(-2.0..3.0)))
                    .collect(),
                difficulty: benches
                    .iter()
                    .map(|b| (b.clone(), rng.random_range(-2.0..3.0)))
                    .collect(),
                slope: benches
                    .iter()
                    .map(|b| (b.clone(), rng.random_range(0.2..3.0)))
                    .collect(),
                gauge: GaugeSpec::benchmark_anchor("b0"),
            };
            let gauged = apply_gauge(&params, &GaugeSpec::benchmark_anchor("b3")).unwrap();
            for m in &models {
                for b in &benches {
                    let before = predict_score(&params, m, b, Link::Sigmoid).unwrap();
                    let after = predict_score(&gauged, m, b, Link::Sigmoid).unwrap();
                    assert!(
                        (before - after).abs() <= 1e-12,
                        "prediction moved by {}",
                        (before - after).abs()
                    );
                }
            }
            // Ranking by capability is unchanged under the affine map.
            let mut order_before: Vec<&String> = models.iter().collect();
            order_before.sort_by(|a, b| {
                params.capability[*a]
                    .partial_cmp(&params.capability[*b])
                    .unwrap()
            });
            let mut order_after: Vec<&String> = models.iter().collect();
            order_after.sort_by(|a, b| {
                gauged.capability[*a]
                    .partial_cmp(&gauged.capability[*b])
                    .unwrap()
            });
            assert_eq!(order_before, order_after);
        }
    }

    #[test]
    fn model_pair_gauge_hits_prescribed_values() {
        let p = params_from(
            &[("a", 1.0), ("b", 3.0), ("c", 2.0)],
            &[("w", 0.5)],
            &[("w", 2.0)],
        );
        let gauge = GaugeSpec::model_pair("a", 0.0, "b", 1.0);
        let g = apply_gauge(&p, &gauge).unwrap();
        assert!((g.capability["a"] - 0.0).abs() < 1e-12);
        assert!((g.capability["b"] - 1.0).abs() < 1e-12);
        let before = predict_score(&p, "c", "w", Link::Sigmoid).unwrap();
        let after = predict_score(&g, "c", "w", Link::Sigmoid).unwrap();
        assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn degenerate_gauges_error() {
        let p = params_from(&[("a", 1.0), ("b", 1.0)], &[("w", 0.0)], &[("w", 1.0)]);
        assert!(matches!(
            apply_gauge(&p, &GaugeSpec::model_pair("a", 0.0, "b", 1.0)),
            Err(Error::Gauge(_))
        ));

        let bad_slope = params_from(&[("a", 1.0)], &[("w", 0.0)], &[("w", -0.5)]);
        assert!(matches!(
            apply_gauge(&bad_slope, &GaugeSpec::benchmark_anchor("w")),
            Err(Error::Gauge(_))
        ));

        // Reversed ordering flips the scale sign.
        let p2 = params_from(&[("a", 1.0), ("b", 2.0)], &[("w", 0.0)], &[("w", 1.0)]);
        assert!(matches!(
            apply_gauge(&p2, &GaugeSpec::model_pair("a", 1.0, "b", 0.0)),
            Err(Error::Gauge(_))
        ));
    }

    #[test]
    fn link_parsing() {
        assert_eq!("sigmoid".parse::<Link>().unwrap(), Link::Sigmoid);
        assert_eq!("clipped".parse::<Link>().unwrap(), Link::ClippedLinear);
        assert_eq!(
            "clipped_linear".parse::<Link>().unwrap(),
            Link::ClippedLinear
        );
        assert!("probit".parse::<Link>().is_err());
    }
}
