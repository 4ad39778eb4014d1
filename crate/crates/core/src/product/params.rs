//! Tunable constants of the product-risk template.

use serde::{Deserialize, Serialize};

/// Every numeric constant the template uses that is not a scenario input.
/// Scenario files may override any subset under `parameters`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateParams {
    /// Operational / testing hazard-rate ratio per testing strategy, in
    /// the order typical, poor, beyond intended scope.
    pub strategy_multipliers: [f64; 3],
    /// Weights of years in operation, country record, customer
    /// satisfaction and design change in manufacturer quality.
    pub manufacturer_weights: [f64; 4],
    pub manufacturer_variance: f64,
    /// Hazard-rate multiplier per manufacturer quality state, very low
    /// to very high.
    pub quality_multipliers: [f64; 5],
    /// Hazard-rate multiplier per usage state: as intended, minor
    /// deviation, major deviation.
    pub usage_multipliers: [f64; 3],
    /// Yearly wear growth of the hazard rate.
    pub wear_rate: f64,
    /// Weight of the major-injury probability in the risk score.
    pub risk_major_weight: f64,
    /// Weighted injury probabilities separating the five risk levels.
    pub risk_band_edges: [f64; 4],
    pub risk_variance: f64,
    pub tolerability_risk_weight: f64,
    pub tolerability_utility_weight: f64,
    pub tolerability_variance: f64,
    /// Noisy-OR activation of media stories, warnings and an announced
    /// government intervention.
    pub perception_activations: [f64; 3],
    pub perception_leak: f64,
    /// Standard deviations of a half-normal demand count kept in the
    /// support.
    pub demand_tail_sds: f64,
}

impl Default for TemplateParams {
    fn default() -> Self {
        TemplateParams {
            strategy_multipliers: [1.0, 20.0, 0.5],
            manufacturer_weights: [1.0; 4],
            manufacturer_variance: 0.01,
            quality_multipliers: [1.4, 1.05, 1.0, 0.5, 0.2],
            usage_multipliers: [1.0, 2.0, 5.0],
            wear_rate: 0.1,
            risk_major_weight: 2.0 / 3.0,
            risk_band_edges: [1e-4, 1e-3, 2e-3, 4e-3],
            risk_variance: 0.005,
            tolerability_risk_weight: 2.0,
            tolerability_utility_weight: 1.0,
            tolerability_variance: 0.01,
            perception_activations: [0.6, 0.5, 0.8],
            perception_leak: 0.02,
            demand_tail_sds: 8.0,
        }
    }
}

impl TemplateParams {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = |name: &str, v: &[f64], out: &mut Vec<String>| {
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                out.push(format!("{name} must be positive and finite, got {v:?}"));
            }
        };
        let unit = |name: &str, v: &[f64], out: &mut Vec<String>| {
            if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                out.push(format!("{name} must lie in [0, 1], got {v:?}"));
            }
        };
        positive("strategy_multipliers", &self.strategy_multipliers, &mut out);
        positive("manufacturer_weights", &self.manufacturer_weights, &mut out);
        positive("quality_multipliers", &self.quality_multipliers, &mut out);
        positive("usage_multipliers", &self.usage_multipliers, &mut out);
        positive(
            "variances",
            &[self.manufacturer_variance, self.risk_variance, self.tolerability_variance],
            &mut out,
        );
        positive(
            "tolerability weights",
            &[self.tolerability_risk_weight, self.tolerability_utility_weight],
            &mut out,
        );
        positive("demand_tail_sds", &[self.demand_tail_sds], &mut out);
        positive("risk_band_edges", &self.risk_band_edges, &mut out);
        if !self.risk_band_edges.windows(2).all(|w| w[0] < w[1]) || self.risk_band_edges[3] >= 1.0 {
            out.push("risk_band_edges must be strictly increasing and below 1".into());
        }
        if !(self.wear_rate.is_finite() && self.wear_rate >= 0.0) {
            out.push(format!("wear_rate must be non-negative, got {}", self.wear_rate));
        }
        unit("risk_major_weight", &[self.risk_major_weight], &mut out);
        unit("perception_activations", &self.perception_activations, &mut out);
        unit("perception_leak", &[self.perception_leak], &mut out);
        out
    }
}
