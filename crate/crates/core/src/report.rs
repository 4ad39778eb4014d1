//! Assessment reports and their canonical JSON form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::discretize::Moments;
use crate::infer::{Evidence, Posterior};
use crate::rapex::{RapexAssessment, RiskClass};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Significant digits kept for every float in canonical JSON.
pub const CANONICAL_DIGITS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateProbability {
    pub state: String,
    pub probability: f64,
}

/// A discrete posterior with its most probable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub states: Vec<StateProbability>,
    pub mode: String,
}

impl Distribution {
    pub fn from_posterior(p: &Posterior) -> Self {
        let names = p.states.clone().unwrap_or_else(|| {
            (0..p.probabilities.len()).map(|i| i.to_string()).collect()
        });
        Distribution {
            mode: names[p.mode()].clone(),
            states: names
                .into_iter()
                .zip(&p.probabilities)
                .map(|(state, probability)| StateProbability { state, probability: *probability })
                .collect(),
        }
    }

    pub fn probability_of(&self, state: &str) -> Option<f64> {
        self.states.iter().find(|s| s.state == state).map(|s| s.probability)
    }

    /// Total probability of the listed states.
    pub fn mass_of(&self, states: &[&str]) -> f64 {
        states.iter().filter_map(|s| self.probability_of(s)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub intervene: bool,
    pub probability: f64,
}

impl Recommendation {
    pub fn from_probability(p: f64) -> Self {
        Recommendation { intervene: p > 0.5, probability: p }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub continuous_bins: usize,
    pub count_bins: usize,
    pub quadrature: usize,
    pub epsilon: f64,
    pub engine_version: String,
    pub seed: u64,
}

/// RAPEX verdict on the network's mean major-injury probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RapexComparison {
    pub severity: i64,
    pub p_major_injury_mean: f64,
    pub assessment: RapexAssessment,
    pub bn_risk_level_mode: String,
    /// Network risk-level mass on low and very low.
    pub bn_low_mass: f64,
    /// RAPEX says Serious or High while the network puts most mass on
    /// low / very low, or the reverse.
    pub diverges: bool,
}

impl RapexComparison {
    pub fn new(report: &AssessmentReport, severity: i64) -> Result<Self, crate::rapex::RapexError> {
        let p = report.p_major_injury.mean;
        let scenario = crate::rapex::InjuryScenario {
            description: "network posterior mean probability of a major injury".into(),
            steps: vec![crate::rapex::Step::new("major injury", p)],
            severity,
        };
        let assessment = crate::rapex::assess(&scenario, None)?;
        let low = report.risk_level.mass_of(&["very_low", "low"]);
        let rapex_high = matches!(assessment.risk_class, RiskClass::Serious | RiskClass::High);
        Ok(RapexComparison {
            severity,
            p_major_injury_mean: p,
            bn_risk_level_mode: report.risk_level.mode.clone(),
            bn_low_mass: low,
            diverges: rapex_high == (low > 0.5),
            assessment,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub schema_version: u32,
    pub scenario: String,
    pub hazard_per_demand_testing: Moments,
    pub hazard_per_demand_operational: Moments,
    /// After the manufacturer adjustment.
    pub hazard_per_demand: Moments,
    /// After usage and wear.
    pub hazard_per_demand_effective: Moments,
    pub hazard_occurrence: Moments,
    pub p_major_injury: Moments,
    pub p_minor_injury: Moments,
    pub major_injury_instances: Moments,
    pub minor_injury_instances: Moments,
    pub risk_level: Distribution,
    pub risk_tolerability: Distribution,
    pub government_intervention: Distribution,
    pub perception_change: Distribution,
    pub recommendation: Recommendation,
    pub evidence: Evidence,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rapex: Option<RapexComparison>,
}

/// `v` rounded to [`CANONICAL_DIGITS`] significant digits.
pub fn round_significant(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { 0.0 } else { v };
    }
    format!("{:.*e}", CANONICAL_DIGITS - 1, v).parse().expect("formatted float parses")
}

fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round_significant(n.as_f64().expect("f64"));
            serde_json::Number::from_f64(r).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonicalize).collect()),
        // serde_json's default map is ordered by key
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with sorted keys and floats at six significant digits,
/// newline terminated. Identical inputs give identical bytes.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = canonicalize(serde_json::to_value(value).expect("report serializes"));
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

fn sig(v: f64) -> String {
    let r = round_significant(v);
    if r != 0.0 && (r.abs() < 1e-3 || r.abs() >= 1e6) {
        format!("{r:.3e}")
    } else {
        format!("{}", (r * 1e4).round() / 1e4)
    }
}

/// Human-readable rendering of a report.
pub fn render_table(r: &AssessmentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Scenario: {}", if r.scenario.is_empty() { "(unnamed)" } else { &r.scenario });
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<32} {:>12} {:>12} {:>12} {:>12}", "quantity", "mean", "p5", "median", "p95");
    let rows: [(&str, &Moments); 9] = [
        ("hazard per demand (testing)", &r.hazard_per_demand_testing),
        ("hazard per demand (operational)", &r.hazard_per_demand_operational),
        ("hazard per demand", &r.hazard_per_demand),
        ("hazard per demand (effective)", &r.hazard_per_demand_effective),
        ("hazard occurrence", &r.hazard_occurrence),
        ("P(major injury)", &r.p_major_injury),
        ("P(minor injury)", &r.p_minor_injury),
        ("instances with major injury", &r.major_injury_instances),
        ("instances with minor injury", &r.minor_injury_instances),
    ];
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<32} {:>12} {:>12} {:>12} {:>12}",
            name,
            sig(m.mean),
            sig(m.p5),
            sig(m.p50),
            sig(m.p95)
        );
    }
    for (name, d) in [
        ("risk level", &r.risk_level),
        ("risk tolerability", &r.risk_tolerability),
        ("government intervention", &r.government_intervention),
        ("perception change", &r.perception_change),
    ] {
        let _ = writeln!(out);
        let _ = writeln!(out, "{name} (mode: {})", d.mode);
        for s in &d.states {
            let bar = "#".repeat((s.probability * 40.0).round() as usize);
            let _ = writeln!(out, "  {:<12} {:>8.4} {}", s.state, s.probability, bar);
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "Recommendation: {} (P = {:.4})",
        if r.recommendation.intervene { "intervene" } else { "no intervention" },
        r.recommendation.probability
    );
    if let Some(c) = &r.rapex {
        let _ = writeln!(
            out,
            "RAPEX (severity {}, P = {}): {} risk, band {}; network risk mode {}{}",
            c.severity,
            sig(c.assessment.total_probability),
            c.assessment.risk_class,
            c.assessment.probability_band,
            c.bn_risk_level_mode,
            if c.diverges { " (verdicts differ)" } else { "" }
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_six_significant_digits() {
        assert_eq!(round_significant(0.123456789), 0.123457);
        assert_eq!(round_significant(9335.4321), 9335.43);
        assert_eq!(round_significant(4.00000049e-5), 4e-5);
        assert_eq!(round_significant(0.0), 0.0);
        assert_eq!(round_significant(-0.0), 0.0);
    }

    #[test]
    fn canonical_json_sorts_keys_and_rounds() {
        #[derive(Serialize)]
        struct S {
            zeta: f64,
            alpha: Vec<f64>,
            count: u64,
        }
        let s = canonical_json(&S { zeta: 1.0 / 3.0, alpha: vec![2.0 / 3.0], count: 7 });
        assert_eq!(s, "{\n  \"alpha\": [\n    0.666667\n  ],\n  \"count\": 7,\n  \"zeta\": 0.333333\n}\n");
    }
}
