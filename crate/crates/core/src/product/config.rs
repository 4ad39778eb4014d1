//! Scenario input schema.

use serde::{Deserialize, Serialize};

use super::params::TemplateParams;
use super::ProductError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

pub const STRATEGY_STATES: [&str; 3] = ["typical_of_normal_use", "poor", "beyond_intended_scope"];
pub const YEARS_IN_OPERATION_STATES: [&str; 5] = ["0-1", "1-5", "5-10", "10-20", "20+"];
pub const COUNTRY_RECORD_STATES: [&str; 5] = ["very_poor", "poor", "average", "good", "very_good"];
pub const SATISFACTION_STATES: [&str; 5] = ["very_low", "low", "medium", "high", "very_high"];
pub const DESIGN_CHANGE_STATES: [&str; 3] = ["none", "minor", "major_improvement"];
pub const USAGE_STATES: [&str; 3] = ["as_intended", "minor_deviation", "major_deviation"];
pub const LEVEL_STATES: [&str; 5] = ["very_low", "low", "medium", "high", "very_high"];

/// A whole number or an inclusive `[lo, hi]` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CountInput {
    Point(u64),
    Range([u64; 2]),
}

impl CountInput {
    pub fn bounds(&self) -> (u64, u64) {
        match *self {
            CountInput::Point(v) => (v, v),
            CountInput::Range([a, b]) => (a, b),
        }
    }

    pub fn mean(&self) -> f64 {
        let (a, b) = self.bounds();
        (a as f64 + b as f64) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfNormal {
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncNormal {
    pub mean: f64,
    pub sd: f64,
}

/// Number of demands over the product's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DemandInput {
    Point(u64),
    Range([u64; 2]),
    HalfNormal { half_normal: HalfNormal },
    TNormal { tnormal: TruncNormal },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BetaPrior {
    fn default() -> Self {
        BetaPrior { alpha: 1.0, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Testing {
    pub demands_tested: CountInput,
    pub hazards_observed: u64,
    pub strategy: String,
    #[serde(default)]
    pub prior: BetaPrior,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manufacturer {
    pub years_in_operation: Option<String>,
    pub country_safety_record: Option<String>,
    pub customer_satisfaction: Option<String>,
    pub design_change: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsageProfile {
    pub as_intended: f64,
    pub minor_deviation: f64,
    pub major_deviation: f64,
}

impl UsageProfile {
    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.as_intended, self.minor_deviation, self.major_deviation]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Usage {
    pub profile: UsageProfile,
    pub demands_per_lifetime: DemandInput,
    pub years_in_use: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HazardInjury {
    pub p_uncontrolled_major: f64,
    pub p_uncontrolled_minor: f64,
    pub control_present_prob: f64,
    pub control_effectiveness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Population {
    pub n_instances: CountInput,
    #[serde(default)]
    pub observed_major_injury_instances: Option<u64>,
    #[serde(default)]
    pub observed_minor_injury_instances: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perception {
    pub media_stories: Option<bool>,
    pub warnings: Option<bool>,
    pub government_intervention_announced: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub testing: Testing,
    #[serde(default)]
    pub manufacturer: Manufacturer,
    pub usage: Usage,
    pub hazard_injury: HazardInjury,
    pub population: Population,
    #[serde(default)]
    pub perception: Perception,
    pub utility: String,
    #[serde(default)]
    pub parameters: TemplateParams,
}

fn default_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn check_state(field: &str, value: &str, states: &[&str], out: &mut Vec<String>) {
    if !states.contains(&value) {
        out.push(format!("{field}: `{value}` is not one of {states:?}"));
    }
}

fn check_prob(field: &str, v: f64, out: &mut Vec<String>) {
    if !(0.0..=1.0).contains(&v) {
        out.push(format!("{field}: {v} is not a probability"));
    }
}

fn check_count(field: &str, c: &CountInput, out: &mut Vec<String>) {
    let (a, b) = c.bounds();
    if a > b {
        out.push(format!("{field}: empty range [{a}, {b}]"));
    }
    if b == 0 {
        out.push(format!("{field}: must allow at least one"));
    }
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self, ProductError> {
        let c: ScenarioConfig =
            serde_json::from_str(s).map_err(|e| ProductError::InvalidConfig(vec![e.to_string()]))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Every problem with the config, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            out.push(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let t = &self.testing;
        check_count("testing.demands_tested", &t.demands_tested, &mut out);
        if t.hazards_observed > t.demands_tested.bounds().0 {
            out.push(format!(
                "testing.hazards_observed: {} exceeds the smallest number of demands tested",
                t.hazards_observed
            ));
        }
        check_state("testing.strategy", &t.strategy, &STRATEGY_STATES, &mut out);
        if !(t.prior.alpha > 0.0 && t.prior.beta > 0.0) {
            out.push("testing.prior: alpha and beta must be positive".into());
        }
        let m = &self.manufacturer;
        let pairs: [(&str, &Option<String>, &[&str]); 4] = [
            ("manufacturer.years_in_operation", &m.years_in_operation, &YEARS_IN_OPERATION_STATES),
            ("manufacturer.country_safety_record", &m.country_safety_record, &COUNTRY_RECORD_STATES),
            ("manufacturer.customer_satisfaction", &m.customer_satisfaction, &SATISFACTION_STATES),
            ("manufacturer.design_change", &m.design_change, &DESIGN_CHANGE_STATES),
        ];
        for (field, v, states) in pairs {
            if let Some(v) = v {
                check_state(field, v, states, &mut out);
            }
        }
        let p = self.usage.profile.as_vec();
        for (name, v) in USAGE_STATES.iter().zip(&p) {
            check_prob(&format!("usage.profile.{name}"), *v, &mut out);
        }
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            out.push(format!("usage.profile: sums to {}, not 1", p.iter().sum::<f64>()));
        }
        match self.usage.demands_per_lifetime {
            DemandInput::Point(_) => {}
            DemandInput::Range([a, b]) => {
                if a > b {
                    out.push(format!("usage.demands_per_lifetime: empty range [{a}, {b}]"));
                }
            }
            DemandInput::HalfNormal { half_normal } => {
                if !(half_normal.mean > 0.0 && half_normal.mean.is_finite()) {
                    out.push("usage.demands_per_lifetime.half_normal.mean must be positive".into());
                }
            }
            DemandInput::TNormal { tnormal } => {
                if !(tnormal.mean >= 0.0 && tnormal.sd > 0.0 && tnormal.mean.is_finite() && tnormal.sd.is_finite()) {
                    out.push("usage.demands_per_lifetime.tnormal needs mean >= 0 and sd > 0".into());
                }
            }
        }
        let h = &self.hazard_injury;
        check_prob("hazard_injury.p_uncontrolled_major", h.p_uncontrolled_major, &mut out);
        check_prob("hazard_injury.p_uncontrolled_minor", h.p_uncontrolled_minor, &mut out);
        check_prob("hazard_injury.control_present_prob", h.control_present_prob, &mut out);
        check_prob("hazard_injury.control_effectiveness", h.control_effectiveness, &mut out);
        let pop = &self.population;
        check_count("population.n_instances", &pop.n_instances, &mut out);
        let n_hi = pop.n_instances.bounds().1;
        for (field, v) in [
            ("population.observed_major_injury_instances", pop.observed_major_injury_instances),
            ("population.observed_minor_injury_instances", pop.observed_minor_injury_instances),
        ] {
            if let Some(v) = v {
                if v > n_hi {
                    out.push(format!("{field}: {v} exceeds the largest number of instances {n_hi}"));
                }
            }
        }
        check_state("utility", &self.utility, &LEVEL_STATES, &mut out);
        out.extend(self.parameters.validate().into_iter().map(|e| format!("parameters.{e}")));
        out
    }

    pub fn validate(&self) -> Result<(), ProductError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(ProductError::InvalidConfig(p))
        }
    }
}
