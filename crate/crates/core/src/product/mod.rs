//! Product-risk network: scenario config, template, fragments and the
//! assessment entry point.

pub mod config;
pub mod fragments;
pub mod params;
pub mod template;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::discretize::{point_column, BinningConfig, Domain, PointParent};
use crate::graph::{ranked_midpoint, GraphError, ModelSpec};
use crate::infer::{compile, CompiledModel, Evidence, InferError, Posterior};
use crate::report::{AssessmentReport, Distribution, Provenance, Recommendation, REPORT_SCHEMA_VERSION};

pub use config::ScenarioConfig;
pub use params::TemplateParams;
pub use template::{build_network, ids, scenario_evidence};

use config::{UsageProfile, LEVEL_STATES};

#[derive(Debug, Error)]
pub enum ProductError {
    #[error("invalid scenario config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Infer(#[from] InferError),
}

/// `1 - (1 - p)^n`: chance the hazard shows at least once in `n` demands.
pub fn hazard_occurrence_prob(p_per_demand: f64, n_demands: f64) -> f64 {
    crate::graph::exposure(p_per_demand, n_demands)
}

/// Injury probability after the hazard occurs, net of a control that is
/// present with `control_present_prob` and then stops the injury with
/// `control_effectiveness`.
pub fn injury_prob(
    p_occurrence: f64,
    p_uncontrolled_injury: f64,
    control_present_prob: f64,
    control_effectiveness: f64,
) -> f64 {
    p_occurrence * p_uncontrolled_injury * (1.0 - control_present_prob * control_effectiveness)
}

/// Expected multiplier on the hazard rate from usage profile and wear.
pub fn effective_rate_multiplier(profile: &UsageProfile, years_in_use: u32, params: &TemplateParams) -> f64 {
    let usage: f64 = profile
        .as_vec()
        .iter()
        .zip(params.usage_multipliers)
        .map(|(p, k)| p * k)
        .sum();
    usage * (1.0 + params.wear_rate).powi(years_in_use as i32)
}

fn level_domain() -> Domain {
    Domain::states(LEVEL_STATES.iter().map(|s| s.to_string()).collect(), true)
}

/// `(value, mass)` pairs of a posterior over bins.
pub fn weighted_points(post: &Posterior, model: &CompiledModel) -> Vec<(f64, f64)> {
    let domain = &model.node(&post.node).expect("posterior of a model node").domain;
    post.probabilities
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(i, m)| (domain.value(i), *m))
        .collect()
}

/// Risk-level distribution for independent injury-probability
/// distributions given as `(value, mass)` pairs.
pub fn classify_risk_level(
    p_major: &[(f64, f64)],
    p_minor: &[(f64, f64)],
    params: &TemplateParams,
) -> Result<Vec<f64>, ProductError> {
    let cpd = template::risk_level_cpd(params);
    let child = level_domain();
    let mut out = vec![0.0; child.len()];
    for (x, mx) in p_major {
        for (y, my) in p_minor {
            let col = point_column(
                &cpd,
                &[
                    PointParent { id: ids::P_MAJOR_INJURY, value: *x, index: 0, card: 1 },
                    PointParent { id: ids::P_MINOR_INJURY, value: *y, index: 0, card: 1 },
                ],
                &child,
            )
            .map_err(|source| InferError::Discretize { node: ids::RISK_LEVEL.into(), source })?;
            out.iter_mut().zip(col).for_each(|(o, c)| *o += mx * my * c);
        }
    }
    let total: f64 = out.iter().sum();
    Ok(out.iter().map(|v| v / total).collect())
}

/// Tolerability distribution and the probability that intervention is
/// recommended, for a risk-level distribution and a utility state.
pub fn tolerability_and_recommendation(
    risk_level: &[f64],
    utility: &str,
    params: &TemplateParams,
) -> Result<(Vec<f64>, f64), ProductError> {
    let u = LEVEL_STATES
        .iter()
        .position(|s| *s == utility)
        .ok_or_else(|| ProductError::InvalidConfig(vec![format!("utility: unknown state `{utility}`")]))?;
    let cpd = template::tolerability_cpd(params);
    let child = level_domain();
    let k = LEVEL_STATES.len();
    let mut tol = vec![0.0; k];
    for (r, mass) in risk_level.iter().enumerate() {
        let col = point_column(
            &cpd,
            &[
                PointParent { id: ids::RISK_LEVEL, value: ranked_midpoint(r, k), index: r, card: k },
                PointParent { id: ids::UTILITY, value: ranked_midpoint(u, k), index: u, card: k },
            ],
            &child,
        )
        .map_err(|source| InferError::Discretize { node: ids::RISK_TOLERABILITY.into(), source })?;
        tol.iter_mut().zip(col).for_each(|(t, c)| *t += mass * c);
    }
    let intervene = tol[0] + tol[1];
    Ok((tol, intervene))
}

/// Probability that consumer perception changes.
pub fn perception_change(media_stories: bool, warnings: bool, intervention_announced: bool, params: &TemplateParams) -> f64 {
    let mut p_none = 1.0 - params.perception_leak;
    for (on, a) in [media_stories, warnings, intervention_announced]
        .iter()
        .zip(params.perception_activations)
    {
        if *on {
            p_none *= 1.0 - a;
        }
    }
    1.0 - p_none
}

/// Nodes summarized by moments in a report, with their report keys.
const MOMENT_NODES: [&str; 9] = [
    ids::P_HAZARD_TESTING,
    ids::P_HAZARD_OPERATIONAL,
    ids::P_HAZARD_PER_DEMAND,
    ids::P_HAZARD_EFFECTIVE,
    ids::HAZARD_OCCURRENCE,
    ids::P_MAJOR_INJURY,
    ids::P_MINOR_INJURY,
    ids::MAJOR_INJURY_INSTANCES,
    ids::MINOR_INJURY_INSTANCES,
];

const DISTRIBUTION_NODES: [&str; 4] = [
    ids::RISK_LEVEL,
    ids::RISK_TOLERABILITY,
    ids::GOVERNMENT_INTERVENTION,
    ids::PERCEPTION_CHANGE,
];

/// Every node a report queries.
pub fn report_nodes() -> Vec<&'static str> {
    MOMENT_NODES.iter().chain(DISTRIBUTION_NODES.iter()).copied().collect()
}

/// A scenario with its network compiled.
#[derive(Debug, Clone)]
pub struct ProductModel {
    pub config: ScenarioConfig,
    pub spec: ModelSpec,
    pub compiled: CompiledModel,
    config_sha256: String,
}

impl ProductModel {
    pub fn build(config: &ScenarioConfig, binning: &BinningConfig) -> Result<Self, ProductError> {
        config.validate()?;
        let spec = build_network(config)?;
        let compiled = compile(&spec, binning)?;
        let digest = Sha256::digest(serde_json::to_vec(config).expect("config serializes"));
        Ok(ProductModel {
            config: config.clone(),
            spec,
            compiled,
            config_sha256: hex::encode(digest),
        })
    }

    pub fn scenario_evidence(&self) -> Evidence {
        scenario_evidence(&self.config)
    }

    pub fn config_sha256(&self) -> &str {
        &self.config_sha256
    }

    /// Queries every report node under `evidence`.
    pub fn report(&self, evidence: &Evidence, seed: u64) -> Result<AssessmentReport, ProductError> {
        let nodes = report_nodes();
        let posts = self.compiled.posterior(evidence, &nodes)?;
        let moments = |id: &str| {
            posts
                .iter()
                .find(|p| p.node == id)
                .and_then(|p| p.moments)
                .expect("interval node")
        };
        let dist = |id: &str| Distribution::from_posterior(posts.iter().find(|p| p.node == id).expect("queried"));
        let intervention = dist(ids::GOVERNMENT_INTERVENTION);
        let p_intervene = intervention.probability_of("true").unwrap_or(0.0);
        let b = &self.compiled.binning;
        Ok(AssessmentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: self.config.name.clone(),
            hazard_per_demand_testing: moments(ids::P_HAZARD_TESTING),
            hazard_per_demand_operational: moments(ids::P_HAZARD_OPERATIONAL),
            hazard_per_demand: moments(ids::P_HAZARD_PER_DEMAND),
            hazard_per_demand_effective: moments(ids::P_HAZARD_EFFECTIVE),
            hazard_occurrence: moments(ids::HAZARD_OCCURRENCE),
            p_major_injury: moments(ids::P_MAJOR_INJURY),
            p_minor_injury: moments(ids::P_MINOR_INJURY),
            major_injury_instances: moments(ids::MAJOR_INJURY_INSTANCES),
            minor_injury_instances: moments(ids::MINOR_INJURY_INSTANCES),
            risk_level: dist(ids::RISK_LEVEL),
            risk_tolerability: dist(ids::RISK_TOLERABILITY),
            government_intervention: intervention,
            perception_change: dist(ids::PERCEPTION_CHANGE),
            recommendation: Recommendation::from_probability(p_intervene),
            evidence: evidence.clone(),
            provenance: Provenance {
                config_sha256: self.config_sha256.clone(),
                continuous_bins: b.continuous_bins,
                count_bins: b.count_bins,
                quadrature: b.quadrature,
                epsilon: b.epsilon,
                engine_version: crate::ENGINE_VERSION.to_string(),
                seed,
            },
            rapex: None,
        })
    }
}

/// Builds, compiles and assesses a scenario under its own evidence.
pub fn assess(config: &ScenarioConfig, binning: &BinningConfig, seed: u64) -> Result<AssessmentReport, ProductError> {
    let model = ProductModel::build(config, binning)?;
    model.report(&model.scenario_evidence(), seed)
}
