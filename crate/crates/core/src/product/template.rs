//! The product-risk network template.

use crate::graph::{CpdExpr, Expr, GraphError, ModelSpec, NodeKind, NodeSpec, Operand};
use crate::infer::Evidence;

use super::config::*;
use super::params::TemplateParams;

pub mod ids {
    pub const TESTING_STRATEGY: &str = "testing_strategy";
    pub const DEMANDS_TESTED: &str = "demands_tested";
    pub const P_HAZARD_TESTING: &str = "p_hazard_testing";
    pub const HAZARDS_OBSERVED: &str = "hazards_observed";
    pub const P_HAZARD_OPERATIONAL: &str = "p_hazard_operational";
    pub const YEARS_IN_OPERATION: &str = "years_in_operation";
    pub const COUNTRY_SAFETY_RECORD: &str = "country_safety_record";
    pub const CUSTOMER_SATISFACTION: &str = "customer_satisfaction";
    pub const DESIGN_CHANGE: &str = "design_change";
    pub const MANUFACTURER_QUALITY: &str = "manufacturer_quality";
    pub const P_HAZARD_PER_DEMAND: &str = "p_hazard_per_demand";
    pub const PRODUCT_USAGE: &str = "particular_product_usage";
    pub const YEARS_IN_USE: &str = "years_in_use";
    pub const P_HAZARD_EFFECTIVE: &str = "p_hazard_effective";
    pub const NUMBER_OF_DEMANDS: &str = "number_of_demands";
    pub const HAZARD_OCCURRENCE: &str = "hazard_occurrence";
    pub const CONTROL_PRESENT: &str = "control_present";
    pub const P_MAJOR_INJURY: &str = "p_major_injury";
    pub const P_MINOR_INJURY: &str = "p_minor_injury";
    pub const N_INSTANCES: &str = "n_instances";
    pub const MAJOR_INJURY_INSTANCES: &str = "major_injury_instances";
    pub const MINOR_INJURY_INSTANCES: &str = "minor_injury_instances";
    pub const RISK_LEVEL: &str = "risk_level";
    pub const UTILITY: &str = "utility";
    pub const RISK_TOLERABILITY: &str = "risk_tolerability";
    pub const GOVERNMENT_INTERVENTION: &str = "government_intervention";
    pub const MEDIA_STORIES: &str = "media_stories";
    pub const WARNINGS: &str = "warnings";
    pub const INTERVENTION_ANNOUNCED: &str = "government_intervention_announced";
    pub const PERCEPTION_CHANGE: &str = "perception_change";
}

use ids::*;

fn strings(states: &[&str]) -> Vec<String> {
    states.iter().map(|s| s.to_string()).collect()
}

fn ranked(states: &[&str]) -> NodeKind {
    NodeKind::Ranked { states: strings(states) }
}

fn uniform_prior(n: usize) -> CpdExpr {
    CpdExpr::prior(vec![1.0 / n as f64; n])
}

fn unit() -> NodeKind {
    NodeKind::Continuous { lo: 0.0, hi: 1.0 }
}

fn capped(e: Expr) -> Expr {
    Expr::min(Expr::Const(1.0), e)
}

fn uniform_count(id: &str, c: CountInput) -> NodeSpec {
    let (a, b) = c.bounds();
    NodeSpec::new(
        id,
        NodeKind::Count { max: b.max(1) },
        CpdExpr::Uniform { a: Operand::Const(a as f64), b: Operand::Const(b as f64) },
    )
}

/// Testing nodes: tested demands, hazards seen in testing, the testing
/// hazard rate and its operational revision under the testing strategy.
pub(crate) fn add_testing(m: &mut ModelSpec, t: &Testing, p: &TemplateParams) -> Result<(), GraphError> {
    m.push_node_with_parents(NodeSpec::new(
        TESTING_STRATEGY,
        NodeKind::Labelled { states: strings(&STRATEGY_STATES) },
        uniform_prior(3),
    ))?;
    m.push_node_with_parents(uniform_count(DEMANDS_TESTED, t.demands_tested))?;
    m.push_node_with_parents(NodeSpec::new(
        P_HAZARD_TESTING,
        unit(),
        CpdExpr::Beta { alpha: t.prior.alpha.into(), beta: t.prior.beta.into() },
    ))?;
    m.push_node_with_parents(NodeSpec::new(
        HAZARDS_OBSERVED,
        NodeKind::Count { max: t.demands_tested.bounds().1.max(1) },
        CpdExpr::Binomial { n: Operand::parent(DEMANDS_TESTED), p: Operand::parent(P_HAZARD_TESTING) },
    ))?;
    m.push_node_with_parents(NodeSpec::new(
        P_HAZARD_OPERATIONAL,
        unit(),
        CpdExpr::Partitioned {
            parent: TESTING_STRATEGY.into(),
            cases: p
                .strategy_multipliers
                .iter()
                .map(|k| CpdExpr::Deterministic {
                    expr: capped(Expr::mul(Expr::Const(*k), Expr::var(P_HAZARD_TESTING))),
                })
                .collect(),
        },
    ))
}

pub(crate) fn testing_evidence(t: &Testing, ev: &mut Evidence) {
    ev.set(TESTING_STRATEGY, t.strategy.as_str());
    ev.set(HAZARDS_OBSERVED, t.hazards_observed as f64);
}

fn add_manufacturer(m: &mut ModelSpec, p: &TemplateParams) -> Result<(), GraphError> {
    let inputs: [(&str, &[&str]); 4] = [
        (YEARS_IN_OPERATION, &YEARS_IN_OPERATION_STATES),
        (COUNTRY_SAFETY_RECORD, &COUNTRY_RECORD_STATES),
        (CUSTOMER_SATISFACTION, &SATISFACTION_STATES),
        (DESIGN_CHANGE, &DESIGN_CHANGE_STATES),
    ];
    for (id, states) in inputs {
        m.push_node_with_parents(NodeSpec::new(id, ranked(states), uniform_prior(states.len())))?;
    }
    let terms: Vec<(Expr, f64)> = inputs
        .iter()
        .zip(p.manufacturer_weights)
        .map(|((id, _), w)| (Expr::var(*id), w))
        .collect();
    m.push_node_with_parents(NodeSpec::new(
        MANUFACTURER_QUALITY,
        ranked(&LEVEL_STATES),
        CpdExpr::TNormal {
            mean: Expr::weighted_mean(&terms),
            variance: p.manufacturer_variance,
            lo: 0.0,
            hi: 1.0,
        },
    ))?;
    m.push_node_with_parents(NodeSpec::new(
        P_HAZARD_PER_DEMAND,
        unit(),
        CpdExpr::Partitioned {
            parent: MANUFACTURER_QUALITY.into(),
            cases: p
                .quality_multipliers
                .iter()
                .map(|k| CpdExpr::Deterministic {
                    expr: capped(Expr::mul(Expr::Const(*k), Expr::var(P_HAZARD_OPERATIONAL))),
                })
                .collect(),
        },
    ))
}

fn demand_node(d: DemandInput, p: &TemplateParams) -> NodeSpec {
    let tnormal = |mean: f64, sd: f64| {
        let max = (mean + p.demand_tail_sds * sd).ceil().max(1.0);
        NodeSpec::new(
            NUMBER_OF_DEMANDS,
            NodeKind::Count { max: max as u64 },
            CpdExpr::TNormal { mean: Expr::Const(mean), variance: sd * sd, lo: -0.5, hi: max + 0.5 },
        )
    };
    match d {
        DemandInput::Point(v) => uniform_count(NUMBER_OF_DEMANDS, CountInput::Point(v)),
        DemandInput::Range(r) => uniform_count(NUMBER_OF_DEMANDS, CountInput::Range(r)),
        DemandInput::HalfNormal { half_normal } => {
            // a half-normal with scale s has mean s * sqrt(2 / pi)
            let s = half_normal.mean * (std::f64::consts::PI / 2.0).sqrt();
            let mut node = tnormal(0.0, s);
            if let CpdExpr::TNormal { lo, .. } = &mut node.cpd {
                *lo = 0.0;
            }
            node
        }
        DemandInput::TNormal { tnormal: t } => tnormal(t.mean, t.sd),
    }
}

fn add_usage(m: &mut ModelSpec, u: &Usage, p: &TemplateParams) -> Result<(), GraphError> {
    m.push_node_with_parents(NodeSpec::new(
        PRODUCT_USAGE,
        NodeKind::Labelled { states: strings(&USAGE_STATES) },
        CpdExpr::prior(u.profile.as_vec()),
    ))?;
    m.push_node_with_parents(uniform_count(YEARS_IN_USE, CountInput::Point(u.years_in_use as u64)))?;
    let wear = Expr::pow(Expr::Const(1.0 + p.wear_rate), Expr::var(YEARS_IN_USE));
    m.push_node_with_parents(NodeSpec::new(
        P_HAZARD_EFFECTIVE,
        unit(),
        CpdExpr::Partitioned {
            parent: PRODUCT_USAGE.into(),
            cases: p
                .usage_multipliers
                .iter()
                .map(|k| CpdExpr::Deterministic {
                    expr: capped(Expr::mul(
                        Expr::mul(Expr::Const(*k), Expr::var(P_HAZARD_PER_DEMAND)),
                        wear.clone(),
                    )),
                })
                .collect(),
        },
    ))?;
    m.push_node_with_parents(demand_node(u.demands_per_lifetime, p))?;
    m.push_node_with_parents(NodeSpec::new(
        HAZARD_OCCURRENCE,
        unit(),
        CpdExpr::Deterministic {
            expr: Expr::exposure(Expr::var(P_HAZARD_EFFECTIVE), Expr::var(NUMBER_OF_DEMANDS)),
        },
    ))
}

fn add_injury(m: &mut ModelSpec, h: &HazardInjury) -> Result<(), GraphError> {
    m.push_node_with_parents(NodeSpec::new(
        CONTROL_PRESENT,
        NodeKind::Boolean,
        CpdExpr::prior(vec![1.0 - h.control_present_prob, h.control_present_prob]),
    ))?;
    for (id, p_unc) in [(P_MAJOR_INJURY, h.p_uncontrolled_major), (P_MINOR_INJURY, h.p_uncontrolled_minor)] {
        let base = Expr::mul(Expr::var(HAZARD_OCCURRENCE), Expr::Const(p_unc));
        m.push_node_with_parents(NodeSpec::new(
            id,
            unit(),
            CpdExpr::Partitioned {
                parent: CONTROL_PRESENT.into(),
                cases: vec![
                    CpdExpr::Deterministic { expr: base.clone() },
                    CpdExpr::Deterministic {
                        expr: Expr::mul(base, Expr::Const(1.0 - h.control_effectiveness)),
                    },
                ],
            },
        ))?;
    }
    Ok(())
}

/// Instance count nodes, binomial in the number of instances and the
/// per-instance injury probabilities.
pub(crate) fn add_counts(m: &mut ModelSpec, n: CountInput) -> Result<(), GraphError> {
    m.push_node_with_parents(uniform_count(N_INSTANCES, n))?;
    let max = n.bounds().1.max(1);
    for (id, p) in [(MAJOR_INJURY_INSTANCES, P_MAJOR_INJURY), (MINOR_INJURY_INSTANCES, P_MINOR_INJURY)] {
        m.push_node_with_parents(NodeSpec::new(
            id,
            NodeKind::Count { max },
            CpdExpr::Binomial { n: Operand::parent(N_INSTANCES), p: Operand::parent(p) },
        ))?;
    }
    Ok(())
}

/// Risk level from the severity-weighted injury probability.
pub fn risk_level_cpd(p: &TemplateParams) -> CpdExpr {
    let w = p.risk_major_weight;
    let weighted = Expr::add(
        Expr::mul(Expr::Const(w), Expr::var(P_MAJOR_INJURY)),
        Expr::mul(Expr::Const(1.0 - w), Expr::var(P_MINOR_INJURY)),
    );
    CpdExpr::TNormal {
        mean: Expr::band_score(weighted, p.risk_band_edges.to_vec()),
        variance: p.risk_variance,
        lo: 0.0,
        hi: 1.0,
    }
}

/// Tolerability falls with risk and rises with utility.
pub fn tolerability_cpd(p: &TemplateParams) -> CpdExpr {
    let mean = Expr::weighted_mean(&[
        (Expr::sub(Expr::Const(1.0), Expr::var(RISK_LEVEL)), p.tolerability_risk_weight),
        (Expr::var(UTILITY), p.tolerability_utility_weight),
    ]);
    CpdExpr::TNormal { mean, variance: p.tolerability_variance, lo: 0.0, hi: 1.0 }
}

/// Intervention is recommended exactly when tolerability is low or very low.
pub fn intervention_cpd() -> CpdExpr {
    CpdExpr::Table {
        parents: vec![RISK_TOLERABILITY.into()],
        rows: (0..LEVEL_STATES.len())
            .map(|k| if k < 2 { vec![0.0, 1.0] } else { vec![1.0, 0.0] })
            .collect(),
    }
}

/// Noisy-OR over media stories, warnings and an announced intervention.
pub fn perception_cpd(p: &TemplateParams) -> CpdExpr {
    let mut rows = Vec::with_capacity(8);
    for combo in 0..8usize {
        let present = [combo & 4 != 0, combo & 2 != 0, combo & 1 != 0];
        let mut p_none = 1.0 - p.perception_leak;
        for (on, a) in present.iter().zip(p.perception_activations) {
            if *on {
                p_none *= 1.0 - a;
            }
        }
        rows.push(vec![p_none, 1.0 - p_none]);
    }
    CpdExpr::Table {
        parents: vec![MEDIA_STORIES.into(), WARNINGS.into(), INTERVENTION_ANNOUNCED.into()],
        rows,
    }
}

fn add_decision(m: &mut ModelSpec, p: &TemplateParams) -> Result<(), GraphError> {
    m.push_node_with_parents(NodeSpec::new(RISK_LEVEL, ranked(&LEVEL_STATES), risk_level_cpd(p)))?;
    m.push_node_with_parents(NodeSpec::new(UTILITY, ranked(&LEVEL_STATES), uniform_prior(5)))?;
    m.push_node_with_parents(NodeSpec::new(RISK_TOLERABILITY, ranked(&LEVEL_STATES), tolerability_cpd(p)))?;
    m.push_node_with_parents(NodeSpec::new(GOVERNMENT_INTERVENTION, NodeKind::Boolean, intervention_cpd()))
}

pub(crate) fn add_perception(m: &mut ModelSpec, p: &TemplateParams) -> Result<(), GraphError> {
    for id in [MEDIA_STORIES, WARNINGS, INTERVENTION_ANNOUNCED] {
        m.push_node_with_parents(NodeSpec::new(id, NodeKind::Boolean, uniform_prior(2)))?;
    }
    m.push_node_with_parents(NodeSpec::new(PERCEPTION_CHANGE, NodeKind::Boolean, perception_cpd(p)))
}

fn bool_state(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

pub(crate) fn perception_evidence(c: &Perception, ev: &mut Evidence) {
    for (id, v) in [
        (MEDIA_STORIES, c.media_stories),
        (WARNINGS, c.warnings),
        (INTERVENTION_ANNOUNCED, c.government_intervention_announced),
    ] {
        if let Some(v) = v {
            ev.set(id, bool_state(v));
        }
    }
}

/// Builds the full template for a scenario. The config must be valid.
pub fn build_network(c: &ScenarioConfig) -> Result<ModelSpec, GraphError> {
    let p = &c.parameters;
    let mut m = ModelSpec::new();
    add_testing(&mut m, &c.testing, p)?;
    add_manufacturer(&mut m, p)?;
    add_usage(&mut m, &c.usage, p)?;
    add_injury(&mut m, &c.hazard_injury)?;
    add_counts(&mut m, c.population.n_instances)?;
    add_decision(&mut m, p)?;
    add_perception(&mut m, p)?;
    Ok(m)
}

/// Evidence implied by a scenario's observed inputs.
pub fn scenario_evidence(c: &ScenarioConfig) -> Evidence {
    let mut ev = Evidence::new();
    testing_evidence(&c.testing, &mut ev);
    let m = &c.manufacturer;
    for (id, v) in [
        (YEARS_IN_OPERATION, &m.years_in_operation),
        (COUNTRY_SAFETY_RECORD, &m.country_safety_record),
        (CUSTOMER_SATISFACTION, &m.customer_satisfaction),
        (DESIGN_CHANGE, &m.design_change),
    ] {
        if let Some(v) = v {
            ev.set(id, v.as_str());
        }
    }
    if let Some(k) = c.population.observed_major_injury_instances {
        ev.set(MAJOR_INJURY_INSTANCES, k as f64);
    }
    if let Some(k) = c.population.observed_minor_injury_instances {
        ev.set(MINOR_INJURY_INSTANCES, k as f64);
    }
    ev.set(UTILITY, c.utility.as_str());
    perception_evidence(&c.perception, &mut ev);
    ev
}
