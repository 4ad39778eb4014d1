//! Small self-contained pieces of the template, for checking one part of
//! the model in isolation.

use crate::discretize::BinningConfig;
use crate::graph::{CpdExpr, GraphError, ModelSpec, NodeKind, NodeSpec};
use crate::infer::{compile, Evidence};

use super::config::{BetaPrior, CountInput, Testing};
use super::params::TemplateParams;
use super::template::{add_counts, add_perception, add_testing, ids, testing_evidence};
use super::ProductError;

/// Testing evidence and the operational hazard-per-demand revision.
pub fn testing_fragment(testing: &Testing, params: &TemplateParams) -> Result<(ModelSpec, Evidence), GraphError> {
    let mut m = ModelSpec::new();
    add_testing(&mut m, testing, params)?;
    let mut ev = Evidence::new();
    testing_evidence(testing, &mut ev);
    Ok((m, ev))
}

/// Instance counts driven by beta-distributed injury probabilities.
pub fn count_fragment(n_instances: CountInput, p_major: BetaPrior, p_minor: BetaPrior) -> Result<ModelSpec, GraphError> {
    let mut m = ModelSpec::new();
    for (id, prior) in [(ids::P_MAJOR_INJURY, p_major), (ids::P_MINOR_INJURY, p_minor)] {
        m.push_node_with_parents(NodeSpec::new(
            id,
            NodeKind::Continuous { lo: 0.0, hi: 1.0 },
            CpdExpr::Beta { alpha: prior.alpha.into(), beta: prior.beta.into() },
        ))?;
    }
    add_counts(&mut m, n_instances)?;
    Ok(m)
}

/// Mean numbers of instances causing major and minor injuries, computed
/// through the count nodes of a compiled fragment.
pub fn expected_injury_counts(
    n_instances: CountInput,
    p_major: BetaPrior,
    p_minor: BetaPrior,
    binning: &BinningConfig,
) -> Result<(f64, f64), ProductError> {
    let spec = count_fragment(n_instances, p_major, p_minor)?;
    let model = compile(&spec, binning)?;
    let posts = model.posterior(
        &Evidence::new(),
        &[ids::MAJOR_INJURY_INSTANCES, ids::MINOR_INJURY_INSTANCES],
    )?;
    Ok((posts[0].mean(), posts[1].mean()))
}

/// The perception-change noisy-OR with its three causes.
pub fn perception_fragment(params: &TemplateParams) -> Result<ModelSpec, GraphError> {
    let mut m = ModelSpec::new();
    add_perception(&mut m, params)?;
    Ok(m)
}
