//! Compilation of a model spec into discrete CPTs, and exact / sampled
//! posterior queries over the result.

mod factor;
mod sampling;
mod ve;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{summarize, BinningConfig, DiscretizeError, Domain, Moments, ParentSlot};
use crate::graph::{GraphError, ModelSpec, NodeKind, ValidationReport};

pub use factor::{sum_product, Factor, Space};
pub use ve::{Ordering, IMPOSSIBLE_THRESHOLD, LOG_SPACE_THRESHOLD};

#[derive(Debug, Error)]
pub enum InferError {
    #[error("model failed validation:\n{0}")]
    Validation(ValidationReport),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("discretizing `{node}`: {source}")]
    Discretize {
        node: String,
        #[source]
        source: DiscretizeError,
    },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid evidence for `{node}`: {reason}")]
    InvalidEvidence { node: String, reason: String },
    #[error("evidence is impossible under the model (probability of evidence below {IMPOSSIBLE_THRESHOLD:e})")]
    ImpossibleEvidence,
    #[error("explicit elimination order does not cover every eliminated node")]
    BadOrdering,
    #[error("likelihood weights are degenerate (effective sample size {ess:.2})")]
    DegenerateWeights { ess: f64 },
    #[error("sample count must be positive")]
    NoSamples,
}

/// Observed value of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EvidenceValue {
    State(String),
    Point(f64),
    Interval([f64; 2]),
}

impl From<&str> for EvidenceValue {
    fn from(s: &str) -> Self {
        EvidenceValue::State(s.to_string())
    }
}

impl From<f64> for EvidenceValue {
    fn from(v: f64) -> Self {
        EvidenceValue::Point(v)
    }
}

/// Evidence keyed by node id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Evidence(pub BTreeMap<String, EvidenceValue>);

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, node: &str, value: impl Into<EvidenceValue>) -> Self {
        self.set(node, value);
        self
    }

    pub fn set(&mut self, node: &str, value: impl Into<EvidenceValue>) {
        self.0.insert(node.to_string(), value.into());
    }

    pub fn remove(&mut self, node: &str) -> Option<EvidenceValue> {
        self.0.remove(node)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &EvidenceValue)> {
        self.0.iter()
    }
}

/// Evidence mapped onto state indices.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Likelihood {
    Hard(usize),
    Mask(Vec<bool>),
}

impl Likelihood {
    pub(crate) fn hard_index(&self) -> Option<usize> {
        match self {
            Likelihood::Hard(i) => Some(*i),
            Likelihood::Mask(_) => None,
        }
    }

    pub(crate) fn allowed(&self, card: usize) -> Vec<bool> {
        match self {
            Likelihood::Hard(i) => (0..card).map(|k| k == *i).collect(),
            Likelihood::Mask(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ResolvedEvidence(Vec<(usize, Likelihood)>);

impl ResolvedEvidence {
    pub(crate) fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|(v, _)| *v)
    }
    pub(crate) fn iter(&self) -> impl Iterator<Item = (usize, &Likelihood)> {
        self.0.iter().map(|(v, l)| (*v, l))
    }
    pub(crate) fn get(&self, var: usize) -> Option<&Likelihood> {
        self.0.iter().find(|(v, _)| *v == var).map(|(_, l)| l)
    }
}

/// Posterior marginal of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub node: String,
    pub probabilities: Vec<f64>,
    /// State names for discrete nodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    /// Summary statistics for interval-valued nodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<Moments>,
    /// Per-state standard errors (sampling only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Vec<f64>>,
    /// Standard error of the posterior mean (sampling only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_std_error: Option<f64>,
    /// Kish effective sample size of the weights (sampling only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_samples: Option<f64>,
}

impl Posterior {
    /// Index of the most probable state.
    pub fn mode(&self) -> usize {
        self.probabilities
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, p)| if *p > bp { (i, *p) } else { (bi, bp) })
            .0
    }

    pub fn mode_state(&self) -> Option<&str> {
        self.states.as_ref().map(|s| s[self.mode()].as_str())
    }

    pub fn probability_of(&self, state: &str) -> Option<f64> {
        let i = self.states.as_ref()?.iter().position(|s| s == state)?;
        Some(self.probabilities[i])
    }

    /// Posterior mean of the numeric value (bin representative, ranked
    /// midpoint or state index).
    pub fn mean(&self) -> f64 {
        match &self.moments {
            Some(m) => m.mean,
            None => self.probabilities.iter().enumerate().map(|(i, p)| i as f64 * p).sum(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledNode {
    pub id: String,
    pub kind: NodeKind,
    pub domain: Domain,
    pub parents: Vec<usize>,
    /// Parents in order then this node, row-major, node varying fastest.
    pub cpt: Vec<f64>,
}

impl CompiledNode {
    pub fn card(&self) -> usize {
        self.domain.len()
    }
}

type OrderKey = (Vec<usize>, Vec<usize>, usize);

/// A model with every node discretized and every CPT materialized.
#[derive(Debug)]
pub struct CompiledModel {
    pub nodes: Vec<CompiledNode>,
    pub binning: BinningConfig,
    index: HashMap<String, usize>,
    topo: Vec<usize>,
    order_cache: Mutex<HashMap<OrderKey, Vec<usize>>>,
}

impl Clone for CompiledModel {
    fn clone(&self) -> Self {
        CompiledModel {
            nodes: self.nodes.clone(),
            binning: self.binning.clone(),
            index: self.index.clone(),
            topo: self.topo.clone(),
            order_cache: Mutex::new(HashMap::new()),
        }
    }
}

/// Validates, discretizes and builds every CPT.
pub fn compile(spec: &ModelSpec, binning: &BinningConfig) -> Result<CompiledModel, InferError> {
    let report = spec.validate();
    if !report.is_empty() {
        return Err(InferError::Validation(report));
    }
    let order = spec.topological_order().ok_or_else(|| GraphError::CycleDetected {
        parent: String::new(),
        child: String::new(),
    })?;
    let index: HashMap<String, usize> = spec
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.clone(), i))
        .collect();
    let mut domains: Vec<Option<Domain>> = vec![None; spec.nodes.len()];
    for n in &spec.nodes {
        let d = binning
            .domain_for(&n.id, &n.kind, &n.cpd)
            .map_err(|source| InferError::Discretize { node: n.id.clone(), source })?;
        domains[index[&n.id]] = Some(d);
    }
    let domains: Vec<Domain> = domains.into_iter().map(|d| d.expect("every node")).collect();
    let mut nodes = Vec::with_capacity(spec.nodes.len());
    for n in &spec.nodes {
        let parents: Vec<usize> = spec.parents(&n.id).iter().map(|p| index[*p]).collect();
        let slots: Vec<ParentSlot<'_>> = parents
            .iter()
            .map(|&p| ParentSlot { id: &spec.nodes[p].id, domain: &domains[p] })
            .collect();
        let me = index[&n.id];
        let cpt = crate::discretize::expression_to_cpt(&n.cpd, &slots, &domains[me], binning.quadrature)
            .map_err(|source| InferError::Discretize { node: n.id.clone(), source })?;
        nodes.push(CompiledNode {
            id: n.id.clone(),
            kind: n.kind.clone(),
            domain: domains[me].clone(),
            parents,
            cpt,
        });
    }
    let topo = order.iter().map(|id| index[id]).collect();
    Ok(CompiledModel {
        nodes,
        binning: binning.clone(),
        index,
        topo,
        order_cache: Mutex::new(HashMap::new()),
    })
}

impl CompiledModel {
    pub fn index_of(&self, id: &str) -> Result<usize, InferError> {
        self.index.get(id).copied().ok_or_else(|| InferError::UnknownNode(id.to_string()))
    }

    pub fn node(&self, id: &str) -> Option<&CompiledNode> {
        self.index.get(id).map(|i| &self.nodes[*i])
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.id.as_str())
    }

    /// Node indices in topological order.
    pub fn topological(&self) -> &[usize] {
        &self.topo
    }

    pub(crate) fn ancestors(&self, roots: &[usize]) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = roots.to_vec();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(self.nodes[v].parents.iter().copied());
            }
        }
        seen
    }

    pub(crate) fn cpt_factor(&self, v: usize) -> Factor {
        let n = &self.nodes[v];
        let mut vars = n.parents.clone();
        vars.push(v);
        let card = vars.iter().map(|&u| self.nodes[u].card()).collect();
        Factor::new(vars, card, n.cpt.clone())
    }

    pub(crate) fn cached_order(
        &self,
        relevant: &BTreeSet<usize>,
        query: usize,
        scopes: &[Vec<usize>],
        to_eliminate: &BTreeSet<usize>,
    ) -> Vec<usize> {
        let key = (
            relevant.iter().copied().collect(),
            to_eliminate.iter().copied().collect(),
            query,
        );
        if let Some(o) = self.order_cache.lock().expect("order cache").get(&key) {
            return o.clone();
        }
        let order = ve::min_fill_order(self, scopes, to_eliminate);
        self.order_cache.lock().expect("order cache").insert(key, order.clone());
        order
    }

    pub(crate) fn resolve(&self, evidence: &Evidence) -> Result<ResolvedEvidence, InferError> {
        let mut out = Vec::new();
        for (id, value) in evidence.iter() {
            let v = self.index_of(id)?;
            let node = &self.nodes[v];
            let bad = |reason: String| InferError::InvalidEvidence { node: id.clone(), reason };
            let lik = match (&node.domain, value) {
                (Domain::States { names, .. }, EvidenceValue::State(s)) => Likelihood::Hard(
                    node.domain
                        .state_index(s)
                        .ok_or_else(|| bad(format!("`{s}` is not one of {names:?}")))?,
                ),
                (Domain::States { .. }, other) => {
                    return Err(bad(format!("expected a state name, got {other:?}")))
                }
                (Domain::Bins(_), EvidenceValue::State(s)) => {
                    return Err(bad(format!("expected a number or interval, got state `{s}`")))
                }
                (Domain::Bins(set), EvidenceValue::Point(x)) => {
                    let x = if set.integer { x.round() } else { *x };
                    let hi = if set.integer { set.hi() - 1.0 } else { set.hi() };
                    if !x.is_finite() || x < set.lo() || x > hi {
                        return Err(bad(format!("{x} is outside the support [{}, {hi}]", set.lo())));
                    }
                    Likelihood::Hard(set.locate(x))
                }
                (Domain::Bins(set), EvidenceValue::Interval([a, b])) => {
                    if !(a <= b) {
                        return Err(bad(format!("empty interval [{a}, {b}]")));
                    }
                    let mask: Vec<bool> = (0..set.len())
                        .map(|i| {
                            let (l, h) = set.bounds(i);
                            if set.integer {
                                l <= *b && h - 1.0 >= *a
                            } else {
                                l <= *b && h > *a
                            }
                        })
                        .collect();
                    if !mask.iter().any(|m| *m) {
                        return Err(bad(format!("[{a}, {b}] does not overlap the support")));
                    }
                    Likelihood::Mask(mask)
                }
            };
            out.push((v, lik));
        }
        Ok(ResolvedEvidence(out))
    }

    fn wrap(&self, v: usize, probabilities: Vec<f64>) -> Result<Posterior, InferError> {
        let node = &self.nodes[v];
        let (states, moments) = match &node.domain {
            Domain::States { names, .. } => (Some(names.clone()), None),
            Domain::Bins(set) => (
                None,
                Some(summarize(set, &probabilities).map_err(|source| InferError::Discretize {
                    node: node.id.clone(),
                    source,
                })?),
            ),
        };
        Ok(Posterior {
            node: node.id.clone(),
            probabilities,
            states,
            moments,
            std_errors: None,
            mean_std_error: None,
            effective_samples: None,
        })
    }

    /// Exact posterior marginals by variable elimination. Queries run in
    /// parallel; each is single-threaded.
    pub fn posterior(&self, evidence: &Evidence, queries: &[&str]) -> Result<Vec<Posterior>, InferError> {
        let resolved = self.resolve(evidence)?;
        let idx: Vec<usize> = queries.iter().map(|q| self.index_of(q)).collect::<Result<_, _>>()?;
        idx.par_iter()
            .map(|&v| {
                let (p, _) = ve::marginal(self, &resolved, v, &Ordering::MinFill)?;
                self.wrap(v, p)
            })
            .collect()
    }

    /// Exact posterior of one node under a chosen elimination ordering.
    pub fn posterior_with_order(
        &self,
        evidence: &Evidence,
        query: &str,
        ordering: &Ordering,
    ) -> Result<Posterior, InferError> {
        let resolved = self.resolve(evidence)?;
        let v = self.index_of(query)?;
        let (p, _) = ve::marginal(self, &resolved, v, ordering)?;
        self.wrap(v, p)
    }

    /// Probability of the evidence under the discretized model.
    pub fn evidence_probability(&self, evidence: &Evidence) -> Result<f64, InferError> {
        let resolved = self.resolve(evidence)?;
        let Some(v) = resolved.nodes().next() else {
            return Ok(1.0);
        };
        // marginal of an evidence node carries the full evidence mass in Z
        let (_, z) = ve::marginal(self, &resolved, v, &Ordering::MinFill)?;
        Ok(z)
    }

    /// Likelihood-weighted estimate of the posterior marginals.
    pub fn sample_posterior(
        &self,
        evidence: &Evidence,
        queries: &[&str],
        samples: usize,
        seed: u64,
    ) -> Result<Vec<Posterior>, InferError> {
        let resolved = self.resolve(evidence)?;
        let idx: Vec<usize> = queries.iter().map(|q| self.index_of(q)).collect::<Result<_, _>>()?;
        let est = sampling::likelihood_weighting(self, &resolved, &idx, samples, seed)?;
        idx.iter()
            .zip(est)
            .map(|(&v, e)| {
                let mut post = self.wrap(v, e.probabilities)?;
                post.std_errors = Some(e.std_errors);
                post.mean_std_error = Some(e.mean_std_error);
                post.effective_samples = Some(e.effective_samples);
                if let Some(m) = post.moments.as_mut() {
                    m.mean = e.mean;
                }
                Ok(post)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests;
