//! Variable elimination with a min-fill ordering.

use std::collections::{BTreeSet, HashSet};

use super::factor::{sum_product, Factor, Space};
use super::{CompiledModel, InferError, ResolvedEvidence};

/// Smallest positive entry that keeps factor arithmetic in linear space.
pub const LOG_SPACE_THRESHOLD: f64 = 1e-280;
/// Normalizing constants below this mean the evidence is impossible.
pub const IMPOSSIBLE_THRESHOLD: f64 = 1e-300;

/// How elimination order is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Ordering {
    #[default]
    MinFill,
    /// Eliminate in reverse topological order (children first).
    ReverseTopological,
    Explicit(Vec<String>),
}

/// Greedy min-fill over the interaction graph of `scopes`; ties go to the
/// lexicographically smallest node id.
pub(crate) fn min_fill_order(model: &CompiledModel, scopes: &[Vec<usize>], to_eliminate: &BTreeSet<usize>) -> Vec<usize> {
    let n = model.nodes.len();
    let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for s in scopes {
        for &a in s {
            for &b in s {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    let mut remaining: BTreeSet<usize> = to_eliminate.clone();
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let best = remaining
            .iter()
            .map(|&v| {
                let nb: Vec<usize> = adj[v].iter().copied().collect();
                let mut fill = 0usize;
                for i in 0..nb.len() {
                    for j in i + 1..nb.len() {
                        if !adj[nb[i]].contains(&nb[j]) {
                            fill += 1;
                        }
                    }
                }
                (fill, model.nodes[v].id.as_str(), v)
            })
            .min()
            .map(|(_, _, v)| v)
            .expect("non-empty");
        let nb: Vec<usize> = adj[best].iter().copied().collect();
        for &a in &nb {
            for &b in &nb {
                if a != b {
                    adj[a].insert(b);
                }
            }
            adj[a].remove(&best);
        }
        adj[best].clear();
        remaining.remove(&best);
        order.push(best);
    }
    order
}

/// Exact marginal of `query`, plus the probability of the evidence.
pub(crate) fn marginal(
    model: &CompiledModel,
    evidence: &ResolvedEvidence,
    query: usize,
    ordering: &Ordering,
) -> Result<(Vec<f64>, f64), InferError> {
    let mut roots: Vec<usize> = evidence.nodes().collect();
    roots.push(query);
    let relevant = model.ancestors(&roots);

    let mut factors: Vec<Factor> = relevant
        .iter()
        .map(|&v| {
            let mut f = model.cpt_factor(v);
            for (var, ev) in evidence.iter() {
                if f.position(var).is_none() {
                    continue;
                }
                match ev.hard_index() {
                    Some(i) if var != query => f = f.reduce(var, i),
                    _ => f.mask(var, &ev.allowed(model.nodes[var].domain.len()), Space::Linear),
                }
            }
            f
        })
        .collect();

    let min_pos = factors.iter().map(Factor::min_positive).fold(f64::INFINITY, f64::min);
    let space = if min_pos < LOG_SPACE_THRESHOLD { Space::Log } else { Space::Linear };
    let result = run(model, &mut factors.clone(), query, &relevant, ordering, space)?;
    match (space, result) {
        (Space::Linear, Some(r)) => Ok(r),
        // linear arithmetic underflowed; redo in log space
        (Space::Linear, None) => run(model, &mut factors, query, &relevant, ordering, Space::Log)?
            .ok_or(InferError::ImpossibleEvidence),
        (Space::Log, r) => r.ok_or(InferError::ImpossibleEvidence),
    }
}

fn run(
    model: &CompiledModel,
    factors: &mut Vec<Factor>,
    query: usize,
    relevant: &BTreeSet<usize>,
    ordering: &Ordering,
    space: Space,
) -> Result<Option<(Vec<f64>, f64)>, InferError> {
    if space == Space::Log {
        factors.iter_mut().for_each(Factor::to_log);
    }
    let present: BTreeSet<usize> = factors.iter().flat_map(|f| f.vars.iter().copied()).collect();
    let to_eliminate: BTreeSet<usize> = present.iter().copied().filter(|v| *v != query).collect();
    let order = match ordering {
        Ordering::MinFill => {
            let scopes: Vec<Vec<usize>> = factors.iter().map(|f| f.vars.clone()).collect();
            model.cached_order(relevant, query, &scopes, &to_eliminate)
        }
        Ordering::ReverseTopological => model
            .topo
            .iter()
            .rev()
            .copied()
            .filter(|v| to_eliminate.contains(v))
            .collect(),
        Ordering::Explicit(ids) => {
            let mut order = Vec::new();
            for id in ids {
                let v = model.index_of(id)?;
                if to_eliminate.contains(&v) {
                    order.push(v);
                }
            }
            if order.len() != to_eliminate.len() {
                return Err(InferError::BadOrdering);
            }
            order
        }
    };

    for var in order {
        let (with, without): (Vec<Factor>, Vec<Factor>) =
            std::mem::take(factors).into_iter().partition(|f| f.position(var).is_some());
        *factors = without;
        if with.is_empty() {
            continue;
        }
        let refs: Vec<&Factor> = with.iter().collect();
        factors.push(sum_product(&refs, Some(var), space));
    }
    let refs: Vec<&Factor> = factors.iter().collect();
    let joint = sum_product(&refs, None, space);
    debug_assert!(joint.vars.is_empty() || joint.vars == vec![query]);
    let card = model.nodes[query].domain.len();
    let values: Vec<f64> = if joint.vars.is_empty() {
        vec![joint.values[0]; card]
    } else {
        joint.values
    };
    match space {
        Space::Linear => {
            let z: f64 = values.iter().sum();
            if !(z >= IMPOSSIBLE_THRESHOLD) {
                return Ok(None);
            }
            Ok(Some((values.iter().map(|v| v / z).collect(), z)))
        }
        Space::Log => {
            let lz = super::factor::log_sum_exp(&values);
            if !(lz >= IMPOSSIBLE_THRESHOLD.ln()) {
                return Ok(None);
            }
            Ok(Some((values.iter().map(|v| (v - lz).exp()).collect(), lz.exp())))
        }
    }
}
