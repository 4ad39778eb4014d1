//! Static discretization of continuous and count nodes.
//!
//! Every node ends up with a finite [`Domain`]: named states for discrete
//! kinds, an [`IntervalSet`] otherwise. [`expression_to_cpt`] turns a CPD
//! expression into a conditional probability table over those domains.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::{beta::beta_reg, erf::erfc};
use thiserror::Error;

use crate::graph::{CpdExpr, EvalError, NodeKind, Operand};

pub const DEFAULT_CONTINUOUS_BINS: usize = 100;
pub const DEFAULT_COUNT_BINS: usize = 200;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_QUADRATURE: usize = 8;

const COLUMN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizeError {
    #[error("bad support [{lo}, {hi}] for scheme {scheme:?}")]
    BadSupport { lo: f64, hi: f64, scheme: Scheme },
    #[error("need at least 2 bins, got {0}")]
    BadCount(usize),
    #[error("posterior mass sums to {0}, not 1")]
    UnnormalizedPosterior(f64),
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EqualWidth,
    LogSpaced,
    Explicit,
}

/// Ordered partition of a node's support.
///
/// Continuous sets use `[edges[i], edges[i+1])` with the last interval
/// closed. Integer sets (count nodes) cover the integers
/// `edges[i] ..= edges[i+1] - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    pub node: String,
    pub edges: Vec<f64>,
    pub scheme: Scheme,
    pub integer: bool,
}

impl IntervalSet {
    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    /// Value standing in for bin `i`: the mean integer for count ranges,
    /// the geometric midpoint for log-spaced bins (arithmetic for a leading
    /// `[0, ε)` bin), the arithmetic midpoint otherwise.
    pub fn representative(&self, i: usize) -> f64 {
        let (lo, hi) = self.bounds(i);
        if self.integer {
            return (lo + hi - 1.0) / 2.0;
        }
        match self.scheme {
            Scheme::LogSpaced if lo > 0.0 => (lo * hi).sqrt(),
            _ => 0.5 * (lo + hi),
        }
    }

    pub fn representatives(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.representative(i)).collect()
    }

    /// `q` equally weighted points spread over bin `i` (log-uniformly for
    /// log-spaced bins). Count ranges always use their representative.
    pub fn quadrature(&self, i: usize, q: usize) -> Vec<f64> {
        if self.integer || q <= 1 {
            return vec![self.representative(i)];
        }
        let (lo, hi) = self.bounds(i);
        let log = self.scheme == Scheme::LogSpaced && lo > 0.0;
        (0..q)
            .map(|j| {
                let t = (j as f64 + 0.5) / q as f64;
                if log {
                    lo * (hi / lo).powf(t)
                } else {
                    lo + t * (hi - lo)
                }
            })
            .collect()
    }

    /// Index of the bin containing `v`; values outside the support clamp to
    /// the end bins.
    pub fn locate(&self, v: f64) -> usize {
        let v = if self.integer { v.round() } else { v };
        let n = self.len();
        if v < self.edges[1] {
            return 0;
        }
        if v >= self.edges[n - 1] {
            return n - 1;
        }
        // first edge strictly greater than v, minus one
        self.edges.partition_point(|e| *e <= v) - 1
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        let last = self.edges[self.len()];
        if self.integer {
            last - 1.0
        } else {
            last
        }
    }
}

/// Partition `[lo, hi]` into `count` intervals.
///
/// Log-spaced sets need `lo >= 0`; when `lo == 0` the first interval is
/// `[0, epsilon)` and the remaining `count - 1` are log-spaced over
/// `[epsilon, hi]`.
pub fn make_bins(
    node: &str,
    lo: f64,
    hi: f64,
    count: usize,
    scheme: Scheme,
    epsilon: f64,
) -> Result<IntervalSet, DiscretizeError> {
    if count < 2 {
        return Err(DiscretizeError::BadCount(count));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(DiscretizeError::BadSupport { lo, hi, scheme });
    }
    let edges = match scheme {
        Scheme::EqualWidth | Scheme::Explicit => {
            let w = (hi - lo) / count as f64;
            let mut e: Vec<f64> = (0..count).map(|i| lo + w * i as f64).collect();
            e.push(hi);
            e
        }
        Scheme::LogSpaced => {
            if lo < 0.0 || (lo == 0.0 && !(epsilon > 0.0 && epsilon < hi)) {
                return Err(DiscretizeError::BadSupport { lo, hi, scheme });
            }
            let (start, n_log, mut e) = if lo == 0.0 {
                (epsilon, count - 1, vec![0.0])
            } else {
                (lo, count, Vec::new())
            };
            let ratio = (hi / start).ln() / n_log as f64;
            e.extend((0..n_log).map(|i| start * (ratio * i as f64).exp()));
            e.push(hi);
            e
        }
    };
    Ok(IntervalSet { node: node.to_string(), edges, scheme, integer: false })
}

/// Integer bins from explicit edges; the last range ends at `max`.
pub fn explicit_count_bins(node: &str, mut edges: Vec<u64>, max: u64) -> IntervalSet {
    edges.retain(|e| *e <= max);
    edges.push(0);
    edges.push(max + 1);
    edges.sort_unstable();
    edges.dedup();
    IntervalSet {
        node: node.to_string(),
        edges: edges.into_iter().map(|e| e as f64).collect(),
        scheme: Scheme::Explicit,
        integer: true,
    }
}

/// Integer bins for `0..=max` within `budget` bins: singletons while they
/// fit, otherwise a quarter of the budget on singletons for small values and
/// log-spaced ranges above.
pub fn make_count_bins(node: &str, max: u64, budget: usize) -> IntervalSet {
    let budget = budget.max(2) as u64;
    if max < budget {
        return explicit_count_bins(node, (0..=max).collect(), max);
    }
    let singles = (budget / 4).max(1);
    let n_log = budget - singles;
    let mut edges: Vec<u64> = (0..=singles).collect();
    let ratio = ((max + 1) as f64 / singles as f64).ln() / n_log as f64;
    for i in 1..n_log {
        edges.push((singles as f64 * (ratio * i as f64).exp()).round() as u64);
    }
    explicit_count_bins(node, edges, max)
}

/// Integer bins focused on `lo..=hi`: one range below, up to `inside` equal
/// ranges across the interval, one range above.
pub fn make_focused_count_bins(node: &str, max: u64, lo: u64, hi: u64, inside: usize) -> IntervalSet {
    let width = hi - lo + 1;
    let parts = (inside.max(1) as u64).min(width);
    let mut edges: Vec<u64> = (0..parts).map(|i| lo + (width * i) / parts).collect();
    edges.push(hi + 1);
    explicit_count_bins(node, edges, max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinOverride {
    pub node: String,
    pub bins: usize,
    #[serde(default)]
    pub scheme: Option<Scheme>,
}

/// How continuous and count nodes are discretized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinningConfig {
    pub continuous_bins: usize,
    pub count_bins: usize,
    pub epsilon: f64,
    /// Points per continuous parent bin used when building CPT columns.
    pub quadrature: usize,
    pub overrides: Vec<BinOverride>,
}

impl Default for BinningConfig {
    fn default() -> Self {
        BinningConfig {
            continuous_bins: DEFAULT_CONTINUOUS_BINS,
            count_bins: DEFAULT_COUNT_BINS,
            epsilon: DEFAULT_EPSILON,
            quadrature: DEFAULT_QUADRATURE,
            overrides: Vec::new(),
        }
    }
}

impl BinningConfig {
    pub fn with_bins(continuous_bins: usize) -> Self {
        BinningConfig {
            continuous_bins,
            count_bins: 2 * continuous_bins,
            ..Default::default()
        }
    }

    /// Same config with every bin budget doubled.
    pub fn doubled(&self) -> Self {
        BinningConfig {
            continuous_bins: self.continuous_bins * 2,
            count_bins: self.count_bins * 2,
            overrides: self
                .overrides
                .iter()
                .map(|o| BinOverride { bins: o.bins * 2, ..o.clone() })
                .collect(),
            ..self.clone()
        }
    }

    fn override_for(&self, node: &str) -> Option<&BinOverride> {
        self.overrides.iter().find(|o| o.node == node)
    }

    /// Domain for a node. Probability-valued continuous nodes default to
    /// log-spaced bins; count nodes with a root uniform prior get bins
    /// focused on the prior's range.
    pub fn domain_for(&self, id: &str, kind: &NodeKind, cpd: &CpdExpr) -> Result<Domain, DiscretizeError> {
        let ov = self.override_for(id);
        match kind {
            NodeKind::Labelled { states } => Ok(Domain::states(states.clone(), false)),
            NodeKind::Ranked { states } => Ok(Domain::states(states.clone(), true)),
            NodeKind::Boolean => Ok(Domain::states(vec!["false".into(), "true".into()], false)),
            NodeKind::Continuous { lo, hi } => {
                let default_scheme = if *lo >= 0.0 && *hi <= 1.0 {
                    Scheme::LogSpaced
                } else {
                    Scheme::EqualWidth
                };
                let scheme = ov.and_then(|o| o.scheme).unwrap_or(default_scheme);
                let bins = ov.map(|o| o.bins).unwrap_or(self.continuous_bins);
                Ok(Domain::Bins(make_bins(id, *lo, *hi, bins, scheme, self.epsilon)?))
            }
            NodeKind::Count { max } => {
                let budget = ov.map(|o| o.bins).unwrap_or(self.count_bins);
                if budget < 2 {
                    return Err(DiscretizeError::BadCount(budget));
                }
                if let CpdExpr::Uniform { a: Operand::Const(a), b: Operand::Const(b) } = cpd {
                    let lo = a.ceil().max(0.0) as u64;
                    let hi = (b.floor().max(0.0) as u64).min(*max);
                    if lo <= hi {
                        return Ok(Domain::Bins(make_focused_count_bins(id, *max, lo, hi, budget / 4)));
                    }
                }
                Ok(Domain::Bins(make_count_bins(id, *max, budget)))
            }
        }
    }
}

/// Finite domain of a compiled node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    States { names: Vec<String>, ranked: bool },
    Bins(IntervalSet),
}

impl Domain {
    pub fn states(names: Vec<String>, ranked: bool) -> Self {
        Domain::States { names, ranked }
    }

    pub fn len(&self) -> usize {
        match self {
            Domain::States { names, .. } => names.len(),
            Domain::Bins(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Numeric value of state / bin `i` when read by an expression.
    pub fn value(&self, i: usize) -> f64 {
        match self {
            Domain::States { names, ranked: true } => crate::graph::ranked_midpoint(i, names.len()),
            Domain::States { .. } => i as f64,
            Domain::Bins(b) => b.representative(i),
        }
    }

    fn points(&self, i: usize, q: usize) -> Vec<f64> {
        match self {
            Domain::Bins(b) => b.quadrature(i, q),
            _ => vec![self.value(i)],
        }
    }

    pub fn bins(&self) -> Option<&IntervalSet> {
        match self {
            Domain::Bins(b) => Some(b),
            _ => None,
        }
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        match self {
            Domain::States { names, .. } => names.iter().position(|n| n == name),
            Domain::Bins(_) => None,
        }
    }
}

/// Posterior summary over an interval set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

pub fn summarize(set: &IntervalSet, mass: &[f64]) -> Result<Moments, DiscretizeError> {
    let total: f64 = mass.iter().sum();
    if (total - 1.0).abs() > 1e-6 || mass.len() != set.len() {
        return Err(DiscretizeError::UnnormalizedPosterior(total));
    }
    let reps = set.representatives();
    let mean: f64 = mass.iter().zip(&reps).map(|(m, r)| m * r).sum();
    let variance: f64 = mass
        .iter()
        .zip(&reps)
        .map(|(m, r)| m * (r - mean) * (r - mean))
        .sum::<f64>()
        .max(0.0);
    let percentile = |q: f64| {
        let mut cum = 0.0;
        for (i, m) in mass.iter().enumerate() {
            if *m > 0.0 && cum + m >= q * total {
                let (lo, mut hi) = set.bounds(i);
                if set.integer {
                    hi -= 1.0;
                }
                let frac = ((q * total - cum) / m).clamp(0.0, 1.0);
                return lo + frac * (hi - lo);
            }
            cum += m;
        }
        set.hi()
    };
    let (p5, p50, p95) = (percentile(0.05), percentile(0.5), percentile(0.95));
    Ok(Moments { mean, variance, p5, p50: p50.max(p5), p95: p95.max(p50) })
}

/// A parent slot of a CPT: its id and compiled domain.
#[derive(Debug, Clone, Copy)]
pub struct ParentSlot<'a> {
    pub id: &'a str,
    pub domain: &'a Domain,
}

/// Values and state indices of the parents at one evaluation point.
struct Env<'a> {
    ids: Vec<&'a str>,
    values: Vec<f64>,
    indices: Vec<usize>,
    cards: Vec<usize>,
}

impl Env<'_> {
    fn value(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|p| *p == id).map(|i| self.values[i])
    }
    fn card(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|p| *p == id).map(|i| self.cards[i])
    }
    fn index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|p| *p == id).map(|i| self.indices[i])
    }
    fn operand(&self, o: &Operand) -> Result<f64, DiscretizeError> {
        match o {
            Operand::Const(v) => Ok(*v),
            Operand::Parent { parent } => self
                .value(parent)
                .ok_or_else(|| EvalError::Unbound(parent.clone()).into()),
        }
    }
}

/// Conditional probability table: parents (in slot order) then the child,
/// row-major with the child varying fastest, so each column is contiguous.
pub fn expression_to_cpt(
    expr: &CpdExpr,
    parents: &[ParentSlot<'_>],
    child: &Domain,
    quadrature: usize,
) -> Result<Vec<f64>, DiscretizeError> {
    let child_card = child.len();
    let cards: Vec<usize> = parents.iter().map(|p| p.domain.len()).collect();
    let n_cols: usize = cards.iter().product();
    let q = quadrature.max(1);
    let mut values = vec![0.0; n_cols * child_card];
    values
        .par_chunks_mut(child_card)
        .enumerate()
        .try_for_each(|(col, out)| {
            let mut idx = vec![0usize; parents.len()];
            let mut rem = col;
            for j in (0..parents.len()).rev() {
                idx[j] = rem % cards[j];
                rem /= cards[j];
            }
            fill_column(expr, parents, &idx, child, q, out)
        })?;
    Ok(values)
}

/// A parent held at one value and state index, for [`point_column`].
#[derive(Debug, Clone, Copy)]
pub struct PointParent<'a> {
    pub id: &'a str,
    pub value: f64,
    pub index: usize,
    pub card: usize,
}

/// Child distribution of `expr` with every parent fixed at a single point.
pub fn point_column(expr: &CpdExpr, parents: &[PointParent<'_>], child: &Domain) -> Result<Vec<f64>, DiscretizeError> {
    let env = Env {
        ids: parents.iter().map(|p| p.id).collect(),
        values: parents.iter().map(|p| p.value).collect(),
        indices: parents.iter().map(|p| p.index).collect(),
        cards: parents.iter().map(|p| p.card).collect(),
    };
    let mut out = vec![0.0; child.len()];
    add_distribution(expr, &env, child, 1.0, &mut out)?;
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(DiscretizeError::UnsupportedCombination("point column carries no mass".into()));
    }
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

fn fill_column(
    expr: &CpdExpr,
    parents: &[ParentSlot<'_>],
    idx: &[usize],
    child: &Domain,
    q: usize,
    out: &mut [f64],
) -> Result<(), DiscretizeError> {
    let points: Vec<Vec<f64>> = parents
        .iter()
        .zip(idx)
        .map(|(p, &i)| p.domain.points(i, q))
        .collect();
    let n_combos: usize = points.iter().map(Vec::len).product();
    let weight = 1.0 / n_combos as f64;
    let mut env = Env {
        ids: parents.iter().map(|p| p.id).collect(),
        values: vec![0.0; parents.len()],
        indices: idx.to_vec(),
        cards: parents.iter().map(|p| p.domain.len()).collect(),
    };
    let mut combo = vec![0usize; parents.len()];
    for _ in 0..n_combos {
        for (j, pts) in points.iter().enumerate() {
            env.values[j] = pts[combo[j]];
        }
        add_distribution(expr, &env, child, weight, out)?;
        for j in (0..combo.len()).rev() {
            combo[j] += 1;
            if combo[j] < points[j].len() {
                break;
            }
            combo[j] = 0;
        }
    }
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(DiscretizeError::UnsupportedCombination(format!(
            "column for parent states {idx:?} carries no mass"
        )));
    }
    out.iter_mut().for_each(|v| *v /= total);
    debug_assert!((out.iter().sum::<f64>() - 1.0).abs() < COLUMN_TOLERANCE);
    Ok(())
}

fn add_distribution(
    expr: &CpdExpr,
    env: &Env<'_>,
    child: &Domain,
    w: f64,
    out: &mut [f64],
) -> Result<(), DiscretizeError> {
    match expr {
        CpdExpr::Table { parents, rows } => {
            let mut row = 0usize;
            for p in parents {
                let i = env.index(p).ok_or_else(|| EvalError::Unbound(p.clone()))?;
                row = row * env.card(p).unwrap_or(1) + i;
            }
            let r = rows.get(row).ok_or_else(|| {
                DiscretizeError::UnsupportedCombination(format!("table has no row {row}"))
            })?;
            for (o, v) in out.iter_mut().zip(r) {
                *o += w * v;
            }
        }
        CpdExpr::Beta { alpha, beta } => {
            let (a, b) = (env.operand(alpha)?, env.operand(beta)?);
            if !(a > 0.0 && b > 0.0) {
                return Err(DiscretizeError::UnsupportedCombination(format!("beta({a}, {b})")));
            }
            let set = continuous_child(child, "beta")?;
            add_cdf_mass(set, |x| beta_reg(a, b, x.clamp(0.0, 1.0)), w, out);
        }
        CpdExpr::Uniform { a, b } => {
            let (a, b) = (env.operand(a)?, env.operand(b)?);
            match child {
                Domain::Bins(set) if set.integer => {
                    let (lo, hi) = (a.ceil(), b.floor());
                    let total = hi - lo + 1.0;
                    if total < 1.0 {
                        return Err(DiscretizeError::UnsupportedCombination(format!("uniform({a}, {b}) has no integers")));
                    }
                    for (i, o) in out.iter_mut().enumerate() {
                        let (l, h) = set.bounds(i);
                        let overlap = (h - 1.0).min(hi) - l.max(lo) + 1.0;
                        if overlap > 0.0 {
                            *o += w * overlap / total;
                        }
                    }
                }
                _ => {
                    if !(a < b) {
                        return Err(DiscretizeError::UnsupportedCombination(format!("uniform({a}, {b})")));
                    }
                    let set = continuous_child(child, "uniform")?;
                    add_cdf_mass(set, |x| ((x - a) / (b - a)).clamp(0.0, 1.0), w, out);
                }
            }
        }
        CpdExpr::TNormal { mean, variance, lo, hi } => {
            let mu = mean.eval(&|id| env.value(id))?;
            add_tnormal(mu, variance.sqrt(), *lo, *hi, child, w, out)?;
        }
        CpdExpr::Binomial { n, p } => {
            let trials = env.operand(n)?.round();
            let p = env.operand(p)?.clamp(0.0, 1.0);
            let set = match child {
                Domain::Bins(s) if s.integer => s,
                _ => return Err(DiscretizeError::UnsupportedCombination("binomial needs a count child".into())),
            };
            if trials < 0.0 || trials > set.hi() {
                return Err(DiscretizeError::UnsupportedCombination(format!(
                    "binomial n = {trials} exceeds child support {}",
                    set.hi()
                )));
            }
            add_binomial(trials as u64, p, set, w, out);
        }
        CpdExpr::Deterministic { expr } => {
            let v = expr.eval(&|id| env.value(id))?;
            let i = match child {
                Domain::Bins(set) => set.locate(v),
                Domain::States { names, ranked: true } => {
                    ((v * names.len() as f64).floor().max(0.0) as usize).min(names.len() - 1)
                }
                Domain::States { names, .. } => (v.round().max(0.0) as usize).min(names.len() - 1),
            };
            out[i] += w;
        }
        CpdExpr::Partitioned { parent, cases } => {
            let i = env.index(parent).ok_or_else(|| EvalError::Unbound(parent.clone()))?;
            let case = cases.get(i).ok_or_else(|| {
                DiscretizeError::UnsupportedCombination(format!("no case for state {i} of `{parent}`"))
            })?;
            add_distribution(case, env, child, w, out)?;
        }
        CpdExpr::Mixture { components } => {
            for c in components {
                add_distribution(&c.cpd, env, child, w * c.weight, out)?;
            }
        }
    }
    Ok(())
}

fn continuous_child<'a>(child: &'a Domain, what: &str) -> Result<&'a IntervalSet, DiscretizeError> {
    match child {
        Domain::Bins(s) if !s.integer => Ok(s),
        _ => Err(DiscretizeError::UnsupportedCombination(format!("{what} needs a continuous child"))),
    }
}

/// Adds CDF mass per bin, renormalized over the child's support.
fn add_cdf_mass(set: &IntervalSet, cdf: impl Fn(f64) -> f64, w: f64, out: &mut [f64]) {
    let cdfs: Vec<f64> = set.edges.iter().map(|e| cdf(*e)).collect();
    let total = cdfs[cdfs.len() - 1] - cdfs[0];
    if total <= 0.0 {
        return;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o += w * (cdfs[i + 1] - cdfs[i]).max(0.0) / total;
    }
}

/// Standard normal mass on `[a, b]`, accurate in either tail.
fn normal_mass(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let s = std::f64::consts::SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a / s) - erfc(b / s))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / s) - erfc(-a / s))
    } else {
        1.0 - 0.5 * erfc(-a / s) - 0.5 * erfc(b / s)
    }
}

fn add_tnormal(
    mu: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    child: &Domain,
    w: f64,
    out: &mut [f64],
) -> Result<(), DiscretizeError> {
    let intervals: Vec<(f64, f64)> = match child {
        Domain::States { names, ranked: true } => {
            let k = names.len() as f64;
            (0..names.len()).map(|i| (i as f64 / k, (i + 1) as f64 / k)).collect()
        }
        Domain::Bins(set) if set.integer => (0..set.len())
            .map(|i| {
                let (l, h) = set.bounds(i);
                (l - 0.5, h - 0.5)
            })
            .collect(),
        Domain::Bins(set) => (0..set.len()).map(|i| set.bounds(i)).collect(),
        Domain::States { .. } => {
            return Err(DiscretizeError::UnsupportedCombination("tnormal needs a ranked, count or continuous child".into()))
        }
    };
    let masses: Vec<f64> = intervals
        .iter()
        .map(|(l, h)| {
            let (l, h) = (l.max(lo), h.min(hi));
            normal_mass((l - mu) / sd, (h - mu) / sd)
        })
        .collect();
    let total: f64 = masses.iter().sum();
    if total > 0.0 {
        for (o, m) in out.iter_mut().zip(&masses) {
            *o += w * m / total;
        }
    } else {
        // mean far outside the truncation: all mass on the nearest interval
        let nearest = intervals
            .iter()
            .enumerate()
            .filter(|(_, (l, h))| h.min(hi) > l.max(lo))
            .min_by(|(_, a), (_, b)| {
                let da = (a.0.max(lo) - mu).abs().min((a.1.min(hi) - mu).abs());
                let db = (b.0.max(lo) - mu).abs().min((b.1.min(hi) - mu).abs());
                da.total_cmp(&db)
            })
            .map(|(i, _)| i)
            .ok_or_else(|| DiscretizeError::UnsupportedCombination("tnormal truncation misses the child support".into()))?;
        out[nearest] += w;
    }
    Ok(())
}

/// Binomial(n, p) pmf summed over integer ranges, built by ratio recursion
/// outward from the mode. Terms below 1e-18 of the modal term are dropped.
pub(crate) fn add_binomial(n: u64, p: f64, set: &IntervalSet, w: f64, out: &mut [f64]) {
    if p <= 0.0 || n == 0 {
        out[set.locate(0.0)] += w;
        return;
    }
    if p >= 1.0 {
        out[set.locate(n as f64)] += w;
        return;
    }
    let nf = n as f64;
    let mode = (((nf + 1.0) * p).floor() as u64).min(n);
    let odds = p / (1.0 - p);
    let cutoff = 1e-18;
    // accumulate relative to the mode, then scale
    let mut sums = vec![0.0; out.len()];
    let mut term = 1.0;
    let mut bin = set.locate(mode as f64);
    sums[bin] += 1.0;
    let mut k = mode;
    while k < n {
        term *= (nf - k as f64) / (k as f64 + 1.0) * odds;
        k += 1;
        if term < cutoff {
            break;
        }
        while bin + 1 < set.len() && (k as f64) >= set.edges[bin + 1] {
            bin += 1;
        }
        sums[bin] += term;
    }
    term = 1.0;
    bin = set.locate(mode as f64);
    k = mode;
    while k > 0 {
        term *= k as f64 / (nf - k as f64 + 1.0) / odds;
        k -= 1;
        if term < cutoff {
            break;
        }
        while bin > 0 && (k as f64) < set.edges[bin] {
            bin -= 1;
        }
        sums[bin] += term;
    }
    let total: f64 = sums.iter().sum();
    for (o, s) in out.iter_mut().zip(&sums) {
        *o += w * s / total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Expr;
    use proptest::prelude::*;

    fn bins(set: IntervalSet) -> Domain {
        Domain::Bins(set)
    }

    fn root_column(cpd: &CpdExpr, child: &Domain) -> Vec<f64> {
        expression_to_cpt(cpd, &[], child, DEFAULT_QUADRATURE).unwrap()
    }

    #[test]
    fn four_equal_width_bins() {
        let s = make_bins("x", 0.0, 1.0, 4, Scheme::EqualWidth, DEFAULT_EPSILON).unwrap();
        assert_eq!(s.edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(s.locate(0.25), 1);
        assert_eq!(s.locate(1.0), 3);
        assert_eq!(s.locate(-3.0), 0);
    }

    #[test]
    fn log_bins_have_leading_epsilon_bin_and_constant_ratio() {
        let s = make_bins("p", 0.0, 1.0, 50, Scheme::LogSpaced, 1e-6).unwrap();
        assert_eq!(s.len(), 50);
        assert_eq!(s.bounds(0), (0.0, 1e-6));
        let r0 = s.edges[2] / s.edges[1];
        for i in 1..50 {
            let r = s.edges[i + 1] / s.edges[i];
            assert!((r / r0 - 1.0).abs() < 1e-9, "ratio drift at {i}");
        }
        assert_eq!(s.representative(0), 0.5e-6);
    }

    #[test]
    fn bad_counts_and_supports() {
        assert!(matches!(
            make_bins("x", 0.0, 1.0, 1, Scheme::EqualWidth, 1e-6),
            Err(DiscretizeError::BadCount(1))
        ));
        assert!(matches!(
            make_bins("x", 1.0, 1.0, 4, Scheme::EqualWidth, 1e-6),
            Err(DiscretizeError::BadSupport { .. })
        ));
        assert!(make_bins("x", -1.0, 1.0, 4, Scheme::LogSpaced, 1e-6).is_err());
    }

    #[test]
    fn count_bins_cover_support() {
        let small = make_count_bins("n", 10, 200);
        assert_eq!(small.len(), 11);
        assert!((0..11).all(|i| small.bounds(i) == (i as f64, i as f64 + 1.0)));
        let big = make_count_bins("n", 100_000, 200);
        assert!(big.len() <= 200 && big.len() > 150);
        assert_eq!(big.lo(), 0.0);
        assert_eq!(big.hi(), 100_000.0);
        assert!(big.edges.windows(2).all(|w| w[0] < w[1]));
        let f = make_focused_count_bins("n", 200_000, 50_000, 100_000, 50);
        assert_eq!(f.len(), 52);
        assert_eq!(f.bounds(0), (0.0, 50_000.0));
        assert_eq!(f.hi(), 200_000.0);
    }

    #[test]
    fn uniform_over_four_bins() {
        let child = bins(make_bins("x", 0.0, 1.0, 4, Scheme::EqualWidth, 1e-6).unwrap());
        let col = root_column(&CpdExpr::Uniform { a: 0.0.into(), b: 1.0.into() }, &child);
        for v in col {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_mean_preserved_on_log_bins() {
        let child = bins(make_bins("p", 0.0, 1.0, 100, Scheme::LogSpaced, 1e-6).unwrap());
        let col = root_column(&CpdExpr::Beta { alpha: 2.0.into(), beta: 2001.0.into() }, &child);
        let m = summarize(child.bins().unwrap(), &col).unwrap();
        let exact = 2.0 / 2003.0;
        assert!((m.mean / exact - 1.0).abs() < 0.02, "mean {}", m.mean);
        assert!(m.p5 < m.p50 && m.p50 < m.p95);
    }

    #[test]
    fn binomial_is_symmetric_at_one_half() {
        let child = bins(make_count_bins("k", 10, 200));
        let col = root_column(&CpdExpr::Binomial { n: 10.0.into(), p: 0.5.into() }, &child);
        let choose = |k: u64| (1..=k).fold(1.0, |acc, i| acc * (10 - k + i) as f64 / i as f64);
        for k in 0..=10u64 {
            assert!((col[k as usize] - choose(k) / 1024.0).abs() < 1e-14);
            assert!((col[k as usize] - col[10 - k as usize]).abs() < 1e-15);
        }
        let mode = col.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(mode, 5);
    }

    #[test]
    fn binomial_into_ranges_keeps_mean() {
        let child = bins(make_count_bins("k", 100_000, 200));
        let col = root_column(&CpdExpr::Binomial { n: 100_000.0.into(), p: 0.01.into() }, &child);
        let m = summarize(child.bins().unwrap(), &col).unwrap();
        assert!((m.mean / 1000.0 - 1.0).abs() < 0.01, "mean {}", m.mean);
    }

    #[test]
    fn tnormal_on_ranked_child_is_symmetric() {
        let child = Domain::states((0..5).map(|i| format!("s{i}")).collect(), true);
        let cpd = CpdExpr::TNormal { mean: Expr::Const(0.5), variance: 0.01, lo: 0.0, hi: 1.0 };
        let col = root_column(&cpd, &child);
        assert!((col[0] - col[4]).abs() < 1e-12 && (col[1] - col[3]).abs() < 1e-12);
        assert!(col[2] > col[1] && col[1] > col[0]);
        // far outside the truncation, everything lands on the nearest state
        let far = CpdExpr::TNormal { mean: Expr::Const(90.0), variance: 1e-4, lo: 0.0, hi: 1.0 };
        assert_eq!(root_column(&far, &child), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn deterministic_child_uses_quadrature_over_parent_bin() {
        let parent = bins(make_bins("x", 0.0, 1.0, 2, Scheme::EqualWidth, 1e-6).unwrap());
        let child = bins(make_bins("y", 0.0, 2.0, 4, Scheme::EqualWidth, 1e-6).unwrap());
        let cpd = CpdExpr::Deterministic { expr: Expr::mul(Expr::var("x"), Expr::Const(2.0)) };
        let slots = [ParentSlot { id: "x", domain: &parent }];
        let cpt = expression_to_cpt(&cpd, &slots, &child, 8).unwrap();
        // x in [0, .5) maps to y in [0, 1): half the points in each of the first two bins
        assert_eq!(&cpt[..4], &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(&cpt[4..], &[0.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn summarize_uniform_mass() {
        let s = make_bins("x", 0.0, 1.0, 4, Scheme::EqualWidth, 1e-6).unwrap();
        let m = summarize(&s, &[0.25; 4]).unwrap();
        assert!((m.mean - 0.5).abs() < 1e-12);
        assert!((m.variance - 0.078125).abs() < 1e-12);
        assert!((m.p5 - 0.05).abs() < 1e-12);
        assert!((m.p50 - 0.5).abs() < 1e-12);
        assert!((m.p95 - 0.95).abs() < 1e-12);
        assert!(matches!(summarize(&s, &[0.2; 4]), Err(DiscretizeError::UnnormalizedPosterior(_))));
    }

    #[test]
    fn refinement_converges_on_beta_mean() {
        let exact = 2.0 / 2003.0;
        let err = |n: usize| {
            let child = bins(make_bins("p", 0.0, 1.0, n, Scheme::LogSpaced, 1e-6).unwrap());
            let col = root_column(&CpdExpr::Beta { alpha: 2.0.into(), beta: 2001.0.into() }, &child);
            (summarize(child.bins().unwrap(), &col).unwrap().mean - exact).abs()
        };
        assert!(err(200) < err(50));
    }

    proptest! {
        #[test]
        fn beta_columns_are_distributions(a in 0.2f64..50.0, b in 0.2f64..5000.0, n in 4usize..120) {
            let child = bins(make_bins("p", 0.0, 1.0, n, Scheme::LogSpaced, 1e-6).unwrap());
            let col = root_column(&CpdExpr::Beta { alpha: a.into(), beta: b.into() }, &child);
            prop_assert!(col.iter().all(|v| *v >= 0.0));
            prop_assert!((col.iter().sum::<f64>() - 1.0).abs() < COLUMN_TOLERANCE);
        }

        #[test]
        fn binomial_columns_are_distributions(n in 0u64..50_000, p in 0.0f64..1.0, budget in 8usize..300) {
            let child = bins(make_count_bins("k", 50_000, budget));
            let col = root_column(&CpdExpr::Binomial { n: (n as f64).into(), p: p.into() }, &child);
            prop_assert!(col.iter().all(|v| *v >= 0.0));
            prop_assert!((col.iter().sum::<f64>() - 1.0).abs() < COLUMN_TOLERANCE);
        }

        #[test]
        fn locate_lands_in_bin(v in 0.0f64..1.0, n in 2usize..200) {
            let s = make_bins("p", 0.0, 1.0, n, Scheme::LogSpaced, 1e-6).unwrap();
            let i = s.locate(v);
            let (lo, hi) = s.bounds(i);
            prop_assert!(lo <= v && (v < hi || i == s.len() - 1));
        }
    }
}
