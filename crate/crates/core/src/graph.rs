//! Declarative hybrid Bayesian network models.
//!
//! A [`ModelSpec`] is a plain value: a list of [`NodeSpec`]s, each carrying a
//! [`NodeKind`] and a [`CpdExpr`], plus an edge list. Nothing is discretized
//! here; see [`crate::discretize`] and [`crate::infer::compile`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current version of the model JSON document.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("edge {parent} -> {child} would create a cycle")]
    CycleDetected { parent: String, child: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeKind {
    Labelled { states: Vec<String> },
    Boolean,
    /// Ordered states mapped onto equal sub-intervals of [0, 1].
    Ranked { states: Vec<String> },
    Continuous { lo: f64, hi: f64 },
    /// Integer support `0..=max`.
    Count { max: u64 },
}

impl NodeKind {
    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            NodeKind::Labelled { .. } | NodeKind::Boolean | NodeKind::Ranked { .. }
        )
    }

    /// State names for discrete kinds.
    pub fn states(&self) -> Option<Vec<String>> {
        match self {
            NodeKind::Labelled { states } | NodeKind::Ranked { states } => Some(states.clone()),
            NodeKind::Boolean => Some(vec!["false".into(), "true".into()]),
            _ => None,
        }
    }

    /// Numeric value a discrete state takes when used inside an expression.
    pub fn state_value(&self, index: usize) -> f64 {
        match self {
            NodeKind::Ranked { states } => ranked_midpoint(index, states.len()),
            _ => index as f64,
        }
    }
}

/// Midpoint of state `k` of a ranked node with `k_states` states.
pub fn ranked_midpoint(k: usize, k_states: usize) -> f64 {
    (k as f64 + 0.5) / k_states as f64
}

/// A constant or the value of a parent node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Const(f64),
    Parent { parent: String },
}

impl Operand {
    pub fn parent(id: impl Into<String>) -> Self {
        Operand::Parent { parent: id.into() }
    }
}

impl From<f64> for Operand {
    fn from(v: f64) -> Self {
        Operand::Const(v)
    }
}

/// Arithmetic over parent values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    /// `1 - (1 - p)^n`: probability of at least one event in `n` trials.
    Exposure { p: Box<Expr>, n: Box<Expr> },
    /// Position of a positive value on a banded log scale, mapped to [0, 1].
    ///
    /// `edges` (ascending, positive) separate `edges.len() + 1` bands of
    /// equal width on [0, 1]; edge `k` maps to `(k + 1) / (edges.len() + 1)`.
    /// Within a band the score is log-linear; the outer bands extend by the
    /// log width of their neighbour and the result is clamped.
    BandScore { x: Box<Expr>, edges: Vec<f64> },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("expression produced a non-finite value")]
    NonFinite,
}

impl Expr {
    pub fn var(id: impl Into<String>) -> Self {
        Expr::Var(id.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Self {
        Expr::Add(Box::new(a), Box::new(b))
    }
    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Expr, b: Expr) -> Self {
        Expr::Sub(Box::new(a), Box::new(b))
    }
    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Self {
        Expr::Mul(Box::new(a), Box::new(b))
    }
    #[allow(clippy::should_implement_trait)]
    pub fn div(a: Expr, b: Expr) -> Self {
        Expr::Div(Box::new(a), Box::new(b))
    }
    pub fn pow(a: Expr, b: Expr) -> Self {
        Expr::Pow(Box::new(a), Box::new(b))
    }
    pub fn min(a: Expr, b: Expr) -> Self {
        Expr::Min(Box::new(a), Box::new(b))
    }
    pub fn max(a: Expr, b: Expr) -> Self {
        Expr::Max(Box::new(a), Box::new(b))
    }
    pub fn exposure(p: Expr, n: Expr) -> Self {
        Expr::Exposure { p: Box::new(p), n: Box::new(n) }
    }
    pub fn band_score(x: Expr, edges: Vec<f64>) -> Self {
        Expr::BandScore { x: Box::new(x), edges }
    }

    /// Normalized weighted mean `sum(w_i * x_i) / sum(w_i)`.
    pub fn weighted_mean(terms: &[(Expr, f64)]) -> Self {
        let total: f64 = terms.iter().map(|(_, w)| w).sum();
        let mut acc: Option<Expr> = None;
        for (e, w) in terms {
            let term = Expr::mul(Expr::Const(w / total), e.clone());
            acc = Some(match acc {
                None => term,
                Some(a) => Expr::add(a, term),
            });
        }
        acc.unwrap_or(Expr::Const(0.0))
    }

    pub fn eval<F>(&self, lookup: &F) -> Result<f64, EvalError>
    where
        F: Fn(&str) -> Option<f64>,
    {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(id) => lookup(id).ok_or_else(|| EvalError::Unbound(id.clone()))?,
            Expr::Add(a, b) => a.eval(lookup)? + b.eval(lookup)?,
            Expr::Sub(a, b) => a.eval(lookup)? - b.eval(lookup)?,
            Expr::Mul(a, b) => a.eval(lookup)? * b.eval(lookup)?,
            Expr::Div(a, b) => {
                let d = b.eval(lookup)?;
                if d == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval(lookup)? / d
            }
            Expr::Pow(a, b) => a.eval(lookup)?.powf(b.eval(lookup)?),
            Expr::Min(a, b) => a.eval(lookup)?.min(b.eval(lookup)?),
            Expr::Max(a, b) => a.eval(lookup)?.max(b.eval(lookup)?),
            Expr::Exposure { p, n } => {
                let p = p.eval(lookup)?.clamp(0.0, 1.0);
                let n = n.eval(lookup)?.max(0.0);
                exposure(p, n)
            }
            Expr::BandScore { x, edges } => band_score(x.eval(lookup)?, edges),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(id) => {
                out.insert(id.clone());
            }
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Exposure { p, n } => {
                p.collect_vars(out);
                n.collect_vars(out);
            }
            Expr::BandScore { x, .. } => x.collect_vars(out),
        }
    }

    /// True when some division has a denominator that folds to zero
    /// without looking at any variable.
    pub fn has_static_zero_division(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Div(a, b) => {
                b.const_value() == Some(0.0)
                    || a.has_static_zero_division()
                    || b.has_static_zero_division()
            }
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Pow(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => a.has_static_zero_division() || b.has_static_zero_division(),
            Expr::Exposure { p, n } => p.has_static_zero_division() || n.has_static_zero_division(),
            Expr::BandScore { x, .. } => x.has_static_zero_division(),
        }
    }

    fn const_value(&self) -> Option<f64> {
        let mut vars = BTreeSet::new();
        self.collect_vars(&mut vars);
        if vars.is_empty() {
            self.eval(&|_| None).ok()
        } else {
            None
        }
    }
}

/// `1 - (1 - p)^n`, evaluated without cancellation for small `p`.
pub fn exposure(p: f64, n: f64) -> f64 {
    if p <= 0.0 || n <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    -(n * (-p).ln_1p()).exp_m1()
}

/// See [`Expr::BandScore`].
pub fn band_score(x: f64, edges: &[f64]) -> f64 {
    let bands = edges.len() + 1;
    if edges.is_empty() {
        return 0.5;
    }
    if x <= 0.0 {
        return 0.0;
    }
    let width = 1.0 / bands as f64;
    // anchors a_0 .. a_bands, with a_{k+1} = edges[k]
    let first_ratio = if edges.len() > 1 { edges[1] / edges[0] } else { 10.0 };
    let last_ratio = if edges.len() > 1 {
        edges[edges.len() - 1] / edges[edges.len() - 2]
    } else {
        10.0
    };
    let mut anchors = Vec::with_capacity(bands + 1);
    anchors.push(edges[0] / first_ratio);
    anchors.extend_from_slice(edges);
    anchors.push(edges[edges.len() - 1] * last_ratio);
    if x <= anchors[0] {
        return 0.0;
    }
    if x >= anchors[bands] {
        return 1.0;
    }
    let k = anchors.windows(2).position(|w| x < w[1]).unwrap_or(bands - 1);
    let frac = (x / anchors[k]).ln() / (anchors[k + 1] / anchors[k]).ln();
    ((k as f64 + frac) * width).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub cpd: CpdExpr,
}

/// Conditional distribution of a node given its parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CpdExpr {
    /// One row per parent-state combination, last parent varying fastest.
    Table { parents: Vec<String>, rows: Vec<Vec<f64>> },
    Beta { alpha: Operand, beta: Operand },
    Binomial { n: Operand, p: Operand },
    Uniform { a: Operand, b: Operand },
    #[serde(rename = "tnormal")]
    TNormal { mean: Expr, variance: f64, lo: f64, hi: f64 },
    Deterministic { expr: Expr },
    Partitioned { parent: String, cases: Vec<CpdExpr> },
    Mixture { components: Vec<MixtureComponent> },
}

impl CpdExpr {
    /// A root table with a single row.
    pub fn prior(probs: Vec<f64>) -> Self {
        CpdExpr::Table { parents: vec![], rows: vec![probs] }
    }

    /// Every node id this expression reads.
    pub fn references(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs(&self, out: &mut BTreeSet<String>) {
        let op = |o: &Operand, out: &mut BTreeSet<String>| {
            if let Operand::Parent { parent } = o {
                out.insert(parent.clone());
            }
        };
        match self {
            CpdExpr::Table { parents, .. } => out.extend(parents.iter().cloned()),
            CpdExpr::Beta { alpha, beta } => {
                op(alpha, out);
                op(beta, out);
            }
            CpdExpr::Binomial { n, p } => {
                op(n, out);
                op(p, out);
            }
            CpdExpr::Uniform { a, b } => {
                op(a, out);
                op(b, out);
            }
            CpdExpr::TNormal { mean, .. } => mean.collect_vars(out),
            CpdExpr::Deterministic { expr } => expr.collect_vars(out),
            CpdExpr::Partitioned { parent, cases } => {
                out.insert(parent.clone());
                for c in cases {
                    c.collect_refs(out);
                }
            }
            CpdExpr::Mixture { components } => {
                for c in components {
                    c.cpd.collect_refs(out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    pub cpd: CpdExpr,
}

impl NodeSpec {
    pub fn new(id: impl Into<String>, kind: NodeKind, cpd: CpdExpr) -> Self {
        NodeSpec { id: id.into(), kind, cpd }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<(String, String)>,
}

fn default_schema_version() -> u32 {
    MODEL_SCHEMA_VERSION
}

impl ModelSpec {
    pub fn new() -> Self {
        ModelSpec { schema_version: MODEL_SCHEMA_VERSION, ..Default::default() }
    }

    pub fn add_node(mut self, spec: NodeSpec) -> Result<Self, GraphError> {
        self.push_node(spec)?;
        Ok(self)
    }

    pub fn add_edge(mut self, parent: &str, child: &str) -> Result<Self, GraphError> {
        self.push_edge(parent, child)?;
        Ok(self)
    }

    /// In-place form of [`ModelSpec::add_node`].
    pub fn push_node(&mut self, spec: NodeSpec) -> Result<(), GraphError> {
        if self.node(&spec.id).is_some() {
            return Err(GraphError::DuplicateId(spec.id));
        }
        self.nodes.push(spec);
        Ok(())
    }

    /// In-place form of [`ModelSpec::add_edge`].
    pub fn push_edge(&mut self, parent: &str, child: &str) -> Result<(), GraphError> {
        for id in [parent, child] {
            if self.node(id).is_none() {
                return Err(GraphError::UnknownNode(id.to_string()));
            }
        }
        if parent == child || self.reaches(child, parent) {
            return Err(GraphError::CycleDetected {
                parent: parent.to_string(),
                child: child.to_string(),
            });
        }
        if !self.edges.iter().any(|(p, c)| p == parent && c == child) {
            self.edges.push((parent.to_string(), child.to_string()));
        }
        Ok(())
    }

    /// Adds a node and an edge from every node its CPD references.
    pub fn push_node_with_parents(&mut self, spec: NodeSpec) -> Result<(), GraphError> {
        let refs = spec.cpd.references();
        let id = spec.id.clone();
        self.push_node(spec)?;
        for p in refs {
            self.push_edge(&p, &id)?;
        }
        Ok(())
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut NodeSpec> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    /// Parents of `id` in edge insertion order.
    pub fn parents(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|(_, c)| c == id)
            .map(|(p, _)| p.as_str())
            .collect()
    }

    pub fn children(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|(p, _)| p == id)
            .map(|(_, c)| c.as_str())
            .collect()
    }

    fn reaches(&self, from: &str, to: &str) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.children(n));
            }
        }
        false
    }

    /// Nodes whose posterior can change when evidence on `sources` changes,
    /// given evidence on `observed`: every node d-connected to a source,
    /// plus the sources. Other observed nodes are left out.
    pub fn d_connected(&self, sources: &[&str], observed: &BTreeSet<String>) -> BTreeSet<String> {
        let blocked = |n: &str| observed.contains(n) && !sources.contains(&n);
        // ancestors of the observed set open v-structures
        let mut open: BTreeSet<&str> = BTreeSet::new();
        let mut stack: Vec<&str> = observed.iter().map(|s| s.as_str()).filter(|s| blocked(s)).collect();
        while let Some(n) = stack.pop() {
            if open.insert(n) {
                stack.extend(self.parents(n));
            }
        }
        // (node, arrived from a child)
        let mut queue: Vec<(&str, bool)> = sources.iter().map(|s| (*s, true)).collect();
        let mut visited = BTreeSet::new();
        let mut out: BTreeSet<String> = sources.iter().map(|s| s.to_string()).collect();
        while let Some((n, up)) = queue.pop() {
            if self.node(n).is_none() || !visited.insert((n, up)) {
                continue;
            }
            let obs = blocked(n);
            if !obs {
                out.insert(n.to_string());
                queue.extend(self.children(n).into_iter().map(|c| (c, false)));
                if up {
                    queue.extend(self.parents(n).into_iter().map(|p| (p, true)));
                }
            }
            if !up && open.contains(n) {
                queue.extend(self.parents(n).into_iter().map(|p| (p, true)));
            }
        }
        out
    }

    /// Kahn's algorithm with lexicographic tie-breaking; `None` on a cycle
    /// or a dangling edge.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        let mut indeg: BTreeMap<&str, usize> =
            self.nodes.iter().map(|n| (n.id.as_str(), 0)).collect();
        for (p, c) in &self.edges {
            if !indeg.contains_key(p.as_str()) {
                return None;
            }
            *indeg.get_mut(c.as_str())? += 1;
        }
        let mut ready: BTreeSet<&str> =
            indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n.to_string());
            for c in self.children(n) {
                let d = indeg.get_mut(c)?;
                *d -= 1;
                if *d == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub node: Option<String>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Some(n) => write!(f, "{n}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    fn push(&mut self, node: Option<&str>, message: impl Into<String>) {
        self.findings.push(Finding { node: node.map(str::to_string), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

/// Lists every structural and CPD problem in `model`.
pub fn validate(model: &ModelSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = BTreeSet::new();
    for n in &model.nodes {
        if !seen.insert(n.id.as_str()) {
            report.push(Some(&n.id), "duplicate node id");
        }
    }
    for (p, c) in &model.edges {
        for id in [p, c] {
            if model.node(id).is_none() {
                report.push(None, format!("edge {p} -> {c} references unknown node `{id}`"));
            }
        }
    }
    if model.topological_order().is_none()
        && model.edges.iter().all(|(p, c)| model.node(p).is_some() && model.node(c).is_some())
    {
        report.push(None, "edge set contains a cycle");
    }

    for n in &model.nodes {
        check_kind(n, &mut report);
        let graph_parents: BTreeSet<String> =
            model.parents(&n.id).into_iter().map(str::to_string).collect();
        let referenced = n.cpd.references();
        for missing in referenced.difference(&graph_parents) {
            report.push(Some(&n.id), format!("cpd references `{missing}` which is not a graph parent (missing parent)"));
        }
        for extra in graph_parents.difference(&referenced) {
            report.push(Some(&n.id), format!("graph parent `{extra}` is unreferenced by the cpd"));
        }
        check_cpd(model, n, &n.cpd, &mut report);
    }
    report
}

fn check_kind(n: &NodeSpec, report: &mut ValidationReport) {
    match &n.kind {
        NodeKind::Labelled { states } | NodeKind::Ranked { states } => {
            if states.len() < 2 {
                report.push(Some(&n.id), format!("needs at least 2 states, has {}", states.len()));
            }
            let unique: BTreeSet<_> = states.iter().collect();
            if unique.len() != states.len() {
                report.push(Some(&n.id), "duplicate state names");
            }
        }
        NodeKind::Continuous { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                report.push(Some(&n.id), format!("support [{lo}, {hi}] is empty or not finite"));
            }
        }
        NodeKind::Count { max } => {
            if *max < 1 {
                report.push(Some(&n.id), "count support needs max >= 1");
            }
        }
        NodeKind::Boolean => {}
    }
}

fn parent_card(model: &ModelSpec, id: &str) -> Option<usize> {
    model.node(id).and_then(|p| p.kind.states()).map(|s| s.len())
}

fn check_cpd(model: &ModelSpec, n: &NodeSpec, cpd: &CpdExpr, report: &mut ValidationReport) {
    let id = Some(n.id.as_str());
    let kind_ok = match cpd {
        CpdExpr::Table { .. } => n.kind.is_discrete(),
        CpdExpr::Beta { .. } => matches!(n.kind, NodeKind::Continuous { .. }),
        CpdExpr::Binomial { .. } => matches!(n.kind, NodeKind::Count { .. }),
        CpdExpr::Uniform { .. } => {
            matches!(n.kind, NodeKind::Continuous { .. } | NodeKind::Count { .. })
        }
        CpdExpr::TNormal { .. } => matches!(
            n.kind,
            NodeKind::Continuous { .. } | NodeKind::Count { .. } | NodeKind::Ranked { .. }
        ),
        CpdExpr::Deterministic { .. } | CpdExpr::Partitioned { .. } | CpdExpr::Mixture { .. } => true,
    };
    if !kind_ok {
        report.push(id, format!("cpd type is not applicable to node kind {:?}", n.kind));
        return;
    }
    let positive = |o: &Operand, what: &str, report: &mut ValidationReport| {
        if let Operand::Const(v) = o {
            if !(*v > 0.0 && v.is_finite()) {
                report.push(id, format!("{what} must be positive, got {v}"));
            }
        }
    };
    match cpd {
        CpdExpr::Table { parents, rows } => {
            let child_card = n.kind.states().map(|s| s.len()).unwrap_or(0);
            let mut expected_rows = 1usize;
            for p in parents {
                match parent_card(model, p) {
                    Some(c) => expected_rows *= c,
                    None => {
                        if model.node(p).is_some() {
                            report.push(id, format!("table parent `{p}` is not discrete"));
                        }
                    }
                }
            }
            if rows.len() != expected_rows {
                report.push(id, format!("table has {} rows, expected {expected_rows}", rows.len()));
            }
            for (i, row) in rows.iter().enumerate() {
                if row.len() != child_card {
                    report.push(id, format!("row {i} has {} entries, expected {child_card}", row.len()));
                }
                if row.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    report.push(id, format!("row {i} has a negative or non-finite entry"));
                }
                let mass: f64 = row.iter().sum();
                if (mass - 1.0).abs() > ROW_TOLERANCE {
                    report.push(id, format!("row {i} mass {mass} ≠ 1"));
                }
            }
        }
        CpdExpr::Beta { alpha, beta } => {
            positive(alpha, "alpha", report);
            positive(beta, "beta", report);
        }
        CpdExpr::Binomial { n: trials, p } => {
            if let Operand::Const(v) = trials {
                if *v < 0.0 || v.fract() != 0.0 {
                    report.push(id, format!("binomial n must be a non-negative integer, got {v}"));
                }
                if let NodeKind::Count { max } = n.kind {
                    if *v > max as f64 {
                        report.push(id, format!("binomial n = {v} exceeds count support {max}"));
                    }
                }
            }
            if let Operand::Const(v) = p {
                if !(0.0..=1.0).contains(v) {
                    report.push(id, format!("binomial p must lie in [0, 1], got {v}"));
                }
            }
        }
        CpdExpr::Uniform { a, b } => {
            if let (Operand::Const(a), Operand::Const(b)) = (a, b) {
                let ok = match n.kind {
                    NodeKind::Count { .. } => a <= b,
                    _ => a < b,
                };
                if !ok {
                    report.push(id, format!("uniform bounds [{a}, {b}] are empty"));
                }
            }
        }
        CpdExpr::TNormal { mean, variance, lo, hi } => {
            if !(*variance > 0.0 && variance.is_finite()) {
                report.push(id, format!("tnormal variance must be positive, got {variance}"));
            }
            if !(lo < hi) {
                report.push(id, format!("tnormal truncation [{lo}, {hi}] is empty"));
            }
            if mean.has_static_zero_division() {
                report.push(id, "division by zero in tnormal mean");
            }
        }
        CpdExpr::Deterministic { expr } => {
            if expr.has_static_zero_division() {
                report.push(id, "division by zero in deterministic expression");
            }
        }
        CpdExpr::Partitioned { parent, cases } => match parent_card(model, parent) {
            Some(card) => {
                if cases.len() != card {
                    report.push(id, format!("partition on `{parent}` has {} cases, parent has {card} states", cases.len()));
                }
                for c in cases {
                    check_cpd(model, n, c, report);
                }
            }
            None => {
                if model.node(parent).is_some() {
                    report.push(id, format!("partition parent `{parent}` is not discrete"));
                }
            }
        },
        CpdExpr::Mixture { components } => {
            if components.is_empty() {
                report.push(id, "mixture has no components");
            }
            let total: f64 = components.iter().map(|c| c.weight).sum();
            if components.iter().any(|c| c.weight < 0.0) || (total - 1.0).abs() > ROW_TOLERANCE {
                report.push(id, format!("mixture weights must be non-negative and sum to 1, got {total}"));
            }
            for c in components {
                check_cpd(model, n, &c.cpd, report);
            }
        }
    }
}
