use super::*;
use crate::discretize::BinningConfig;
use crate::graph::{CpdExpr, NodeSpec};
use proptest::prelude::*;

fn labelled(n: usize) -> NodeKind {
    NodeKind::Labelled { states: (0..n).map(|i| format!("s{i}")).collect() }
}

fn table_node(id: &str, card: usize, parents: &[&str], rows: Vec<Vec<f64>>) -> NodeSpec {
    NodeSpec::new(
        id,
        labelled(card),
        CpdExpr::Table { parents: parents.iter().map(|p| p.to_string()).collect(), rows },
    )
}

fn sprinkler() -> ModelSpec {
    let mut m = ModelSpec::new();
    m.push_node_with_parents(table_node("rain", 2, &[], vec![vec![0.8, 0.2]])).unwrap();
    m.push_node_with_parents(table_node("sprinkler", 2, &["rain"], vec![vec![0.6, 0.4], vec![0.99, 0.01]]))
        .unwrap();
    m.push_node_with_parents(table_node(
        "wet",
        2,
        &["sprinkler", "rain"],
        vec![vec![1.0, 0.0], vec![0.2, 0.8], vec![0.1, 0.9], vec![0.01, 0.99]],
    ))
    .unwrap();
    m
}

/// Posterior by summing the full joint, independent of elimination.
fn enumerate(model: &CompiledModel, hard: &[(usize, usize)], query: usize) -> Vec<f64> {
    let n = model.nodes.len();
    let cards: Vec<usize> = model.nodes.iter().map(|x| x.card()).collect();
    let total: usize = cards.iter().product();
    let mut out = vec![0.0; cards[query]];
    let mut a = vec![0usize; n];
    for _ in 0..total {
        if hard.iter().all(|(v, i)| a[*v] == *i) {
            let mut p = 1.0;
            for (v, node) in model.nodes.iter().enumerate() {
                let mut off = 0;
                for &u in &node.parents {
                    off = off * cards[u] + a[u];
                }
                p *= node.cpt[off * cards[v] + a[v]];
            }
            out[a[query]] += p;
        }
        for j in (0..n).rev() {
            a[j] += 1;
            if a[j] < cards[j] {
                break;
            }
            a[j] = 0;
        }
    }
    let z: f64 = out.iter().sum();
    out.iter().map(|x| x / z).collect()
}

#[test]
fn sprinkler_matches_hand_computation() {
    let m = compile(&sprinkler(), &BinningConfig::default()).unwrap();
    let ev = Evidence::new().with("wet", "s1");
    let post = m.posterior(&ev, &["rain"]).unwrap();
    // P(wet) = sum over (r, s) of P(r) P(s|r) P(wet|s,r)
    let joint_r1 = 0.2 * (0.99 * 0.8 + 0.01 * 0.99);
    let joint_r0 = 0.8 * (0.6 * 0.0 + 0.4 * 0.9);
    let expect = joint_r1 / (joint_r0 + joint_r1);
    assert!((post[0].probabilities[1] - expect).abs() < 1e-12);
    let z = m.evidence_probability(&ev).unwrap();
    assert!((z - (joint_r0 + joint_r1)).abs() < 1e-12);
}

#[test]
fn query_on_observed_node_is_point_mass() {
    let m = compile(&sprinkler(), &BinningConfig::default()).unwrap();
    let post = m.posterior(&Evidence::new().with("wet", "s1"), &["wet"]).unwrap();
    assert_eq!(post[0].probabilities, vec![0.0, 1.0]);
    assert_eq!(post[0].mode_state(), Some("s1"));
}

#[test]
fn impossible_evidence_is_reported() {
    let mut m = ModelSpec::new();
    m.push_node_with_parents(table_node("a", 2, &[], vec![vec![1.0, 0.0]])).unwrap();
    m.push_node_with_parents(table_node("b", 2, &["a"], vec![vec![1.0, 0.0], vec![0.5, 0.5]]))
        .unwrap();
    let c = compile(&m, &BinningConfig::default()).unwrap();
    let err = c.posterior(&Evidence::new().with("b", "s1"), &["a"]).unwrap_err();
    assert!(matches!(err, InferError::ImpossibleEvidence));
}

#[test]
fn tiny_likelihoods_switch_to_log_space() {
    let mut m = ModelSpec::new();
    m.push_node_with_parents(table_node("a", 2, &[], vec![vec![0.5, 0.5]])).unwrap();
    m.push_node_with_parents(table_node(
        "e",
        2,
        &["a"],
        vec![vec![1.0 - 1e-290, 1e-290], vec![1.0 - 3e-290, 3e-290]],
    ))
    .unwrap();
    let c = compile(&m, &BinningConfig::default()).unwrap();
    let post = c.posterior(&Evidence::new().with("e", "s1"), &["a"]).unwrap();
    assert!((post[0].probabilities[1] - 0.75).abs() < 1e-12);
}

fn repeated_observations(k: usize) -> (CompiledModel, Evidence) {
    let mut m = ModelSpec::new();
    m.push_node_with_parents(table_node("a", 2, &[], vec![vec![0.5, 0.5]])).unwrap();
    let mut ev = Evidence::new();
    for i in 0..k {
        let id = format!("e{i}");
        m.push_node_with_parents(table_node(&id, 2, &["a"], vec![vec![1.0 - 1e-8, 1e-8], vec![1.0 - 2e-8, 2e-8]]))
            .unwrap();
        ev.set(&id, "s1");
    }
    (compile(&m, &BinningConfig::default()).unwrap(), ev)
}

#[test]
fn tiny_evidence_probability_still_solves() {
    // P(evidence) ~ 0.5 * 2^35 * 1e-280
    let (c, ev) = repeated_observations(35);
    let post = c.posterior(&ev, &["a"]).unwrap();
    let ratio = 2f64.powi(35);
    assert!((post[0].probabilities[1] - ratio / (1.0 + ratio)).abs() < 1e-9);
}

#[test]
fn vanishing_evidence_probability_is_impossible() {
    // P(evidence) ~ 0.5 * 2^40 * 1e-320, below the threshold
    let (c, ev) = repeated_observations(40);
    assert!(matches!(c.posterior(&ev, &["a"]), Err(InferError::ImpossibleEvidence)));
}

#[test]
fn evidence_errors() {
    let m = compile(&sprinkler(), &BinningConfig::default()).unwrap();
    assert!(matches!(
        m.posterior(&Evidence::new().with("nope", "s1"), &["rain"]),
        Err(InferError::UnknownNode(n)) if n == "nope"
    ));
    assert!(matches!(
        m.posterior(&Evidence::new().with("wet", "damp"), &["rain"]),
        Err(InferError::InvalidEvidence { .. })
    ));
    assert!(matches!(
        m.posterior(&Evidence::new().with("wet", 1.0), &["rain"]),
        Err(InferError::InvalidEvidence { .. })
    ));
    assert!(matches!(m.posterior(&Evidence::new(), &["nope"]), Err(InferError::UnknownNode(_))));
}

fn beta_binomial(n: f64) -> ModelSpec {
    let mut m = ModelSpec::new();
    m.push_node_with_parents(NodeSpec::new(
        "p",
        NodeKind::Continuous { lo: 0.0, hi: 1.0 },
        CpdExpr::Beta { alpha: 1.0.into(), beta: 1.0.into() },
    ))
    .unwrap();
    m.push_node_with_parents(NodeSpec::new(
        "k",
        NodeKind::Count { max: n as u64 },
        CpdExpr::Binomial { n: n.into(), p: crate::graph::Operand::parent("p") },
    ))
    .unwrap();
    m
}

#[test]
fn beta_binomial_posterior_mean_matches_conjugate_update() {
    let c = compile(&beta_binomial(2000.0), &BinningConfig::default()).unwrap();
    let post = c.posterior(&Evidence::new().with("k", 1.0), &["p"]).unwrap();
    // Beta(1 + 1, 1 + 1999)
    let exact = 2.0 / 2002.0;
    let mean = post[0].moments.unwrap().mean;
    assert!((mean / exact - 1.0).abs() < 0.02, "mean {mean}");
}

#[test]
fn interval_evidence_masks_bins() {
    let c = compile(&beta_binomial(20.0), &BinningConfig::default()).unwrap();
    let post = c.posterior(&Evidence::new().with("k", EvidenceValue::Interval([3.0, 5.0])), &["k"]).unwrap();
    let p = &post[0].probabilities;
    assert!(p.iter().enumerate().all(|(i, v)| (3..=5).contains(&i) || *v == 0.0));
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // Beta(1, 1) makes k uniform on 0..=20
    assert!((p[3] - 1.0 / 3.0).abs() < 1e-3);
}

#[test]
fn likelihood_weighting_agrees_with_exact() {
    let m = compile(&sprinkler(), &BinningConfig::default()).unwrap();
    let ev = Evidence::new().with("wet", "s1");
    let exact = m.posterior(&ev, &["rain", "sprinkler"]).unwrap();
    let lw = m.sample_posterior(&ev, &["rain", "sprinkler"], 50_000, 7).unwrap();
    for (e, s) in exact.iter().zip(&lw) {
        let se = s.std_errors.as_ref().unwrap();
        for ((pe, ps), se) in e.probabilities.iter().zip(&s.probabilities).zip(se) {
            assert!((pe - ps).abs() <= 4.0 * se + 1e-12);
        }
    }
    // same seed, same answer
    let again = m.sample_posterior(&ev, &["rain", "sprinkler"], 50_000, 7).unwrap();
    assert_eq!(lw, again);
}

#[test]
fn rare_root_state_gives_degenerate_weights() {
    let mut m = ModelSpec::new();
    m.push_node_with_parents(table_node("root", 2, &[], vec![vec![1.0 - 5e-5, 5e-5]])).unwrap();
    m.push_node_with_parents(table_node("obs", 2, &["root"], vec![vec![1.0, 0.0], vec![1.0 - 2e-8, 2e-8]]))
        .unwrap();
    let c = compile(&m, &BinningConfig::default()).unwrap();
    let ev = Evidence::new().with("obs", "s1");
    let err = c.sample_posterior(&ev, &["root"], 10_000, 1).unwrap_err();
    assert!(matches!(err, InferError::DegenerateWeights { .. }));
    // exact inference has no trouble with it
    let post = c.posterior(&ev, &["root"]).unwrap();
    assert!((post[0].probabilities[1] - 1.0).abs() < 1e-12);
}

#[derive(Debug, Clone)]
struct RandomNet {
    cards: Vec<usize>,
    parents: Vec<Vec<usize>>,
    rows: Vec<Vec<Vec<f64>>>,
}

fn random_net() -> impl Strategy<Value = RandomNet> {
    (3usize..7)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(2usize..4, n),
                proptest::collection::vec(proptest::bool::weighted(0.45), n * n),
                proptest::collection::vec(0.05f64..1.0, 7 * 27 * 3),
            )
        })
        .prop_map(|(cards, edges, weights)| {
            let n = cards.len();
            let mut w = weights.into_iter().cycle();
            let mut parents = vec![Vec::new(); n];
            let mut rows = Vec::new();
            for j in 0..n {
                for i in 0..j {
                    if edges[i * n + j] && parents[j].len() < 3 {
                        parents[j].push(i);
                    }
                }
                let n_rows: usize = parents[j].iter().map(|p| cards[*p]).product();
                let r: Vec<Vec<f64>> = (0..n_rows)
                    .map(|_| {
                        let raw: Vec<f64> = (0..cards[j]).map(|_| w.next().unwrap()).collect();
                        let s: f64 = raw.iter().sum();
                        raw.iter().map(|x| x / s).collect()
                    })
                    .collect();
                rows.push(r);
            }
            RandomNet { cards, parents, rows }
        })
}

fn build(net: &RandomNet) -> ModelSpec {
    let mut m = ModelSpec::new();
    for j in 0..net.cards.len() {
        let ps: Vec<String> = net.parents[j].iter().map(|p| format!("n{p}")).collect();
        let refs: Vec<&str> = ps.iter().map(String::as_str).collect();
        m.push_node_with_parents(table_node(&format!("n{j}"), net.cards[j], &refs, net.rows[j].clone()))
            .unwrap();
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elimination_matches_enumeration_under_any_order(net in random_net(), seed in 0u64..1000) {
        let spec = build(&net);
        let c = compile(&spec, &BinningConfig::default()).unwrap();
        let n = net.cards.len();
        let query = (seed as usize) % n;
        let ev_node = (seed as usize / 7) % n;
        let mut hard = vec![];
        let mut ev = Evidence::new();
        if ev_node != query {
            hard.push((ev_node, 0));
            ev.set(&format!("n{ev_node}"), "s0");
        }
        let oracle = enumerate(&c, &hard, query);
        let qid = format!("n{query}");
        let mut explicit: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        explicit.rotate_left(seed as usize % n);
        for ordering in [Ordering::MinFill, Ordering::ReverseTopological, Ordering::Explicit(explicit)] {
            let p = c.posterior_with_order(&ev, &qid, &ordering).unwrap();
            for (a, b) in p.probabilities.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-12, "{ordering:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn posteriors_are_normalized(net in random_net()) {
        let c = compile(&build(&net), &BinningConfig::default()).unwrap();
        let ids: Vec<String> = (0..net.cards.len()).map(|i| format!("n{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        for p in c.posterior(&Evidence::new().with("n0", "s1"), &refs).unwrap() {
            prop_assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.probabilities.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn d_separated_nodes_ignore_evidence_changes(net in random_net(), seed in 0u64..1000) {
        let spec = build(&net);
        let c = compile(&spec, &BinningConfig::default()).unwrap();
        let n = net.cards.len();
        let source = format!("n{}", seed as usize % n);
        let other = format!("n{}", (seed as usize / 5) % n);
        let mut base = Evidence::new();
        if other != source {
            base.set(&other, "s0");
        }
        let observed: std::collections::BTreeSet<String> = base.iter().map(|(k, _)| k.clone()).collect();
        let reach = spec.d_connected(&[source.as_str()], &observed);
        let ids: Vec<String> = (0..n).map(|i| format!("n{i}")).filter(|id| !reach.contains(id)).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let before = c.posterior(&base, &refs).unwrap();
        let after = c.posterior(&base.clone().with(&source, "s1"), &refs).unwrap();
        for (a, b) in before.iter().zip(&after) {
            for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
                prop_assert!((x - y).abs() < 1e-12, "{} moved", a.node);
            }
        }
    }
}
