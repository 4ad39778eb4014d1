//! Likelihood weighting over the compiled CPTs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CompiledModel, InferError, Likelihood, ResolvedEvidence};

/// Effective sample sizes below this are reported as degenerate.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 10.0;
const CHUNK: usize = 4096;

pub(crate) struct Estimate {
    pub probabilities: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub mean: f64,
    pub mean_std_error: f64,
    pub effective_samples: f64,
}

/// Per-query sums of w and w^2 by state.
#[derive(Clone)]
struct Acc {
    w: f64,
    w2: f64,
    s1: Vec<Vec<f64>>,
    s2: Vec<Vec<f64>>,
}

impl Acc {
    fn new(cards: &[usize]) -> Self {
        Acc {
            w: 0.0,
            w2: 0.0,
            s1: cards.iter().map(|c| vec![0.0; *c]).collect(),
            s2: cards.iter().map(|c| vec![0.0; *c]).collect(),
        }
    }

    fn merge(mut self, other: &Acc) -> Self {
        self.w += other.w;
        self.w2 += other.w2;
        for (a, b) in self.s1.iter_mut().zip(&other.s1) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.s2.iter_mut().zip(&other.s2) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self
    }
}

fn draw(column: &[f64], allowed: Option<&[bool]>, total: f64, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen::<f64>() * total;
    let mut cum = 0.0;
    let mut last = 0;
    for (i, p) in column.iter().enumerate() {
        if allowed.is_some_and(|a| !a[i]) || *p <= 0.0 {
            continue;
        }
        cum += p;
        last = i;
        if u < cum {
            return i;
        }
    }
    last
}

pub(crate) fn likelihood_weighting(
    model: &CompiledModel,
    evidence: &ResolvedEvidence,
    queries: &[usize],
    samples: usize,
    seed: u64,
) -> Result<Vec<Estimate>, InferError> {
    if samples == 0 {
        return Err(InferError::NoSamples);
    }
    let mut roots: Vec<usize> = evidence.nodes().collect();
    roots.extend_from_slice(queries);
    let relevant = model.ancestors(&roots);
    let order: Vec<usize> = model
        .topological()
        .iter()
        .copied()
        .filter(|v| relevant.contains(v))
        .collect();
    let cards: Vec<usize> = queries.iter().map(|&q| model.nodes[q].card()).collect();
    let masks: Vec<Option<Vec<bool>>> = (0..model.nodes.len())
        .map(|v| match evidence.get(v) {
            Some(Likelihood::Mask(m)) => Some(m.clone()),
            _ => None,
        })
        .collect();
    let chunks = samples.div_ceil(CHUNK);
    let accs: Vec<Acc> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            let mut acc = Acc::new(&cards);
            let mut state = vec![0usize; model.nodes.len()];
            for _ in 0..n {
                let mut w = 1.0;
                for &v in &order {
                    let node = &model.nodes[v];
                    let mut off = 0;
                    for &p in &node.parents {
                        off = off * model.nodes[p].card() + state[p];
                    }
                    let card = node.card();
                    let column = &node.cpt[off * card..(off + 1) * card];
                    match evidence.get(v) {
                        Some(Likelihood::Hard(i)) => {
                            w *= column[*i];
                            state[v] = *i;
                        }
                        Some(Likelihood::Mask(_)) => {
                            let m = masks[v].as_deref().expect("mask");
                            let total: f64 = column.iter().zip(m).filter(|(_, a)| **a).map(|(p, _)| p).sum();
                            w *= total;
                            state[v] = if total > 0.0 { draw(column, Some(m), total, &mut rng) } else { 0 };
                        }
                        None => state[v] = draw(column, None, 1.0, &mut rng),
                    }
                    if w == 0.0 {
                        break;
                    }
                }
                acc.w += w;
                acc.w2 += w * w;
                if w > 0.0 {
                    for (k, &q) in queries.iter().enumerate() {
                        acc.s1[k][state[q]] += w;
                        acc.s2[k][state[q]] += w * w;
                    }
                }
            }
            acc
        })
        .collect();
    let acc = accs.iter().skip(1).fold(accs[0].clone(), |a, b| a.merge(b));
    if acc.w <= 0.0 {
        return Err(InferError::DegenerateWeights { ess: 0.0 });
    }
    let ess = acc.w * acc.w / acc.w2;
    if ess < MIN_EFFECTIVE_SAMPLES {
        return Err(InferError::DegenerateWeights { ess });
    }
    Ok(queries
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let probabilities: Vec<f64> = acc.s1[k].iter().map(|s| s / acc.w).collect();
            // self-normalized estimator variance: sum w_i^2 (f(x_i) - mu)^2 / W^2
            let std_errors = probabilities
                .iter()
                .zip(&acc.s2[k])
                .map(|(p, s2)| {
                    let v = s2 * (1.0 - p) * (1.0 - p) + (acc.w2 - s2) * p * p;
                    v.max(0.0).sqrt() / acc.w
                })
                .collect();
            let domain = &model.nodes[q].domain;
            let value = |i: usize| domain.bins().map_or(i as f64, |b| b.representative(i));
            let mean: f64 = probabilities.iter().enumerate().map(|(i, p)| p * value(i)).sum();
            let mv: f64 = acc.s2[k]
                .iter()
                .enumerate()
                .map(|(i, s2)| s2 * (value(i) - mean).powi(2))
                .sum();
            Estimate {
                probabilities,
                std_errors,
                mean,
                mean_std_error: mv.max(0.0).sqrt() / acc.w,
                effective_samples: ess,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draw_respects_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let col = [0.5, 0.3, 0.2];
        let mask = [false, true, true];
        for _ in 0..200 {
            assert_ne!(draw(&col, Some(&mask), 0.5, &mut rng), 0);
        }
    }
}
