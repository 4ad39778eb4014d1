//! Dense factors over discrete variables and the fused sum-product kernel
//! used by variable elimination.

/// Arithmetic space of factor values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Linear,
    Log,
}

impl Space {
    fn one(self) -> f64 {
        match self {
            Space::Linear => 1.0,
            Space::Log => 0.0,
        }
    }
    fn zero(self) -> f64 {
        match self {
            Space::Linear => 0.0,
            Space::Log => f64::NEG_INFINITY,
        }
    }
}

/// Row-major table over `vars`, last variable varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub vars: Vec<usize>,
    pub card: Vec<usize>,
    pub values: Vec<f64>,
}

impl Factor {
    pub fn new(vars: Vec<usize>, card: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(card.iter().product::<usize>(), values.len());
        Factor { vars, card, values }
    }

    pub fn scalar(v: f64) -> Self {
        Factor { vars: vec![], card: vec![], values: vec![v] }
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.vars.len()];
        for i in (0..self.vars.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.card[i + 1];
        }
        s
    }

    pub fn position(&self, var: usize) -> Option<usize> {
        self.vars.iter().position(|v| *v == var)
    }

    /// Slice at `var = index`, dropping `var` from the scope.
    pub fn reduce(&self, var: usize, index: usize) -> Factor {
        let Some(pos) = self.position(var) else {
            return self.clone();
        };
        let strides = self.strides();
        let outer: usize = self.card[..pos].iter().product();
        let inner = strides[pos];
        let block = self.card[pos] * inner;
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let start = o * block + index * inner;
            values.extend_from_slice(&self.values[start..start + inner]);
        }
        let mut vars = self.vars.clone();
        let mut card = self.card.clone();
        vars.remove(pos);
        card.remove(pos);
        Factor { vars, card, values }
    }

    /// Zeroes every entry whose `var` state is not allowed.
    pub fn mask(&mut self, var: usize, allowed: &[bool], space: Space) {
        let Some(pos) = self.position(var) else {
            return;
        };
        let inner = self.strides()[pos];
        let c = self.card[pos];
        for (i, v) in self.values.iter_mut().enumerate() {
            if !allowed[(i / inner) % c] {
                *v = space.zero();
            }
        }
    }

    pub fn to_log(&mut self) {
        self.values.iter_mut().for_each(|v| *v = v.ln());
    }

    /// Smallest strictly positive entry.
    pub fn min_positive(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .filter(|v| *v > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Multiplies `factors` and, when `eliminate` is given, sums that variable
/// out without materializing the full product.
pub fn sum_product(factors: &[&Factor], eliminate: Option<usize>, space: Space) -> Factor {
    let mut vars: Vec<usize> = Vec::new();
    let mut card: Vec<usize> = Vec::new();
    for f in factors {
        for (v, c) in f.vars.iter().zip(&f.card) {
            if Some(*v) != eliminate && !vars.contains(v) {
                vars.push(*v);
                card.push(*c);
            }
        }
    }
    let elim_card = eliminate
        .and_then(|e| {
            factors
                .iter()
                .find_map(|f| f.position(e).map(|p| f.card[p]))
        })
        .unwrap_or(1);
    let mut all_vars = vars.clone();
    let mut all_card = card.clone();
    if let Some(e) = eliminate {
        if elim_card > 1 || factors.iter().any(|f| f.position(e).is_some()) {
            all_vars.push(e);
            all_card.push(elim_card);
        }
    }
    let m = all_vars.len();
    // per-factor stride for each union variable
    let strides: Vec<Vec<usize>> = factors
        .iter()
        .map(|f| {
            let fs = f.strides();
            all_vars
                .iter()
                .map(|v| f.position(*v).map(|p| fs[p]).unwrap_or(0))
                .collect()
        })
        .collect();
    let out_len: usize = card.iter().product();
    let mut out = vec![space.zero(); out_len];
    let mut assign = vec![0usize; m];
    let mut offsets = vec![0usize; factors.len()];
    let mut block = vec![0.0; elim_card];
    for cell in out.iter_mut() {
        for slot in block.iter_mut() {
            let mut prod = space.one();
            for (f, off) in factors.iter().zip(&offsets) {
                let v = f.values[*off];
                match space {
                    Space::Linear => prod *= v,
                    Space::Log => prod += v,
                }
            }
            *slot = prod;
            // odometer step
            for j in (0..m).rev() {
                assign[j] += 1;
                if assign[j] < all_card[j] {
                    for (off, s) in offsets.iter_mut().zip(&strides) {
                        *off += s[j];
                    }
                    break;
                }
                for (off, s) in offsets.iter_mut().zip(&strides) {
                    *off -= s[j] * (all_card[j] - 1);
                }
                assign[j] = 0;
            }
        }
        *cell = match space {
            Space::Linear => block.iter().sum(),
            Space::Log => log_sum_exp(&block),
        };
    }
    Factor { vars, card, values: out }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
