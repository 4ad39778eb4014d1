//! RAPEX risk assessment: injury-scenario probability, the EU risk
//! matrix and a sensitivity analysis over step probabilities and severity.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RapexError {
    #[error("injury scenario has no steps")]
    EmptyScenario,
    #[error("step {index} probability {value} is not in (0, 1]")]
    BadProbability { index: usize, value: f64 },
    #[error("cannot parse step probability `{0}`")]
    Unparseable(String),
    #[error("severity {0} is not in 1..=4")]
    OutOfRange(i64),
    #[error("probability {0} is not in (0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("sensitivity factor must be positive, got {0}")]
    BadFactor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskClass {
    Low,
    Medium,
    High,
    Serious,
}

impl fmt::Display for RiskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RiskClass::Low => "Low",
            RiskClass::Medium => "Medium",
            RiskClass::High => "High",
            RiskClass::Serious => "Serious",
        };
        f.write_str(s)
    }
}

/// Lower bounds of the probability bands, highest first. A probability on
/// a bound belongs to the band above it.
pub const BAND_LOWER_BOUNDS: [f64; 8] = [0.5, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 0.0];
pub const BAND_LABELS: [&str; 8] = [
    ">= 50%",
    ">= 1/10",
    ">= 1/100",
    ">= 1/1000",
    ">= 1/10 000",
    ">= 1/100 000",
    ">= 1/1 000 000",
    "< 1/1 000 000",
];

use RiskClass::{High as H, Low as L, Medium as M, Serious as S};

/// Risk class by probability band (rows, as in [`BAND_LOWER_BOUNDS`]) and
/// injury severity 1 to 4 (columns), per Commission Implementing Decision
/// (EU) 2019/417.
pub const RISK_MATRIX: [[RiskClass; 4]; 8] = [
    [H, S, S, S],
    [M, S, S, S],
    [M, S, S, S],
    [L, H, S, S],
    [L, M, H, S],
    [L, L, M, H],
    [L, L, L, M],
    [L, L, L, L],
];

/// A step probability: a number or a fraction string such as `"1/100"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepProbability {
    Number(f64),
    Text(String),
}

impl From<f64> for StepProbability {
    fn from(v: f64) -> Self {
        StepProbability::Number(v)
    }
}

impl From<&str> for StepProbability {
    fn from(s: &str) -> Self {
        StepProbability::Text(s.to_string())
    }
}

/// Exact rational where one is recoverable, plus the float value.
#[derive(Debug, Clone, Copy)]
struct Prob {
    value: f64,
    exact: Option<(u128, u128)>,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn reduce(n: u128, d: u128) -> (u128, u128) {
    let g = gcd(n, d).max(1);
    (n / g, d / g)
}

/// Rational form of a plain decimal literal like `0.07` or `3e-4`.
fn decimal_rational(s: &str) -> Option<(u128, u128)> {
    let s = s.trim();
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let digits = format!("{int}{frac}");
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut n: u128 = digits.parse().ok()?;
    let scale = exp - frac.len() as i32;
    let mut d: u128 = 1;
    if scale >= 0 {
        n = n.checked_mul(10u128.checked_pow(scale as u32)?)?;
    } else {
        d = 10u128.checked_pow((-scale) as u32)?;
    }
    Some(reduce(n, d))
}

impl StepProbability {
    fn parse(&self) -> Result<Prob, RapexError> {
        match self {
            StepProbability::Number(v) => Ok(Prob { value: *v, exact: decimal_rational(&v.to_string()) }),
            StepProbability::Text(s) => {
                let bad = || RapexError::Unparseable(s.clone());
                if let Some((a, b)) = s.split_once('/') {
                    let parse = |t: &str| decimal_rational(&t.trim().replace(' ', ""));
                    let (an, ad) = parse(a).ok_or_else(bad)?;
                    let (bn, bd) = parse(b).ok_or_else(bad)?;
                    let value = (an as f64 / ad as f64) / (bn as f64 / bd as f64);
                    let exact = an
                        .checked_mul(bd)
                        .zip(ad.checked_mul(bn))
                        .filter(|(_, d)| *d != 0)
                        .map(|(n, d)| reduce(n, d));
                    let value = exact.map(|(n, d)| n as f64 / d as f64).unwrap_or(value);
                    Ok(Prob { value, exact })
                } else {
                    let t = s.trim();
                    let (t, pct) = match t.strip_suffix('%') {
                        Some(x) => (x.trim(), true),
                        None => (t, false),
                    };
                    let v: f64 = t.parse().map_err(|_| bad())?;
                    let exact = decimal_rational(t).and_then(|(n, d)| {
                        if pct {
                            d.checked_mul(100).map(|d| reduce(n, d))
                        } else {
                            Some((n, d))
                        }
                    });
                    Ok(Prob { value: if pct { v / 100.0 } else { v }, exact })
                }
            }
        }
    }

    pub fn value(&self) -> Result<f64, RapexError> {
        self.parse().map(|p| p.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    #[serde(default)]
    pub label: String,
    pub probability: StepProbability,
}

impl Step {
    pub fn new(label: &str, probability: impl Into<StepProbability>) -> Self {
        Step { label: label.to_string(), probability: probability.into() }
    }
}

/// How a product hazard leads to an injury of a given severity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjuryScenario {
    #[serde(default)]
    pub description: String,
    pub steps: Vec<Step>,
    pub severity: i64,
}

/// Product of the step probabilities, which are treated as independent.
/// Exact when every step is a decimal or a fraction of decimals.
pub fn scenario_probability(steps: &[StepProbability]) -> Result<f64, RapexError> {
    if steps.is_empty() {
        return Err(RapexError::EmptyScenario);
    }
    let probs: Vec<Prob> = steps.iter().map(StepProbability::parse).collect::<Result<_, _>>()?;
    for (index, p) in probs.iter().enumerate() {
        if !(p.value > 0.0 && p.value <= 1.0) {
            return Err(RapexError::BadProbability { index, value: p.value });
        }
    }
    Ok(product(&probs))
}

fn product(probs: &[Prob]) -> f64 {
    let mut acc: Option<(u128, u128)> = Some((1, 1));
    for p in probs {
        acc = match (acc, p.exact) {
            (Some((n, d)), Some((pn, pd))) => {
                let (n1, pd) = reduce(n, pd);
                let (pn, d1) = reduce(pn, d);
                n1.checked_mul(pn).zip(d1.checked_mul(pd))
            }
            _ => None,
        };
    }
    match acc {
        Some((n, d)) if n < (1u128 << 53) && d < (1u128 << 53) => n as f64 / d as f64,
        _ => probs.iter().map(|p| p.value).product(),
    }
}

/// Index of the band containing `p` in [`BAND_LOWER_BOUNDS`].
pub fn probability_band(p: f64) -> usize {
    BAND_LOWER_BOUNDS
        .iter()
        .position(|lo| p >= *lo)
        .unwrap_or(BAND_LOWER_BOUNDS.len() - 1)
}

pub fn risk_from_matrix(probability: f64, severity: i64) -> Result<RiskClass, RapexError> {
    if !(1..=4).contains(&severity) {
        return Err(RapexError::OutOfRange(severity));
    }
    if !(probability > 0.0 && probability <= 1.0) {
        return Err(RapexError::ProbabilityOutOfRange(probability));
    }
    Ok(RISK_MATRIX[probability_band(probability)][(severity - 1) as usize])
}

/// One re-evaluation of the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    /// Per-step multiplier applied before clamping to (0, 1].
    pub step_multipliers: Vec<f64>,
    pub severity: i64,
    pub probability: f64,
    pub risk_class: RiskClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub factor: f64,
    pub severity_shift: i64,
    pub baseline: RiskClass,
    pub variants: Vec<Variant>,
    pub classes: BTreeSet<RiskClass>,
    /// Every variant has the baseline class.
    pub stable: bool,
}

/// Re-evaluates the scenario with every step multiplied or divided by
/// `factor` (clamped to (0, 1]) and the severity shifted by
/// `-shift, 0, +shift` (clamped to 1..=4): `2^steps * 3` variants, in a
/// fixed order.
pub fn sensitivity_analysis(
    scenario: &InjuryScenario,
    factor: f64,
    severity_shift: i64,
) -> Result<StabilityReport, RapexError> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(RapexError::BadFactor(factor));
    }
    let base_steps: Vec<StepProbability> = scenario.steps.iter().map(|s| s.probability.clone()).collect();
    let baseline = risk_from_matrix(scenario_probability(&base_steps)?, scenario.severity)?;
    let probs: Vec<Prob> = base_steps.iter().map(StepProbability::parse).collect::<Result<_, _>>()?;
    let n = probs.len();
    let shift = severity_shift.abs();
    let shifts: Vec<i64> = if shift == 0 { vec![0] } else { vec![-shift, 0, shift] };
    let mut variants = Vec::new();
    for mask in 0..(1u64 << n) {
        let multipliers: Vec<f64> = (0..n)
            .map(|i| if mask & (1 << (n - 1 - i)) != 0 { 1.0 / factor } else { factor })
            .collect();
        let scaled: Vec<Prob> = probs
            .iter()
            .zip(&multipliers)
            .map(|(p, m)| {
                let exact = if *m == 1.0 { p.exact } else { None };
                Prob { value: (p.value * m).min(1.0), exact }
            })
            .collect();
        let probability = product(&scaled);
        for s in &shifts {
            let severity = (scenario.severity + s).clamp(1, 4);
            variants.push(Variant {
                step_multipliers: multipliers.clone(),
                severity,
                probability,
                risk_class: risk_from_matrix(probability, severity)?,
            });
        }
    }
    let classes: BTreeSet<RiskClass> = variants.iter().map(|v| v.risk_class).collect();
    let stable = classes.iter().all(|c| *c == baseline);
    Ok(StabilityReport { factor, severity_shift: shift, baseline, variants, classes, stable })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RapexAssessment {
    pub total_probability: f64,
    pub probability_band: String,
    pub severity: i64,
    pub risk_class: RiskClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<StabilityReport>,
}

/// Sensitivity settings for [`assess`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub factor: f64,
    pub severity_shift: i64,
}

pub fn assess(scenario: &InjuryScenario, sensitivity: Option<Sensitivity>) -> Result<RapexAssessment, RapexError> {
    let steps: Vec<StepProbability> = scenario.steps.iter().map(|s| s.probability.clone()).collect();
    let total = scenario_probability(&steps)?;
    let risk_class = risk_from_matrix(total, scenario.severity)?;
    let sensitivity = sensitivity
        .map(|s| sensitivity_analysis(scenario, s.factor, s.severity_shift))
        .transpose()?;
    Ok(RapexAssessment {
        total_probability: total,
        probability_band: BAND_LABELS[probability_band(total)].to_string(),
        severity: scenario.severity,
        risk_class,
        sensitivity,
    })
}

/// The axe example: breaks, then a bystander is hit, then is injured.
pub fn axe_scenario() -> InjuryScenario {
    InjuryScenario {
        description: "axe head breaks off and injures a bystander".into(),
        steps: vec![
            Step::new("axe breaks", "1/100"),
            Step::new("head flies towards a person", "1/10"),
            Step::new("person is injured", "1/10"),
        ],
        severity: 3,
    }
}
