//! Premetrics on pairs of jointly distributed random variables that satisfy
//! the triangle inequality (p.q.-metrics), and combinators that preserve it.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{FactorPoint, JointPmf, Variable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("variable {0:?} has no numeric embedding")]
    NonNumeric(String),
    #[error("unknown outcome {outcome:?} for variable {variable:?}")]
    UnknownOutcome { variable: String, outcome: String },
    #[error("malformed metric: {0}")]
    InvalidSpec(String),
}

/// Joint distribution of two variables `(A, B)`, `A`-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDistribution {
    pub name_a: String,
    pub name_b: String,
    pub outcomes_a: Vec<String>,
    pub outcomes_b: Vec<String>,
    pub numeric_a: Option<Vec<f64>>,
    pub numeric_b: Option<Vec<f64>>,
    /// The factor points the two variables are attached to, when known.
    pub point_a: Option<FactorPoint>,
    pub point_b: Option<FactorPoint>,
    pub probs: Vec<f64>,
}

impl PairDistribution {
    pub fn new(a: &Variable, b: &Variable, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), a.outcomes.len() * b.outcomes.len(), "pair table shape");
        PairDistribution {
            name_a: a.name.clone(),
            name_b: b.name.clone(),
            outcomes_a: a.outcomes.clone(),
            outcomes_b: b.outcomes.clone(),
            numeric_a: a.numeric_values.clone(),
            numeric_b: b.numeric_values.clone(),
            point_a: None,
            point_b: None,
            probs,
        }
    }

    /// The `(A, B)` 2-marginal of `pmf`, with `a` and `b` indexing into `variables`.
    pub fn from_joint(pmf: &JointPmf, variables: &[Variable], a: usize, b: usize) -> Self {
        let m = pmf.marginal_positions(&[a, b]);
        PairDistribution::new(&variables[a], &variables[b], m.probs().to_vec())
    }

    pub fn at_points(mut self, a: FactorPoint, b: FactorPoint) -> Self {
        self.point_a = Some(a);
        self.point_b = Some(b);
        self
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.outcomes_b.len() + j]
    }

    /// The pair `(B, A)`.
    pub fn transposed(&self) -> Self {
        let (na, nb) = (self.outcomes_a.len(), self.outcomes_b.len());
        let mut probs = vec![0.0; na * nb];
        for i in 0..na {
            for j in 0..nb {
                probs[j * na + i] = self.get(i, j);
            }
        }
        PairDistribution {
            name_a: self.name_b.clone(),
            name_b: self.name_a.clone(),
            outcomes_a: self.outcomes_b.clone(),
            outcomes_b: self.outcomes_a.clone(),
            numeric_a: self.numeric_b.clone(),
            numeric_b: self.numeric_a.clone(),
            point_a: self.point_b.clone(),
            point_b: self.point_a.clone(),
            probs,
        }
    }

    pub fn marginal_a(&self) -> Vec<f64> {
        let nb = self.outcomes_b.len();
        self.probs.chunks(nb).map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_b(&self) -> Vec<f64> {
        let nb = self.outcomes_b.len();
        let mut out = vec![0.0; nb];
        for (k, p) in self.probs.iter().enumerate() {
            out[k % nb] += p;
        }
        out
    }

    pub fn numeric(&self) -> Result<(&[f64], &[f64]), MetricError> {
        let a = self
            .numeric_a
            .as_deref()
            .ok_or_else(|| MetricError::NonNumeric(self.name_a.clone()))?;
        let b = self
            .numeric_b
            .as_deref()
            .ok_or_else(|| MetricError::NonNumeric(self.name_b.clone()))?;
        Ok((a, b))
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let nb = self.outcomes_b.len();
        self.probs.iter().enumerate().map(move |(k, &p)| (k / nb, k % nb, p))
    }
}

/// A Minkowski exponent; serialized as a number or the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponent(pub f64);

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(x) => Ok(Exponent(x)),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => Ok(Exponent(f64::INFINITY)),
            Raw::Text(t) => t
                .parse()
                .map(Exponent)
                .map_err(|_| serde::de::Error::custom(format!("bad exponent {t:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedValue {
    pub value: f64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub metric: MetricSpec,
}

/// A metric expression. JSON form: `{"kind": "minkowski", "p": 1}`,
/// `{"kind": "power", "q": 0.5, "inner": {...}}`, and so on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    Minkowski {
        p: Exponent,
    },
    /// `Pr[A not in E+_A, B in E+_B]`. `positive` is the shared E+;
    /// `per_point` overrides it for specific factor points (`level^factor`).
    Classification {
        positive: Vec<String>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        per_point: BTreeMap<String, Vec<String>>,
    },
    /// `sum_v Pr[V=v] Pr[A <= v < B]` for a finite `V` independent of the pair.
    Separation {
        v: Vec<WeightedValue>,
    },
    CondEntropy,
    NormCondEntropy,
    Power {
        q: f64,
        inner: Box<MetricSpec>,
    },
    Bounded {
        inner: Box<MetricSpec>,
    },
    Sum {
        terms: Vec<MetricSpec>,
    },
    Max {
        terms: Vec<MetricSpec>,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
    /// `D'(A, B) = D(B, A)`.
    Reverse {
        inner: Box<MetricSpec>,
    },
}

impl MetricSpec {
    pub fn minkowski(p: f64) -> Self {
        MetricSpec::Minkowski { p: Exponent(p) }
    }

    pub fn classification(positive: &[&str]) -> Self {
        MetricSpec::Classification {
            positive: positive.iter().map(|s| s.to_string()).collect(),
            per_point: BTreeMap::new(),
        }
    }

    pub fn power(q: f64, inner: MetricSpec) -> Self {
        MetricSpec::Power {
            q,
            inner: Box::new(inner),
        }
    }

    pub fn bounded(inner: MetricSpec) -> Self {
        MetricSpec::Bounded { inner: Box::new(inner) }
    }

    pub fn reverse(inner: MetricSpec) -> Self {
        MetricSpec::Reverse { inner: Box::new(inner) }
    }

    /// True when the metric reads numeric embeddings.
    pub fn needs_numeric(&self) -> bool {
        match self {
            MetricSpec::Minkowski { .. } | MetricSpec::Separation { .. } => true,
            MetricSpec::Classification { .. } | MetricSpec::CondEntropy | MetricSpec::NormCondEntropy => false,
            MetricSpec::Power { inner, .. } | MetricSpec::Bounded { inner } | MetricSpec::Reverse { inner } => {
                inner.needs_numeric()
            }
            MetricSpec::Sum { terms } | MetricSpec::Max { terms } => terms.iter().any(Self::needs_numeric),
            MetricSpec::Mixture { components } => components.iter().any(|c| c.metric.needs_numeric()),
        }
    }

    /// Checks parameter ranges throughout the expression.
    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |s: String| Err(MetricError::InvalidSpec(s));
        match self {
            MetricSpec::Minkowski { p } => {
                if p.0.is_nan() || p.0 < 1.0 {
                    return bad(format!("minkowski exponent {} < 1; use the power combinator", p.0));
                }
            }
            MetricSpec::Classification { .. } | MetricSpec::CondEntropy | MetricSpec::NormCondEntropy => {}
            MetricSpec::Separation { v } => {
                if v.is_empty() {
                    return bad("separation needs a nonempty distribution for V".into());
                }
                if v.iter().any(|w| !w.value.is_finite() || !w.p.is_finite() || w.p < 0.0) {
                    return bad("separation V must have finite values and nonnegative masses".into());
                }
                let total: f64 = v.iter().map(|w| w.p).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("separation V masses sum to {total}"));
                }
            }
            MetricSpec::Power { q, inner } => {
                if !(*q > 0.0 && *q <= 1.0) {
                    return bad(format!("power exponent {q} outside (0, 1]"));
                }
                inner.validate()?;
            }
            MetricSpec::Bounded { inner } | MetricSpec::Reverse { inner } => inner.validate()?,
            MetricSpec::Sum { terms } | MetricSpec::Max { terms } => {
                if terms.is_empty() {
                    return bad("sum/max need at least one term".into());
                }
                for t in terms {
                    t.validate()?;
                }
            }
            MetricSpec::Mixture { components } => {
                if components.is_empty() {
                    return bad("mixture needs at least one component".into());
                }
                for c in components {
                    if !c.weight.is_finite() || c.weight < 0.0 {
                        return bad(format!("mixture weight {} must be finite and nonnegative", c.weight));
                    }
                    c.metric.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, pair: &PairDistribution) -> Result<f64, MetricError> {
        apply_combinator(self, pair)
    }
}

pub fn minkowski(pair: &PairDistribution, p: f64) -> Result<f64, MetricError> {
    if p.is_nan() || p < 1.0 {
        return Err(MetricError::InvalidSpec(format!("minkowski exponent {p} < 1")));
    }
    let (a, b) = pair.numeric()?;
    if p.is_infinite() {
        return Ok(pair
            .cells()
            .filter(|&(_, _, pr)| pr > 0.0)
            .map(|(i, j, _)| (a[i] - b[j]).abs())
            .fold(0.0, f64::max));
    }
    let s: f64 = pair
        .cells()
        .map(|(i, j, pr)| {
            let d = (a[i] - b[j]).abs();
            if d == 0.0 {
                0.0
            } else {
                pr * d.powf(p)
            }
        })
        .sum();
    Ok(if p == 1.0 { s } else { s.powf(1.0 / p) })
}

fn membership(outcomes: &[String], subset: &[String], variable: &str) -> Result<Vec<bool>, MetricError> {
    let mut inside = vec![false; outcomes.len()];
    for s in subset {
        let i = outcomes
            .iter()
            .position(|o| o == s)
            .ok_or_else(|| MetricError::UnknownOutcome {
                variable: variable.to_string(),
                outcome: s.clone(),
            })?;
        inside[i] = true;
    }
    Ok(inside)
}

/// `Pr[A not in e_plus_a, B in e_plus_b]`.
pub fn classification(pair: &PairDistribution, e_plus_a: &[String], e_plus_b: &[String]) -> Result<f64, MetricError> {
    let in_a = membership(&pair.outcomes_a, e_plus_a, &pair.name_a)?;
    let in_b = membership(&pair.outcomes_b, e_plus_b, &pair.name_b)?;
    Ok(pair
        .cells()
        .filter(|&(i, j, _)| !in_a[i] && in_b[j])
        .map(|(_, _, p)| p)
        .sum())
}

/// `sum_v Pr[V=v] Pr[A <= v < B]`.
pub fn separation(pair: &PairDistribution, v: &[WeightedValue]) -> Result<f64, MetricError> {
    let (a, b) = pair.numeric()?;
    Ok(v.iter()
        .map(|w| {
            w.p * pair
                .cells()
                .filter(|&(i, j, _)| a[i] <= w.value && w.value < b[j])
                .map(|(_, _, p)| p)
                .sum::<f64>()
        })
        .sum())
}

fn plog2(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// `h(A|B)` in bits.
pub fn cond_entropy(pair: &PairDistribution) -> f64 {
    let pb = pair.marginal_b();
    let h = -pair
        .cells()
        .filter(|&(_, _, p)| p > 0.0)
        .map(|(_, j, p)| p * (p / pb[j]).log2())
        .sum::<f64>();
    h.max(0.0)
}

/// `h(A, B)` in bits.
pub fn joint_entropy(pair: &PairDistribution) -> f64 {
    (-pair.probs.iter().map(|&p| plog2(p)).sum::<f64>()).max(0.0)
}

/// `2 h(A|B) / h(A, B)`, taken as 0 when `h(A, B) = 0`.
pub fn norm_cond_entropy(pair: &PairDistribution) -> f64 {
    let joint = joint_entropy(pair);
    if joint <= 0.0 {
        return 0.0;
    }
    (2.0 * cond_entropy(pair) / joint).clamp(0.0, 2.0)
}

pub fn apply_combinator(spec: &MetricSpec, pair: &PairDistribution) -> Result<f64, MetricError> {
    match spec {
        MetricSpec::Minkowski { p } => minkowski(pair, p.0),
        MetricSpec::Classification { positive, per_point } => {
            let pick = |point: &Option<FactorPoint>| -> &[String] {
                point
                    .as_ref()
                    .and_then(|p| per_point.get(&p.to_string()))
                    .map(Vec::as_slice)
                    .unwrap_or(positive)
            };
            classification(pair, pick(&pair.point_a), pick(&pair.point_b))
        }
        MetricSpec::Separation { v } => separation(pair, v),
        MetricSpec::CondEntropy => Ok(cond_entropy(pair)),
        MetricSpec::NormCondEntropy => Ok(norm_cond_entropy(pair)),
        MetricSpec::Power { q, inner } => {
            if !(*q > 0.0 && *q <= 1.0) {
                return Err(MetricError::InvalidSpec(format!("power exponent {q} outside (0, 1]")));
            }
            Ok(apply_combinator(inner, pair)?.powf(*q))
        }
        MetricSpec::Bounded { inner } => {
            let d = apply_combinator(inner, pair)?;
            Ok(d / (1.0 + d))
        }
        MetricSpec::Sum { terms } => terms.iter().map(|t| apply_combinator(t, pair)).sum(),
        MetricSpec::Max { terms } => {
            if terms.is_empty() {
                return Err(MetricError::InvalidSpec("max needs at least one term".into()));
            }
            terms
                .iter()
                .map(|t| apply_combinator(t, pair))
                .try_fold(f64::NEG_INFINITY, |acc, v| v.map(|v| acc.max(v)))
        }
        MetricSpec::Mixture { components } => components
            .iter()
            .map(|c| apply_combinator(&c.metric, pair).map(|v| c.weight * v))
            .sum(),
        MetricSpec::Reverse { inner } => apply_combinator(inner, &pair.transposed()),
    }
}
