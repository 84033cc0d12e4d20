//! Chain inequalities for p.q.-metrics.
//!
//! If the diagram holds, the factor-point variables are jointly distributed,
//! so any p.q.-metric `D` computed from treatment 2-marginals satisfies
//! `D(x1, xl) <= D(x1, x2) + ... + D(x(l-1), xl)` along every chain whose
//! consecutive and closing pairs lie inside treatments. Checking irreducible
//! chains (chordless cycles of the coverage graph, and triads no treatment
//! contains) is enough.

use std::collections::HashMap;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::metrics::{MetricError, MetricSpec, PairDistribution};
use crate::model::{FactorPoint, ModelError, SelectiveSystem};
use crate::par::{map_range, map_slice, Execution};

pub const DEFAULT_MAX_LEN: usize = 8;
pub const DEFAULT_SLACK: f64 = 1e-10;
pub const DEFAULT_AGREEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0} and {1} belong to the same factor")]
    SameFactor(FactorPoint, FactorPoint),
    #[error("no treatment contains both {0} and {1}")]
    PairNotCovered(FactorPoint, FactorPoint),
    #[error("marginal selectivity violated for pair ({x}, {y}): values across treatments spread by {spread:.3e}")]
    MarginalDisagreement {
        x: FactorPoint,
        y: FactorPoint,
        spread: f64,
    },
    #[error("max_len must be at least 3, got {0}")]
    MaxLen(usize),
}

/// Which sets of factor points lie inside some treatment.
#[derive(Clone, Debug)]
pub struct Design {
    num_points: usize,
    point_factor: Vec<usize>,
    treatments: Vec<Vec<usize>>,
    pair_cover: Vec<bool>,
    crossed: bool,
}

impl Design {
    pub fn of(system: &SelectiveSystem) -> Design {
        let treatments: Vec<Vec<usize>> = (0..system.num_treatments())
            .map(|t| system.treatment_points(t))
            .collect();
        let point_factor = (0..system.num_points()).map(|p| system.point_factor(p)).collect();
        Design::from_parts(point_factor, treatments, system.is_completely_crossed())
    }

    /// `point_factor[p]` is the factor of point `p`; each treatment lists one
    /// point id per factor.
    pub fn from_parts(point_factor: Vec<usize>, treatments: Vec<Vec<usize>>, crossed: bool) -> Design {
        let n = point_factor.len();
        let mut pair_cover = vec![false; n * n];
        for t in &treatments {
            for &a in t {
                for &b in t {
                    if a != b {
                        pair_cover[a * n + b] = true;
                    }
                }
            }
        }
        Design {
            num_points: n,
            point_factor,
            treatments,
            pair_cover,
            crossed,
        }
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn factor_of(&self, p: usize) -> usize {
        self.point_factor[p]
    }

    pub fn is_crossed(&self) -> bool {
        self.crossed
    }

    pub fn treatments(&self) -> &[Vec<usize>] {
        &self.treatments
    }

    pub fn covers_pair(&self, a: usize, b: usize) -> bool {
        self.pair_cover[a * self.num_points + b]
    }

    pub fn covers(&self, points: &[usize]) -> bool {
        self.treatments.iter().any(|t| points.iter().all(|p| t.contains(p)))
    }

    /// Treatments containing all of `points`.
    pub fn covering(&self, points: &[usize]) -> Vec<usize> {
        (0..self.treatments.len())
            .filter(|&t| points.iter().all(|p| self.treatments[t].contains(p)))
            .collect()
    }

    pub fn is_realizable(&self, chain: &[usize]) -> bool {
        let l = chain.len();
        l >= 3
            && (0..l).all(|i| {
                let (a, b) = (chain[i], chain[(i + 1) % l]);
                self.point_factor[a] != self.point_factor[b] && self.covers_pair(a, b)
            })
    }

    pub fn is_irreducible(&self, chain: &[usize]) -> bool {
        if !self.is_realizable(chain) {
            return false;
        }
        let l = chain.len();
        for i in 0..l {
            if chain[i + 1..].contains(&chain[i]) {
                return false;
            }
        }
        if l == 3 {
            return !self.covers(chain);
        }
        // only cyclically adjacent pairs may be covered; then no triad can be
        (0..l).all(|i| (i + 2..l).all(|j| (i == 0 && j == l - 1) || !self.covers_pair(chain[i], chain[j])))
    }
}

/// A cyclic sequence of factor points.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Chain {
    pub points: Vec<FactorPoint>,
}

impl Chain {
    pub fn from_ids(system: &SelectiveSystem, ids: &[usize]) -> Chain {
        Chain {
            points: ids.iter().map(|&p| system.point(p)).collect(),
        }
    }

    pub fn ids(&self, system: &SelectiveSystem) -> Result<Vec<usize>, ModelError> {
        self.points.iter().map(|p| system.lookup_point(p)).collect()
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.points.iter().map(|p| p.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

impl Serialize for Chain {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.points.iter().map(|p| p.to_string()))
    }
}

pub fn is_treatment_realizable(system: &SelectiveSystem, chain: &Chain) -> Result<bool, ModelError> {
    Ok(Design::of(system).is_realizable(&chain.ids(system)?))
}

pub fn is_irreducible(system: &SelectiveSystem, chain: &Chain) -> Result<bool, ModelError> {
    Ok(Design::of(system).is_irreducible(&chain.ids(system)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainEnumeration {
    /// Point ids, canonical orientation.
    pub chains: Vec<Vec<usize>>,
    /// Some path could still have been extended at `max_len`.
    pub truncated: bool,
}

/// Irreducible chains, each once: starting at its smallest point id and
/// heading toward the smaller of that point's two neighbours.
pub fn enumerate_chain_ids(design: &Design, max_len: usize) -> ChainEnumeration {
    if design.crossed {
        let tetrads = crossed_tetrads(design);
        if max_len < 4 {
            return ChainEnumeration {
                truncated: !tetrads.is_empty(),
                chains: Vec::new(),
            };
        }
        return ChainEnumeration {
            chains: tetrads,
            truncated: false,
        };
    }
    let n = design.num_points;
    let mut chains = Vec::new();
    let mut truncated = false;
    let mut path = Vec::with_capacity(max_len);
    for start in 0..n {
        path.clear();
        path.push(start);
        extend(design, max_len, &mut path, &mut chains, &mut truncated);
    }
    ChainEnumeration { chains, truncated }
}

fn extend(design: &Design, max_len: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, truncated: &mut bool) {
    let start = path[0];
    let last = *path.last().unwrap();
    let k = path.len();
    for w in start + 1..design.num_points {
        if !design.covers_pair(last, w) || path.contains(&w) {
            continue;
        }
        // w must not form a chord with any interior path vertex
        if k > 2 && path[1..k - 1].iter().any(|&v| design.covers_pair(v, w)) {
            continue;
        }
        if k >= 2 && design.covers_pair(w, start) {
            // closes a cycle; keep one direction only
            if path[1] < w {
                let mut cycle = path.clone();
                cycle.push(w);
                if cycle.len() > 3 || !design.covers(&cycle) {
                    out.push(cycle);
                }
            }
            continue;
        }
        if k + 1 < max_len {
            path.push(w);
            extend(design, max_len, path, out, truncated);
            path.pop();
        } else if k + 1 == max_len {
            // a cycle through w would need more than max_len points
            *truncated = true;
        }
    }
}

fn crossed_tetrads(design: &Design) -> Vec<Vec<usize>> {
    let num_factors = design.point_factor.iter().max().map_or(0, |&f| f + 1);
    let mut by_factor: Vec<Vec<usize>> = vec![Vec::new(); num_factors];
    for (p, &f) in design.point_factor.iter().enumerate() {
        by_factor[f].push(p);
    }
    let mut out = Vec::new();
    for a in 0..num_factors {
        for b in a + 1..num_factors {
            let (fa, fb) = (&by_factor[a], &by_factor[b]);
            for (i, &x) in fa.iter().enumerate() {
                for &u in &fa[i + 1..] {
                    for (j, &y) in fb.iter().enumerate() {
                        for &v in &fb[j + 1..] {
                            out.push(vec![x, y, u, v]);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Irreducible chains of `system` up to `max_len` points.
pub fn enumerate_irreducible_chains(
    system: &SelectiveSystem,
    max_len: usize,
) -> Result<(Vec<Chain>, bool), ChainError> {
    if max_len < 3 {
        return Err(ChainError::MaxLen(max_len));
    }
    let e = enumerate_chain_ids(&Design::of(system), max_len);
    Ok((
        e.chains.iter().map(|c| Chain::from_ids(system, c)).collect(),
        e.truncated,
    ))
}

/// A violated anchored form of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchoredViolation {
    pub chain_index: usize,
    /// The chain as traversed: `lhs = D(seq[0], seq[l-1])`, rhs sums consecutive pairs.
    pub sequence: Vec<usize>,
    pub lhs: f64,
    pub rhs: f64,
    /// Number of the chain's 2l anchored forms that are violated.
    pub violating_orientations: usize,
}

/// Evaluates every rotation in both directions; keeps the largest violation
/// per chain.
pub fn evaluate_chain_inequalities<F>(
    chains: &[Vec<usize>],
    value: F,
    slack: f64,
    exec: Execution,
) -> Vec<AnchoredViolation>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let per_chain = map_range(chains.len(), exec, |ci| {
        let chain = &chains[ci];
        let l = chain.len();
        let mut best: Option<AnchoredViolation> = None;
        let mut count = 0;
        for r in 0..l {
            for reverse in [false, true] {
                let seq: Vec<usize> = (0..l)
                    .map(|i| {
                        if reverse {
                            chain[(r + l - i) % l]
                        } else {
                            chain[(r + i) % l]
                        }
                    })
                    .collect();
                let lhs = value(seq[0], seq[l - 1]);
                let rhs: f64 = seq.windows(2).map(|w| value(w[0], w[1])).sum();
                if lhs > rhs + slack {
                    count += 1;
                    if best.as_ref().is_none_or(|b| lhs - rhs > b.lhs - b.rhs) {
                        best = Some(AnchoredViolation {
                            chain_index: ci,
                            sequence: seq,
                            lhs,
                            rhs,
                            violating_orientations: 0,
                        });
                    }
                }
            }
        }
        best.map(|mut b| {
            b.violating_orientations = count;
            b
        })
    });
    per_chain.into_iter().flatten().collect()
}

fn pair_values(
    system: &SelectiveSystem,
    metric: &MetricSpec,
    x: usize,
    y: usize,
    treatments: &[usize],
) -> Result<Vec<f64>, ChainError> {
    let (fx, fy) = (system.point_factor(x), system.point_factor(y));
    treatments
        .iter()
        .map(|&t| {
            let pair = PairDistribution::from_joint(system.distribution(t), system.variables(), fx, fy)
                .at_points(system.point(x), system.point(y));
            Ok(metric.evaluate(&pair)?)
        })
        .collect()
}

/// `D(x, y)` from the `(x, y)` 2-marginal, averaged over every treatment
/// containing both points after checking they agree within `tol`.
pub fn pairwise_value(
    system: &SelectiveSystem,
    metric: &MetricSpec,
    x: &FactorPoint,
    y: &FactorPoint,
    tol: f64,
) -> Result<f64, ChainError> {
    let (xi, yi) = (system.lookup_point(x)?, system.lookup_point(y)?);
    pairwise_value_ids(system, metric, xi, yi, tol)
}

pub fn pairwise_value_ids(
    system: &SelectiveSystem,
    metric: &MetricSpec,
    x: usize,
    y: usize,
    tol: f64,
) -> Result<f64, ChainError> {
    if system.point_factor(x) == system.point_factor(y) {
        return Err(ChainError::SameFactor(system.point(x), system.point(y)));
    }
    let covering = system.covering_treatments(&[x, y]);
    if covering.is_empty() {
        return Err(ChainError::PairNotCovered(system.point(x), system.point(y)));
    }
    let values = pair_values(system, metric, x, y, &covering)?;
    agreed_mean(&values, tol).ok_or_else(|| ChainError::MarginalDisagreement {
        x: system.point(x),
        y: system.point(y),
        spread: spread(&values),
    })
}

pub(crate) fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

/// Mean of `values` when their spread is within `tol`.
pub(crate) fn agreed_mean(values: &[f64], tol: f64) -> Option<f64> {
    (spread(values) <= tol).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainViolation {
    pub chain: Chain,
    pub lhs: f64,
    pub rhs: f64,
    /// `D` of each consecutive pair, in traversal order.
    pub terms: Vec<f64>,
    pub violating_orientations: usize,
    pub metric: MetricSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceReport {
    pub passed: bool,
    pub metric: MetricSpec,
    pub chains_checked: usize,
    pub completely_crossed: bool,
    pub truncated: bool,
    pub max_len: usize,
    pub slack: f64,
    pub violations: Vec<ChainViolation>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceOptions {
    pub max_len: usize,
    pub slack: f64,
    pub agreement_tol: f64,
    pub execution: Execution,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions {
            max_len: DEFAULT_MAX_LEN,
            slack: DEFAULT_SLACK,
            agreement_tol: DEFAULT_AGREEMENT_TOL,
            execution: Execution::default(),
        }
    }
}

/// Every ordered covered pair's metric value, keyed by point ids.
pub fn pair_value_table(
    system: &SelectiveSystem,
    metric: &MetricSpec,
    tol: f64,
    exec: Execution,
) -> Result<HashMap<(usize, usize), f64>, ChainError> {
    let design = Design::of(system);
    let n = system.num_points();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .filter(|&(x, y)| design.covers_pair(x, y))
        .collect();
    let values = map_slice(&pairs, exec, |&(x, y)| pairwise_value_ids(system, metric, x, y, tol));
    pairs.into_iter().zip(values).map(|(k, v)| v.map(|v| (k, v))).collect()
}

/// Checks the chain inequality on every irreducible chain.
pub fn distance_test(
    system: &SelectiveSystem,
    metric: &MetricSpec,
    options: &DistanceOptions,
) -> Result<DistanceReport, ChainError> {
    if options.max_len < 3 {
        return Err(ChainError::MaxLen(options.max_len));
    }
    metric.validate()?;
    let design = Design::of(system);
    let table = pair_value_table(system, metric, options.agreement_tol, options.execution)?;
    let enumeration = enumerate_chain_ids(&design, options.max_len);
    let value = |x: usize, y: usize| table[&(x, y)];
    let found = evaluate_chain_inequalities(&enumeration.chains, value, options.slack, options.execution);
    let violations: Vec<ChainViolation> = found
        .into_iter()
        .map(|v| ChainViolation {
            chain: Chain::from_ids(system, &v.sequence),
            lhs: v.lhs,
            rhs: v.rhs,
            terms: v.sequence.windows(2).map(|w| value(w[0], w[1])).collect(),
            violating_orientations: v.violating_orientations,
            metric: metric.clone(),
        })
        .collect();
    let mut warnings = Vec::new();
    if enumeration.truncated {
        warnings.push(format!(
            "chain enumeration truncated at {} points; longer irreducible chains may exist",
            options.max_len
        ));
    }
    Ok(DistanceReport {
        passed: violations.is_empty(),
        metric: metric.clone(),
        chains_checked: enumeration.chains.len(),
        completely_crossed: design.is_crossed(),
        truncated: enumeration.truncated,
        max_len: options.max_len,
        slack: options.slack,
        violations,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Points 0..ka are factor 0, the rest factor 1; all combinations present.
    fn crossed(ka: usize, kb: usize) -> Design {
        let mut pf = vec![0; ka];
        pf.extend(vec![1; kb]);
        let mut ts = Vec::new();
        for a in 0..ka {
            for b in 0..kb {
                ts.push(vec![a, ka + b]);
            }
        }
        Design::from_parts(pf, ts, true)
    }

    #[test]
    fn crossed_2x2_has_one_tetrad() {
        let d = crossed(2, 2);
        let e = enumerate_chain_ids(&d, 8);
        assert_eq!(e.chains, vec![vec![0, 2, 1, 3]]);
        assert!(d.is_irreducible(&[0, 2, 1, 3]));
        assert!(d.is_realizable(&[0, 3, 1, 2]));
    }

    #[test]
    fn general_enumeration_agrees_with_crossed_shortcut() {
        for (ka, kb) in [(2, 2), (2, 3), (3, 3), (3, 4)] {
            let d = crossed(ka, kb);
            let general = Design::from_parts(d.point_factor.clone(), d.treatments.clone(), false);
            let mut a = enumerate_chain_ids(&d, 8).chains;
            let mut b = enumerate_chain_ids(&general, 8).chains;
            a.sort();
            b.sort();
            assert_eq!(a, b, "{ka}x{kb}");
            let choose2 = |k: usize| k * (k - 1) / 2;
            assert_eq!(a.len(), choose2(ka) * choose2(kb));
        }
    }

    #[test]
    fn single_treatment_has_no_irreducible_chains() {
        let d = Design::from_parts(vec![0, 1, 2], vec![vec![0, 1, 2]], false);
        assert!(enumerate_chain_ids(&d, 8).chains.is_empty());
        assert!(!d.is_irreducible(&[0, 1, 2]));
        assert!(d.is_realizable(&[0, 1, 2]));
    }

    #[test]
    fn uncovered_triad_is_irreducible() {
        // three factors, three treatments covering each pair but never all three
        let d = Design::from_parts(
            vec![0, 0, 1, 1, 2, 2],
            vec![vec![0, 2, 4], vec![0, 3, 5], vec![1, 2, 5]],
            false,
        );
        assert!(d.is_irreducible(&[0, 2, 5]));
        let e = enumerate_chain_ids(&d, 8);
        assert!(e.chains.contains(&vec![0, 2, 5]));
        assert!(!e.chains.iter().any(|c| c.len() == 3 && d.covers(c)));
    }

    #[test]
    fn repeated_point_is_reducible() {
        let d = crossed(2, 2);
        assert!(!d.is_irreducible(&[0, 2, 0, 3]));
        assert!(!d.is_realizable(&[0, 1, 2]));
    }

    #[test]
    fn truncation_flag() {
        // a bipartite 6-cycle needs max_len >= 6
        let d = Design::from_parts(
            vec![0, 0, 0, 1, 1, 1],
            vec![vec![0, 3], vec![3, 1], vec![1, 4], vec![4, 2], vec![2, 5], vec![5, 0]],
            false,
        );
        let short = enumerate_chain_ids(&d, 5);
        assert!(short.chains.is_empty() && short.truncated);
        let full = enumerate_chain_ids(&d, 6);
        assert_eq!(full.chains, vec![vec![0, 3, 1, 4, 2, 5]]);
    }

    #[test]
    fn anchored_evaluation_finds_the_closing_pair() {
        let chains = vec![vec![0, 2, 1, 3]];
        // only D(0,3) and D(3,0) are large
        let value = |x: usize, y: usize| {
            if (x, y) == (0, 3) || (x, y) == (3, 0) {
                0.82
            } else {
                0.0
            }
        };
        let v = evaluate_chain_inequalities(&chains, value, 1e-10, Execution::Sequential);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].sequence, vec![0, 2, 1, 3]);
        assert_eq!(v[0].violating_orientations, 2);
    }
}
