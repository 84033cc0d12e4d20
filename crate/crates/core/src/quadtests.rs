//! Cosphericity: a correlation inequality over every 2x2 sub-design.
//!
//! For points `x != u` of one factor and `y != v` of another, with all four
//! cross pairs inside treatments,
//! `|r_xy r_xv - r_uy r_uv| <= sqrt(1-r_xy^2) sqrt(1-r_xv^2) + sqrt(1-r_uy^2) sqrt(1-r_uv^2)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chains::{agreed_mean, spread, Design, DEFAULT_AGREEMENT_TOL, DEFAULT_SLACK};
use crate::metrics::{MetricError, PairDistribution};
use crate::model::{FactorPoint, ModelError, SelectiveSystem};
use crate::par::{map_slice, Execution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("degenerate variable {0:?}: zero variance")]
    Degenerate(String),
    #[error(
        "marginal selectivity violated for pair ({x}, {y}): correlations across treatments spread by {spread:.3e}"
    )]
    MarginalDisagreement {
        x: FactorPoint,
        y: FactorPoint,
        spread: f64,
    },
    #[error("correlation {rho} for ({x}, {y}) is outside [-1, 1]")]
    BadCorrelation { x: FactorPoint, y: FactorPoint, rho: f64 },
}

/// Pearson correlation of the numeric embeddings.
pub fn correlation(pair: &PairDistribution) -> Result<f64, QuadError> {
    let (a, b) = pair.numeric()?;
    let pa = pair.marginal_a();
    let pb = pair.marginal_b();
    let mean = |x: &[f64], p: &[f64]| x.iter().zip(p).map(|(x, p)| x * p).sum::<f64>();
    let (ma, mb) = (mean(a, &pa), mean(b, &pb));
    let var = |x: &[f64], p: &[f64], m: f64| x.iter().zip(p).map(|(x, p)| p * (x - m) * (x - m)).sum::<f64>();
    let (va, vb) = (var(a, &pa, ma), var(b, &pb, mb));
    let scale = |x: &[f64]| x.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    if va <= 1e-14 * scale(a).powi(2) {
        return Err(QuadError::Degenerate(pair.name_a.clone()));
    }
    if vb <= 1e-14 * scale(b).powi(2) {
        return Err(QuadError::Degenerate(pair.name_b.clone()));
    }
    let nb = b.len();
    let cov: f64 = pair
        .probs
        .iter()
        .enumerate()
        .map(|(k, p)| p * (a[k / nb] - ma) * (b[k % nb] - mb))
        .sum();
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Where the correlations come from.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum CorrelationSource {
    /// Pearson correlations of the treatment 2-marginals.
    #[default]
    Distributions,
    /// Given per unordered pair of points, e.g. latent correlations of a
    /// model the tables were derived from.
    Supplied(BTreeMap<(FactorPoint, FactorPoint), f64>),
}

impl CorrelationSource {
    pub fn supplied(entries: impl IntoIterator<Item = (FactorPoint, FactorPoint, f64)>) -> Self {
        CorrelationSource::Supplied(entries.into_iter().map(|(a, b, r)| (ordered(a, b), r)).collect())
    }
}

fn ordered(a: FactorPoint, b: FactorPoint) -> (FactorPoint, FactorPoint) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosphericityViolation {
    /// `(x, u, y, v)`: `x, u` from the first factor, `y, v` from the second.
    pub points: [String; 4],
    /// `[r_xy, r_xv, r_uy, r_uv]`
    pub rho: [f64; 4],
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CosphericityReport {
    pub passed: bool,
    pub quadruples_checked: usize,
    pub quadruples_skipped: usize,
    pub slack: f64,
    pub source: &'static str,
    pub violations: Vec<CosphericityViolation>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CosphericityOptions {
    pub slack: f64,
    pub agreement_tol: f64,
    pub source: CorrelationSource,
    pub execution: Execution,
}

impl Default for CosphericityOptions {
    fn default() -> Self {
        CosphericityOptions {
            slack: DEFAULT_SLACK,
            agreement_tol: DEFAULT_AGREEMENT_TOL,
            source: CorrelationSource::Distributions,
            execution: Execution::default(),
        }
    }
}

/// Left and right sides of the inequality for `[r_xy, r_xv, r_uy, r_uv]`.
pub fn cosphericity_sides(rho: [f64; 4]) -> (f64, f64) {
    let [xy, xv, uy, uv] = rho;
    let c = |r: f64| (1.0 - r * r).max(0.0).sqrt();
    ((xy * xv - uy * uv).abs(), c(xy) * c(xv) + c(uy) * c(uv))
}

enum Rho {
    Value(f64),
    Degenerate(String),
}

fn pair_correlation(
    system: &SelectiveSystem,
    x: usize,
    y: usize,
    options: &CosphericityOptions,
) -> Result<Rho, QuadError> {
    let (px, py) = (system.point(x), system.point(y));
    if let CorrelationSource::Supplied(map) = &options.source {
        if let Some(&rho) = map.get(&ordered(px.clone(), py.clone())) {
            if !(-1.0..=1.0).contains(&rho) {
                return Err(QuadError::BadCorrelation { x: px, y: py, rho });
            }
            return Ok(Rho::Value(rho));
        }
    }
    let (fx, fy) = (system.point_factor(x), system.point_factor(y));
    let mut values = Vec::new();
    for t in system.covering_treatments(&[x, y]) {
        let pair = PairDistribution::from_joint(system.distribution(t), system.variables(), fx, fy);
        match correlation(&pair) {
            Ok(r) => values.push(r),
            Err(QuadError::Degenerate(name)) => return Ok(Rho::Degenerate(name)),
            Err(e) => return Err(e),
        }
    }
    agreed_mean(&values, options.agreement_tol)
        .map(Rho::Value)
        .ok_or_else(|| QuadError::MarginalDisagreement {
            x: px,
            y: py,
            spread: spread(&values),
        })
}

/// Checks every 2x2 sub-design whose four cross pairs are covered.
///
/// Each unordered pair of factors is taken once, in system order; exchanging
/// the roles of the two factors gives the same verdict.
pub fn cosphericity_test(
    system: &SelectiveSystem,
    options: &CosphericityOptions,
) -> Result<CosphericityReport, QuadError> {
    let design = Design::of(system);
    let nf = system.factors().len();
    let mut quads = Vec::new();
    for a in 0..nf {
        for b in a + 1..nf {
            let ka = system.factors()[a].levels.len();
            let kb = system.factors()[b].levels.len();
            for xl in 0..ka {
                for ul in xl + 1..ka {
                    for yl in 0..kb {
                        for vl in yl + 1..kb {
                            let (x, u) = (system.point_id(a, xl), system.point_id(a, ul));
                            let (y, v) = (system.point_id(b, yl), system.point_id(b, vl));
                            let pairs = [(x, y), (x, v), (u, y), (u, v)];
                            if pairs.iter().all(|&(p, q)| design.covers_pair(p, q)) {
                                quads.push([x, u, y, v]);
                            }
                        }
                    }
                }
            }
        }
    }
    // each needed pair once
    let mut needed: Vec<(usize, usize)> = quads
        .iter()
        .flat_map(|&[x, u, y, v]| [(x, y), (x, v), (u, y), (u, v)])
        .collect();
    needed.sort_unstable();
    needed.dedup();
    let computed = map_slice(&needed, options.execution, |&(x, y)| {
        pair_correlation(system, x, y, options)
    });
    let mut rho: BTreeMap<(usize, usize), Rho> = BTreeMap::new();
    for (k, r) in needed.into_iter().zip(computed) {
        rho.insert(k, r?);
    }

    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let mut skipped = 0;
    for &[x, u, y, v] in &quads {
        let mut r = [0.0; 4];
        let mut degenerate = None;
        for (slot, key) in r.iter_mut().zip([(x, y), (x, v), (u, y), (u, v)]) {
            match &rho[&key] {
                Rho::Value(val) => *slot = *val,
                Rho::Degenerate(name) => degenerate = Some(name.clone()),
            }
        }
        let label = |p: usize| system.point(p).to_string();
        if let Some(name) = degenerate {
            skipped += 1;
            warnings.push(format!(
                "skipped ({}, {}, {}, {}): variable {name} is degenerate",
                label(x),
                label(u),
                label(y),
                label(v)
            ));
            continue;
        }
        let (lhs, rhs) = cosphericity_sides(r);
        if lhs > rhs + options.slack {
            violations.push(CosphericityViolation {
                points: [label(x), label(u), label(y), label(v)],
                rho: r,
                lhs,
                rhs,
            });
        }
    }
    Ok(CosphericityReport {
        passed: violations.is_empty(),
        quadruples_checked: quads.len() - skipped,
        quadruples_skipped: skipped,
        slack: options.slack,
        source: match options.source {
            CorrelationSource::Distributions => "distributions",
            CorrelationSource::Supplied(_) => "supplied",
        },
        violations,
        warnings,
    })
}
