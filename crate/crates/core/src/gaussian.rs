//! Median splits of standard bivariate normal pairs.

use std::f64::consts::PI;

use thiserror::Error;

use crate::model::{Factor, FactorPoint, JointPmf, ModelError, SelectiveSystem, Treatment, Variable};
use crate::quadtests::CorrelationSource;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("correlation {0} must lie strictly inside (-1, 1)")]
    Rho(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A 2x2 table with outcome 1 for values `<= 0` and 2 above.
#[derive(Clone, Debug, PartialEq)]
pub struct BvnSplitTable {
    pub rho: f64,
    pub table: JointPmf,
}

impl BvnSplitTable {
    /// `Pr[a, b]` with 1-based outcomes.
    pub fn prob(&self, a: usize, b: usize) -> f64 {
        self.table.get(&[a - 1, b - 1])
    }
}

/// Quadrant probabilities of a standard bivariate normal split at its medians.
pub fn bvn_median_split(rho: f64) -> Result<BvnSplitTable, GaussianError> {
    bvn_median_split_named(rho, "A", "B")
}

pub fn bvn_median_split_named(rho: f64, a: &str, b: &str) -> Result<BvnSplitTable, GaussianError> {
    if rho.is_nan() || rho.abs() >= 1.0 {
        return Err(GaussianError::Rho(rho));
    }
    let same = 0.25 + rho.asin() / (2.0 * PI);
    let diff = 0.5 - same;
    let table = JointPmf::new(vec![a.into(), b.into()], vec![2, 2], vec![same, diff, diff, same])?;
    debug_assert!((same + diff - 0.5).abs() < 1e-15);
    Ok(BvnSplitTable { rho, table })
}

/// Latent correlations per treatment, in the order 1α1β, 1α2β, 2α1β, 2α2β.
pub const EXAMPLE12_RHO: [f64; 4] = [-0.9, 0.9, 0.9, -0.1];

/// A fully crossed 2x2 system whose treatment `(i, j)` carries the median
/// split of a bivariate normal with correlation `rho[2i + j]`.
pub fn median_split_system(rho: [f64; 4]) -> Result<SelectiveSystem, GaussianError> {
    let factors = vec![Factor::new("alpha", &["1", "2"]), Factor::new("beta", &["1", "2"])];
    let variables = vec![Variable::numeric("A", &["1", "2"]), Variable::numeric("B", &["1", "2"])];
    let mut treatments = Vec::new();
    let mut tables = Vec::new();
    for (k, r) in rho.iter().enumerate() {
        let (a, b) = (["1", "2"][k / 2], ["1", "2"][k % 2]);
        treatments.push(Treatment::from_pairs(&[("alpha", a), ("beta", b)]));
        tables.push(bvn_median_split(*r)?.table);
    }
    Ok(SelectiveSystem::new(factors, variables, treatments, tables)?)
}

pub fn build_example12_system() -> SelectiveSystem {
    median_split_system(EXAMPLE12_RHO).expect("example correlations are valid")
}

/// The latent correlations behind [`build_example12_system`], keyed by
/// factor-point pair.
pub fn example12_latent_correlations() -> CorrelationSource {
    CorrelationSource::supplied(EXAMPLE12_RHO.iter().enumerate().map(|(k, &r)| {
        (
            FactorPoint::new("alpha", ["1", "2"][k / 2]),
            FactorPoint::new("beta", ["1", "2"][k % 2]),
            r,
        )
    }))
}
