//! Factors, treatments and treatment-dependent joint distributions.
//!
//! A [`SelectiveSystem`] is always bijective: variable `i` is paired with
//! factor `i`. Non-bijective diagrams are brought into this form by
//! [`canonical_rearrangement`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{rational_from_f64, rational_to_f64};

/// Normalization tolerance for probability tables.
pub const DEFAULT_EPS_PROB: f64 = 1e-9;

/// Label used for the single point of a factor that influences nothing.
pub const DUMMY_LEVEL: &str = "∅";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactorPoint {
    pub factor: String,
    pub level: String,
}

impl FactorPoint {
    pub fn new(factor: impl Into<String>, level: impl Into<String>) -> Self {
        FactorPoint {
            factor: factor.into(),
            level: level.into(),
        }
    }
}

/// Written `level^factor`, e.g. `2^beta`.
impl fmt::Display for FactorPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^{}", self.level, self.factor)
    }
}

impl FromStr for FactorPoint {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.rsplit_once('^') {
            Some((level, factor)) if !level.is_empty() && !factor.is_empty() => Ok(FactorPoint::new(factor, level)),
            _ => Err(ModelError::BadPointLabel(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
}

impl Factor {
    pub fn new(name: impl Into<String>, levels: &[&str]) -> Self {
        Factor {
            name: name.into(),
            levels: levels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub outcomes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_values: Option<Vec<f64>>,
}

impl Variable {
    pub fn new(name: impl Into<String>, outcomes: &[&str]) -> Self {
        Variable {
            name: name.into(),
            outcomes: outcomes.iter().map(|s| s.to_string()).collect(),
            numeric_values: None,
        }
    }

    /// Outcomes whose labels parse as numbers get those numbers as embedding.
    pub fn numeric(name: impl Into<String>, outcomes: &[&str]) -> Self {
        let mut v = Variable::new(name, outcomes);
        v.numeric_values = outcomes.iter().map(|o| o.parse::<f64>().ok()).collect();
        v
    }

    pub fn outcome_index(&self, outcome: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o == outcome)
    }
}

/// One factor point per factor, keyed by factor name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Treatment(pub BTreeMap<String, String>);

impl Treatment {
    pub fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        Treatment(pairs.iter().map(|(f, l)| (f.to_string(), l.to_string())).collect())
    }

    pub fn level(&self, factor: &str) -> Option<&str> {
        self.0.get(factor).map(String::as_str)
    }

    pub fn points(&self) -> impl Iterator<Item = FactorPoint> + '_ {
        self.0.iter().map(|(f, l)| FactorPoint::new(f, l))
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, p) in self.points().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}}")
    }
}

/// Which factors each variable is hypothesized to depend on.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagram {
    pub influences: BTreeMap<String, BTreeSet<String>>,
}

impl Diagram {
    pub fn from_pairs(pairs: &[(&str, &[&str])]) -> Self {
        Diagram {
            influences: pairs
                .iter()
                .map(|(v, fs)| (v.to_string(), fs.iter().map(|f| f.to_string()).collect()))
                .collect(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid system: {}", join_errors(.0))]
    Invalid(Vec<ValidationError>),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("unknown factor {0:?}")]
    UnknownFactor(String),
    #[error("unknown factor point {0}")]
    UnknownPoint(FactorPoint),
    #[error("duplicate variable {0:?}")]
    DuplicateVariable(String),
    #[error("empty variable subset")]
    EmptySubset,
    #[error("variable {0:?} is missing from the diagram")]
    MissingFromDiagram(String),
    #[error("treatments {0} and {1} coincide after rearrangement (some factor influences no variable)")]
    CollapsedTreatments(String, String),
    #[error("table shape mismatch: expected {expected} cells, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("bad factor point label {0:?}, expected level^factor")]
    BadPointLabel(String),
    #[error("{variable:?}: outcome map is not a bijection on {size} outcomes")]
    NotABijection { variable: String, size: usize },
    #[error("invalid partition for {name:?}: {reason}")]
    InvalidPartition { name: String, reason: String },
    #[error("coarsening ill-defined: {0}")]
    IllDefinedCoarsening(String),
}

fn join_errors(errors: &[ValidationError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

/// A structured problem found by [`validate_system`] or [`validate_parts`].
#[derive(Debug, Error, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationError {
    #[error("no factors")]
    NoFactors,
    #[error("factor {factor:?} has no levels")]
    EmptyFactor { factor: String },
    #[error("factor {factor:?}: duplicate level {level:?}")]
    DuplicateLevel { factor: String, level: String },
    #[error("duplicate factor {factor:?}")]
    DuplicateFactor { factor: String },
    #[error("duplicate variable {variable:?}")]
    DuplicateVariable { variable: String },
    #[error("variable {variable:?} has no outcomes")]
    EmptyOutcomes { variable: String },
    #[error("variable {variable:?}: duplicate outcome {outcome:?}")]
    DuplicateOutcome { variable: String, outcome: String },
    #[error("variable {variable:?}: {got} numeric values for {expected} outcomes")]
    NumericLength {
        variable: String,
        expected: usize,
        got: usize,
    },
    #[error("{factors} factors but {variables} variables; the system must be bijective")]
    NotBijective { factors: usize, variables: usize },
    #[error("treatment set is empty")]
    NoTreatments,
    #[error("treatment #{treatment}: unknown factor {factor:?}")]
    UnknownFactor { treatment: usize, factor: String },
    #[error("treatment #{treatment}: no level for factor {factor:?}")]
    MissingFactor { treatment: usize, factor: String },
    #[error("treatment #{treatment}: unknown level {level:?} of factor {factor:?}")]
    UnknownLevel {
        treatment: usize,
        factor: String,
        level: String,
    },
    #[error("treatment #{treatment} duplicates treatment #{first}")]
    DuplicateTreatment { treatment: usize, first: usize },
    #[error("{treatments} treatments but {distributions} distributions")]
    DistributionCount { treatments: usize, distributions: usize },
    #[error("treatment #{treatment}: pmf variables {got:?} differ from system variables {expected:?}")]
    PmfVariables {
        treatment: usize,
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("treatment #{treatment}: pmf shape {got:?} differs from outcome counts {expected:?}")]
    PmfShape {
        treatment: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("treatment #{treatment}: negative probability {value}")]
    NegativeProbability { treatment: usize, value: f64 },
    #[error("treatment #{treatment}: non-finite probability")]
    NonFiniteProbability { treatment: usize },
    #[error("treatment #{treatment}: pmf not normalized (total {total})")]
    NotNormalized { treatment: usize, total: f64 },
    #[error("treatment #{treatment}: unknown outcome {outcome:?} of variable {variable:?}")]
    UnknownOutcome {
        treatment: usize,
        variable: String,
        outcome: String,
    },
    #[error("treatment #{treatment}: outcome tuple {outcome:?} has {got} labels, expected {expected}")]
    TupleArity {
        treatment: usize,
        outcome: Vec<String>,
        expected: usize,
        got: usize,
    },
    #[error("treatment #{treatment}: outcome tuple {outcome:?} listed twice")]
    DuplicateCell { treatment: usize, outcome: Vec<String> },
    #[error("treatment #{treatment}: bad probability {text:?}: {reason}")]
    BadProbability {
        treatment: usize,
        text: String,
        reason: String,
    },
    #[error("diagram: {reason}")]
    BadDiagram { reason: String },
}

/// A finite probability table over the product of the variables' outcome sets.
///
/// Cells are stored row-major, last variable fastest. `exact`, when present,
/// carries the same table as exact fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPmf {
    variables: Vec<String>,
    dims: Vec<usize>,
    probs: Vec<f64>,
    exact: Option<Vec<BigRational>>,
}

impl JointPmf {
    pub fn new(variables: Vec<String>, dims: Vec<usize>, probs: Vec<f64>) -> Result<Self, ModelError> {
        let expected = dims.iter().product::<usize>();
        if probs.len() != expected || variables.len() != dims.len() {
            return Err(ModelError::Shape {
                expected,
                got: probs.len(),
            });
        }
        Ok(JointPmf {
            variables,
            dims,
            probs,
            exact: None,
        })
    }

    pub fn from_exact(variables: Vec<String>, dims: Vec<usize>, exact: Vec<BigRational>) -> Result<Self, ModelError> {
        let probs = exact.iter().map(rational_to_f64).collect();
        let mut pmf = JointPmf::new(variables, dims, probs)?;
        pmf.exact = Some(exact);
        Ok(pmf)
    }

    /// Convenience for hand-written tables: `names`, outcome counts, and
    /// probabilities given as decimal or `p/q` strings.
    pub fn from_strs(names: &[&str], dims: &[usize], cells: &[&str]) -> Result<Self, ModelError> {
        let exact = cells
            .iter()
            .map(|c| {
                crate::exact::parse_rational(c).map_err(|e| {
                    ModelError::Invalid(vec![ValidationError::BadProbability {
                        treatment: 0,
                        text: c.to_string(),
                        reason: e.to_string(),
                    }])
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        JointPmf::from_exact(names.iter().map(|s| s.to_string()).collect(), dims.to_vec(), exact)
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn exact(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    /// Exact cells, falling back to the shortest-decimal reading of floats.
    pub fn exact_or_decimal(&self) -> Vec<BigRational> {
        match &self.exact {
            Some(e) => e.clone(),
            None => self
                .probs
                .iter()
                .map(|&p| rational_from_f64(p).unwrap_or_else(|_| BigRational::zero()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn index_of(&self, tuple: &[usize]) -> usize {
        tuple.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn tuple_of(&self, mut flat: usize) -> Vec<usize> {
        let mut tuple = vec![0; self.dims.len()];
        for (slot, &d) in tuple.iter_mut().zip(&self.dims).rev() {
            *slot = flat % d;
            flat /= d;
        }
        tuple
    }

    pub fn get(&self, tuple: &[usize]) -> f64 {
        self.probs[self.index_of(tuple)]
    }

    pub fn position(&self, variable: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == variable)
    }

    /// Marginal over the variables at `positions`, in that order.
    pub fn marginal_positions(&self, positions: &[usize]) -> JointPmf {
        let dims: Vec<usize> = positions.iter().map(|&p| self.dims[p]).collect();
        let size = dims.iter().product::<usize>();
        // stride of each source axis inside the target table
        let mut target_stride = vec![0usize; self.dims.len()];
        let mut stride = 1;
        for (&p, &d) in positions.iter().zip(&dims).rev() {
            target_stride[p] += stride;
            stride *= d;
        }
        let mut probs = vec![0.0; size];
        let mut exact = self.exact.as_ref().map(|_| vec![BigRational::zero(); size]);
        let mut counter = vec![0usize; self.dims.len()];
        let mut target = 0usize;
        for flat in 0..self.probs.len() {
            probs[target] += self.probs[flat];
            if let (Some(dst), Some(src)) = (exact.as_mut(), self.exact.as_ref()) {
                dst[target] += &src[flat];
            }
            // odometer step, keeping `target` in sync
            for axis in (0..self.dims.len()).rev() {
                counter[axis] += 1;
                target += target_stride[axis];
                if counter[axis] < self.dims[axis] {
                    break;
                }
                target -= target_stride[axis] * counter[axis];
                counter[axis] = 0;
            }
        }
        JointPmf {
            variables: positions.iter().map(|&p| self.variables[p].clone()).collect(),
            dims,
            probs,
            exact,
        }
    }

    /// Relabels the outcomes of the variable at `axis`: outcome `o` becomes `perm[o]`.
    pub fn permute_axis(&self, axis: usize, perm: &[usize]) -> JointPmf {
        let mut probs = vec![0.0; self.probs.len()];
        let mut exact = self.exact.clone();
        for flat in 0..self.probs.len() {
            let mut tuple = self.tuple_of(flat);
            tuple[axis] = perm[tuple[axis]];
            let dst = self.index_of(&tuple);
            probs[dst] = self.probs[flat];
            if let (Some(e), Some(src)) = (exact.as_mut(), self.exact.as_ref()) {
                e[dst] = src[flat].clone();
            }
        }
        JointPmf {
            variables: self.variables.clone(),
            dims: self.dims.clone(),
            probs,
            exact,
        }
    }

    /// Merges outcomes of the variable at `axis` via `group_of[outcome]`.
    pub fn group_axis(&self, axis: usize, group_of: &[usize], groups: usize) -> JointPmf {
        let mut dims = self.dims.clone();
        dims[axis] = groups;
        let size = dims.iter().product::<usize>();
        let mut out = JointPmf {
            variables: self.variables.clone(),
            dims,
            probs: vec![0.0; size],
            exact: self.exact.as_ref().map(|_| vec![BigRational::zero(); size]),
        };
        for flat in 0..self.probs.len() {
            let mut tuple = self.tuple_of(flat);
            tuple[axis] = group_of[tuple[axis]];
            let dst = out.index_of(&tuple);
            out.probs[dst] += self.probs[flat];
            if let (Some(e), Some(src)) = (out.exact.as_mut(), self.exact.as_ref()) {
                e[dst] += &src[flat];
            }
        }
        out
    }

    /// Largest absolute cell difference; tables must have the same shape.
    pub fn max_abs_diff(&self, other: &JointPmf) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Marginal of `pmf` over `subset`, in the order given.
pub fn marginal(pmf: &JointPmf, subset: &[&str]) -> Result<JointPmf, ModelError> {
    if subset.is_empty() {
        return Err(ModelError::EmptySubset);
    }
    let mut positions = Vec::with_capacity(subset.len());
    for name in subset {
        let p = pmf
            .position(name)
            .ok_or_else(|| ModelError::UnknownVariable(name.to_string()))?;
        if positions.contains(&p) {
            return Err(ModelError::DuplicateVariable(name.to_string()));
        }
        positions.push(p);
    }
    Ok(pmf.marginal_positions(&positions))
}

/// A bijective treatment-dependent system of random variables.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectiveSystem {
    factors: Vec<Factor>,
    variables: Vec<Variable>,
    treatments: Vec<Vec<usize>>,
    distributions: Vec<JointPmf>,
    offsets: Vec<usize>,
}

impl SelectiveSystem {
    /// Builds a system, rejecting anything [`validate_parts`] complains about
    /// at the default normalization tolerance.
    pub fn new(
        factors: Vec<Factor>,
        variables: Vec<Variable>,
        treatments: Vec<Treatment>,
        distributions: Vec<JointPmf>,
    ) -> Result<Self, ModelError> {
        let errors = validate_parts(&factors, &variables, &treatments, &distributions, DEFAULT_EPS_PROB);
        if !errors.is_empty() {
            return Err(ModelError::Invalid(errors));
        }
        let levels = treatments
            .iter()
            .map(|t| {
                factors
                    .iter()
                    .map(|f| f.level_index(t.level(&f.name).unwrap()).unwrap())
                    .collect()
            })
            .collect();
        Ok(Self::from_indexed(factors, variables, levels, distributions))
    }

    fn from_indexed(
        factors: Vec<Factor>,
        variables: Vec<Variable>,
        treatments: Vec<Vec<usize>>,
        distributions: Vec<JointPmf>,
    ) -> Self {
        let mut offsets = Vec::with_capacity(factors.len() + 1);
        let mut acc = 0;
        for f in &factors {
            offsets.push(acc);
            acc += f.levels.len();
        }
        offsets.push(acc);
        SelectiveSystem {
            factors,
            variables,
            treatments,
            distributions,
            offsets,
        }
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn num_treatments(&self) -> usize {
        self.treatments.len()
    }

    /// Level index per factor for treatment `t`.
    pub fn treatment_levels(&self, t: usize) -> &[usize] {
        &self.treatments[t]
    }

    pub fn treatment(&self, t: usize) -> Treatment {
        Treatment(
            self.factors
                .iter()
                .zip(&self.treatments[t])
                .map(|(f, &l)| (f.name.clone(), f.levels[l].clone()))
                .collect(),
        )
    }

    pub fn treatments(&self) -> Vec<Treatment> {
        (0..self.treatments.len()).map(|t| self.treatment(t)).collect()
    }

    pub fn distribution(&self, t: usize) -> &JointPmf {
        &self.distributions[t]
    }

    pub fn distributions(&self) -> &[JointPmf] {
        &self.distributions
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    /// Total number of factor points over all factors.
    pub fn num_points(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Global id of level `level` of factor `factor`; ids run factor-major.
    pub fn point_id(&self, factor: usize, level: usize) -> usize {
        self.offsets[factor] + level
    }

    pub fn point_factor(&self, id: usize) -> usize {
        self.offsets.partition_point(|&o| o <= id) - 1
    }

    pub fn point_level(&self, id: usize) -> usize {
        id - self.offsets[self.point_factor(id)]
    }

    pub fn point(&self, id: usize) -> FactorPoint {
        let f = self.point_factor(id);
        FactorPoint::new(&self.factors[f].name, &self.factors[f].levels[id - self.offsets[f]])
    }

    pub fn lookup_point(&self, point: &FactorPoint) -> Result<usize, ModelError> {
        let f = self
            .factor_index(&point.factor)
            .ok_or_else(|| ModelError::UnknownPoint(point.clone()))?;
        let l = self.factors[f]
            .level_index(&point.level)
            .ok_or_else(|| ModelError::UnknownPoint(point.clone()))?;
        Ok(self.point_id(f, l))
    }

    /// Point ids of treatment `t`, one per factor in factor order.
    pub fn treatment_points(&self, t: usize) -> Vec<usize> {
        self.treatments[t]
            .iter()
            .enumerate()
            .map(|(f, &l)| self.point_id(f, l))
            .collect()
    }

    pub fn treatment_contains(&self, t: usize, points: &[usize]) -> bool {
        points
            .iter()
            .all(|&p| self.treatments[t][self.point_factor(p)] == self.point_level(p))
    }

    /// Treatments containing every point in `points`.
    pub fn covering_treatments(&self, points: &[usize]) -> Vec<usize> {
        (0..self.treatments.len())
            .filter(|&t| self.treatment_contains(t, points))
            .collect()
    }

    /// True when every combination of factor levels is a treatment.
    pub fn is_completely_crossed(&self) -> bool {
        let full: usize = self.factors.iter().map(|f| f.levels.len()).product();
        // treatments are distinct by construction
        self.treatments.len() == full
    }

    /// Applies a factor-point-specific renaming of outcomes.
    ///
    /// Wherever `point` occurs in a treatment, outcome `o` of the variable
    /// paired with the point's factor is renamed to outcome `perm[o]`.
    pub fn relabel_at_point(&self, point: &FactorPoint, perm: &[usize]) -> Result<SelectiveSystem, ModelError> {
        let id = self.lookup_point(point)?;
        let f = self.point_factor(id);
        let level = self.point_level(id);
        let m = self.variables[f].outcomes.len();
        let mut seen = vec![false; m];
        if perm.len() != m || perm.iter().any(|&p| p >= m || std::mem::replace(&mut seen[p], true)) {
            return Err(ModelError::NotABijection {
                variable: self.variables[f].name.clone(),
                size: m,
            });
        }
        let distributions = self
            .distributions
            .iter()
            .zip(&self.treatments)
            .map(|(pmf, levels)| {
                if levels[f] == level {
                    pmf.permute_axis(f, perm)
                } else {
                    pmf.clone()
                }
            })
            .collect();
        Ok(Self::from_indexed(
            self.factors.clone(),
            self.variables.clone(),
            self.treatments.clone(),
            distributions,
        ))
    }

    /// Same system with treatments (and their tables) reordered: position `i`
    /// of the result holds treatment `order[i]`.
    pub fn reorder_treatments(&self, order: &[usize]) -> SelectiveSystem {
        Self::from_indexed(
            self.factors.clone(),
            self.variables.clone(),
            order.iter().map(|&i| self.treatments[i].clone()).collect(),
            order.iter().map(|&i| self.distributions[i].clone()).collect(),
        )
    }

    pub(crate) fn with_parts(
        factors: Vec<Factor>,
        variables: Vec<Variable>,
        treatments: Vec<Vec<usize>>,
        distributions: Vec<JointPmf>,
    ) -> Self {
        Self::from_indexed(factors, variables, treatments, distributions)
    }
}

/// Checks every structural and numeric invariant of a would-be system.
pub fn validate_parts(
    factors: &[Factor],
    variables: &[Variable],
    treatments: &[Treatment],
    distributions: &[JointPmf],
    eps_prob: f64,
) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    if factors.is_empty() {
        errors.push(ValidationError::NoFactors);
    }
    let mut factor_names = BTreeSet::new();
    for f in factors {
        if !factor_names.insert(f.name.as_str()) {
            errors.push(ValidationError::DuplicateFactor { factor: f.name.clone() });
        }
        if f.levels.is_empty() {
            errors.push(ValidationError::EmptyFactor { factor: f.name.clone() });
        }
        let mut seen = BTreeSet::new();
        for l in &f.levels {
            if !seen.insert(l) {
                errors.push(ValidationError::DuplicateLevel {
                    factor: f.name.clone(),
                    level: l.clone(),
                });
            }
        }
    }
    let mut var_names = BTreeSet::new();
    for v in variables {
        if !var_names.insert(v.name.as_str()) {
            errors.push(ValidationError::DuplicateVariable {
                variable: v.name.clone(),
            });
        }
        if v.outcomes.is_empty() {
            errors.push(ValidationError::EmptyOutcomes {
                variable: v.name.clone(),
            });
        }
        let mut seen = BTreeSet::new();
        for o in &v.outcomes {
            if !seen.insert(o) {
                errors.push(ValidationError::DuplicateOutcome {
                    variable: v.name.clone(),
                    outcome: o.clone(),
                });
            }
        }
        if let Some(nv) = &v.numeric_values {
            if nv.len() != v.outcomes.len() {
                errors.push(ValidationError::NumericLength {
                    variable: v.name.clone(),
                    expected: v.outcomes.len(),
                    got: nv.len(),
                });
            }
        }
    }
    if factors.len() != variables.len() {
        errors.push(ValidationError::NotBijective {
            factors: factors.len(),
            variables: variables.len(),
        });
    }
    if treatments.is_empty() {
        errors.push(ValidationError::NoTreatments);
    }
    validate_treatments(factors, treatments, &mut errors);
    if treatments.len() != distributions.len() {
        errors.push(ValidationError::DistributionCount {
            treatments: treatments.len(),
            distributions: distributions.len(),
        });
    }
    let names: Vec<String> = variables.iter().map(|v| v.name.clone()).collect();
    let dims: Vec<usize> = variables.iter().map(|v| v.outcomes.len()).collect();
    for (t, pmf) in distributions.iter().enumerate() {
        if pmf.variables() != names.as_slice() {
            errors.push(ValidationError::PmfVariables {
                treatment: t,
                expected: names.clone(),
                got: pmf.variables().to_vec(),
            });
            continue;
        }
        if pmf.dims() != dims.as_slice() {
            errors.push(ValidationError::PmfShape {
                treatment: t,
                expected: dims.clone(),
                got: pmf.dims().to_vec(),
            });
            continue;
        }
        validate_pmf(t, pmf, eps_prob, &mut errors);
    }
    errors
}

pub(crate) fn validate_treatments(factors: &[Factor], treatments: &[Treatment], errors: &mut Vec<ValidationError>) {
    let mut first_seen: HashMap<&Treatment, usize> = HashMap::new();
    for (t, tr) in treatments.iter().enumerate() {
        for name in tr.0.keys() {
            if !factors.iter().any(|f| &f.name == name) {
                errors.push(ValidationError::UnknownFactor {
                    treatment: t,
                    factor: name.clone(),
                });
            }
        }
        for f in factors {
            match tr.level(&f.name) {
                None => errors.push(ValidationError::MissingFactor {
                    treatment: t,
                    factor: f.name.clone(),
                }),
                Some(l) if f.level_index(l).is_none() => errors.push(ValidationError::UnknownLevel {
                    treatment: t,
                    factor: f.name.clone(),
                    level: l.to_string(),
                }),
                Some(_) => {}
            }
        }
        if let Some(&first) = first_seen.get(tr) {
            errors.push(ValidationError::DuplicateTreatment { treatment: t, first });
        } else {
            first_seen.insert(tr, t);
        }
    }
}

fn validate_pmf(t: usize, pmf: &JointPmf, eps_prob: f64, errors: &mut Vec<ValidationError>) {
    if pmf.probs().iter().any(|p| !p.is_finite()) {
        errors.push(ValidationError::NonFiniteProbability { treatment: t });
        return;
    }
    if let Some(&value) = pmf.probs().iter().find(|&&p| p < 0.0) {
        errors.push(ValidationError::NegativeProbability { treatment: t, value });
    }
    let total = match pmf.exact() {
        Some(exact) => {
            let sum: BigRational = exact.iter().sum();
            let off = rational_to_f64(&(sum.clone() - BigRational::from_integer(1.into())).abs());
            if off > eps_prob {
                Some(rational_to_f64(&sum))
            } else {
                None
            }
        }
        None => {
            let total = pmf.total();
            ((total - 1.0).abs() > eps_prob).then_some(total)
        }
    };
    if let Some(total) = total {
        errors.push(ValidationError::NotNormalized { treatment: t, total });
    }
}

/// Re-checks a constructed system at tolerance `eps_prob`; never fails.
pub fn validate_system(system: &SelectiveSystem, eps_prob: f64) -> Vec<ValidationError> {
    validate_parts(
        &system.factors,
        &system.variables,
        &system.treatments(),
        &system.distributions,
        eps_prob,
    )
}

/// Rewrites an arbitrary diagram into bijective form.
///
/// Variable `i` gets a new factor named `<variable>*` whose points are the
/// distinct subtreatments restricted to the factors influencing it, labelled
/// by the sorted `factor=level` pairs joined with `;`. A variable influenced
/// by nothing gets the single point [`DUMMY_LEVEL`]. Points are listed in
/// order of first appearance in `treatments`.
pub fn canonical_rearrangement(
    factors: &[Factor],
    variables: &[Variable],
    diagram: &Diagram,
    treatments: &[Treatment],
    distributions: &[JointPmf],
) -> Result<SelectiveSystem, ModelError> {
    for (v, fs) in &diagram.influences {
        if !variables.iter().any(|x| &x.name == v) {
            return Err(ModelError::UnknownVariable(v.clone()));
        }
        for f in fs {
            if !factors.iter().any(|x| &x.name == f) {
                return Err(ModelError::UnknownFactor(f.clone()));
            }
        }
    }
    let mut seen = BTreeSet::new();
    for v in variables {
        if !seen.insert(&v.name) {
            return Err(ModelError::DuplicateVariable(v.name.clone()));
        }
        if !diagram.influences.contains_key(&v.name) {
            return Err(ModelError::MissingFromDiagram(v.name.clone()));
        }
    }
    let mut errors = Vec::new();
    validate_treatments(factors, treatments, &mut errors);
    if !errors.is_empty() {
        return Err(ModelError::Invalid(errors));
    }

    let mut new_factors = Vec::with_capacity(variables.len());
    let mut new_treatments: Vec<BTreeMap<String, String>> = vec![BTreeMap::new(); treatments.len()];
    for v in variables {
        let influencing = &diagram.influences[&v.name];
        let name = format!("{}*", v.name);
        let mut levels: Vec<String> = Vec::new();
        for (t, tr) in treatments.iter().enumerate() {
            let label = if influencing.is_empty() {
                DUMMY_LEVEL.to_string()
            } else {
                // BTreeSet iteration is sorted by factor name
                influencing
                    .iter()
                    .map(|f| format!("{}={}", f, tr.level(f).unwrap()))
                    .collect::<Vec<_>>()
                    .join(";")
            };
            if !levels.contains(&label) {
                levels.push(label.clone());
            }
            new_treatments[t].insert(name.clone(), label);
        }
        new_factors.push(Factor { name, levels });
    }
    let new_treatments: Vec<Treatment> = new_treatments.into_iter().map(Treatment).collect();
    let mut first: HashMap<&Treatment, usize> = HashMap::new();
    for (t, tr) in new_treatments.iter().enumerate() {
        if let Some(&f) = first.get(tr) {
            return Err(ModelError::CollapsedTreatments(
                treatments[f].to_string(),
                treatments[t].to_string(),
            ));
        }
        first.insert(tr, t);
    }
    SelectiveSystem::new(new_factors, variables.to_vec(), new_treatments, distributions.to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalViolation {
    pub variables: Vec<String>,
    pub treatment_indices: (usize, usize),
    pub treatments: (Treatment, Treatment),
    #[serde(serialize_with = "ser_pmf_probs")]
    pub first: JointPmf,
    #[serde(serialize_with = "ser_pmf_probs")]
    pub second: JointPmf,
    pub discrepancy: f64,
}

fn ser_pmf_probs<S: serde::Serializer>(pmf: &JointPmf, s: S) -> Result<S::Ok, S::Error> {
    pmf.probs().serialize(s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalSelectivityReport {
    pub satisfied: bool,
    pub worst_discrepancy: f64,
    pub tolerance: f64,
    pub subsets_checked: usize,
    pub max_subset_size: usize,
    pub violations: Vec<MarginalViolation>,
}

impl MarginalSelectivityReport {
    pub fn worst(&self) -> Option<&MarginalViolation> {
        self.violations
            .iter()
            .max_by(|a, b| a.discrepancy.total_cmp(&b.discrepancy))
    }
}

/// Complete marginal selectivity over every nonempty variable subset.
pub fn check_marginal_selectivity(system: &SelectiveSystem, tol: f64) -> MarginalSelectivityReport {
    check_marginal_selectivity_capped(system, tol, system.variables.len())
}

/// As [`check_marginal_selectivity`], only for subsets of at most `max_size`
/// variables.
///
/// For each subset `S`, treatments are grouped by their levels on the
/// factors paired with `S`; within a group every pair of `S`-marginals is
/// compared cell by cell.
pub fn check_marginal_selectivity_capped(
    system: &SelectiveSystem,
    tol: f64,
    max_size: usize,
) -> MarginalSelectivityReport {
    let n = system.variables.len();
    let mut worst = 0.0f64;
    let mut violations = Vec::new();
    let mut subsets_checked = 0;
    for mask in 1u64..(1u64 << n) {
        if mask.count_ones() as usize > max_size {
            continue;
        }
        subsets_checked += 1;
        let positions: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for t in 0..system.num_treatments() {
            let key = positions.iter().map(|&i| system.treatments[t][i]).collect();
            groups.entry(key).or_default().push(t);
        }
        for members in groups.values().filter(|m| m.len() > 1) {
            let margins: Vec<JointPmf> = members
                .iter()
                .map(|&t| system.distributions[t].marginal_positions(&positions))
                .collect();
            for a in 0..members.len() {
                for b in a + 1..members.len() {
                    let d = margins[a].max_abs_diff(&margins[b]);
                    worst = worst.max(d);
                    if d > tol {
                        violations.push(MarginalViolation {
                            variables: margins[a].variables().to_vec(),
                            treatment_indices: (members[a], members[b]),
                            treatments: (system.treatment(members[a]), system.treatment(members[b])),
                            first: margins[a].clone(),
                            second: margins[b].clone(),
                            discrepancy: d,
                        });
                    }
                }
            }
        }
    }
    MarginalSelectivityReport {
        satisfied: worst <= tol,
        worst_discrepancy: worst,
        tolerance: tol,
        subsets_checked,
        max_subset_size: max_size.min(n),
        violations,
    }
}
