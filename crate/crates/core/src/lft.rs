//! The linear feasibility test.
//!
//! One unknown `Q` per joint assignment of an outcome to every factor point.
//! For every treatment and every joint outcome of the variables, the `Q`s
//! whose coordinates at the treatment's points equal that outcome must sum to
//! the observed probability. The diagram holds iff this system has a
//! nonnegative solution.

use std::collections::BTreeMap;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{rational_from_f64, rational_to_f64, rational_to_string};
use crate::model::{
    check_marginal_selectivity, Factor, FactorPoint, JointPmf, MarginalViolation, ModelError, SelectiveSystem, Variable,
};
use crate::simplex::{phase_one, IterationLimit};

pub const DEFAULT_EPS_LP: f64 = 1e-8;
pub const DEFAULT_MAX_VARS: u64 = 10_000_000;
pub const DEFAULT_MAX_CELLS: u64 = 50_000_000;
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    #[default]
    Float,
    Rational,
}

impl FromStr for SolveMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "float" => Ok(SolveMode::Float),
            "rational" | "exact" => Ok(SolveMode::Rational),
            other => Err(format!("unknown mode {other:?}, expected float or rational")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LftError {
    #[error(
        "problem too large: {q_vars} Q-variables and {rows} rows ({cells} tableau cells); \
         limits are {max_vars} variables and {max_cells} cells. Coarsen outcomes or factor levels first"
    )]
    TooLarge {
        q_vars: u128,
        rows: u128,
        cells: u128,
        max_vars: u64,
        max_cells: u64,
    },
    #[error("undecided after {iterations} simplex iterations: {reason}")]
    Undecided { iterations: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Outcome counts of the per-point coordinates, factor-major, level-minor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QLayout {
    pub coordinates: Vec<FactorPoint>,
    pub radices: Vec<usize>,
}

impl QLayout {
    pub fn of(system: &SelectiveSystem) -> QLayout {
        let mut coordinates = Vec::new();
        let mut radices = Vec::new();
        for (f, v) in system.factors().iter().zip(system.variables()) {
            for level in &f.levels {
                coordinates.push(FactorPoint::new(&f.name, level));
                radices.push(v.outcomes.len());
            }
        }
        QLayout { coordinates, radices }
    }

    pub fn count(&self) -> u128 {
        self.radices.iter().fold(1u128, |acc, &r| acc.saturating_mul(r as u128))
    }

    /// Outcome index per coordinate for canonical Q-index `q` (last coordinate fastest).
    pub fn assignment(&self, mut q: usize) -> Vec<usize> {
        let mut out = vec![0; self.radices.len()];
        for (slot, &r) in out.iter_mut().zip(&self.radices).rev() {
            *slot = q % r;
            q /= r;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub num_vars: usize,
    /// Column indices with coefficient 1, one row per (treatment, joint outcome).
    pub rows: Vec<Vec<usize>>,
    pub rhs: Vec<f64>,
    pub rhs_exact: Option<Vec<BigRational>>,
    /// (treatment index, outcome tuple) per row.
    pub row_labels: Vec<(usize, Vec<usize>)>,
    pub layout: QLayout,
    /// Canonical Q-index of each column.
    pub var_index: Vec<usize>,
    pub outcome_labels: Vec<Vec<String>>,
}

impl LpProblem {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Outcome index per coordinate for column `j`.
    pub fn assignment(&self, j: usize) -> Vec<usize> {
        self.layout.assignment(self.var_index[j])
    }

    /// Same problem with columns reordered: new column `j` is old column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> LpProblem {
        let mut new_of_old = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            new_of_old[old] = new;
        }
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut cols: Vec<usize> = r.iter().map(|&c| new_of_old[c]).collect();
                cols.sort_unstable();
                cols
            })
            .collect();
        LpProblem {
            rows,
            var_index: perm.iter().map(|&old| self.var_index[old]).collect(),
            ..self.clone()
        }
    }

    /// Largest absolute violation of any row by `x`.
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| (row.iter().map(|&j| x[j]).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_residual_exact(&self, x: &[BigRational], rhs: &[BigRational]) -> BigRational {
        let mut worst = BigRational::zero();
        for (row, b) in self.rows.iter().zip(rhs) {
            let s: BigRational = row.iter().map(|&j| &x[j]).sum();
            let d = (s - b).abs();
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    fn exact_rhs(&self) -> Vec<BigRational> {
        match &self.rhs_exact {
            Some(r) => r.clone(),
            None => self
                .rhs
                .iter()
                .map(|&p| rational_from_f64(p).unwrap_or_else(|_| BigRational::zero()))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LftOptions {
    pub eps_lp: f64,
    pub mode: SolveMode,
    pub max_vars: u64,
    pub max_cells: u64,
    pub max_iterations: usize,
    /// Tolerance for the marginal-selectivity pre-check.
    pub marginal_tol: f64,
}

impl Default for LftOptions {
    fn default() -> Self {
        LftOptions {
            eps_lp: DEFAULT_EPS_LP,
            mode: SolveMode::Float,
            max_vars: DEFAULT_MAX_VARS,
            max_cells: DEFAULT_MAX_CELLS,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            marginal_tol: DEFAULT_EPS_LP,
        }
    }
}

impl LftOptions {
    pub fn rational() -> Self {
        LftOptions {
            mode: SolveMode::Rational,
            ..Default::default()
        }
    }
}

/// Q-values by column; `exact` is filled in rational mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub values: Vec<f64>,
    pub exact: Option<Vec<BigRational>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    pub mode: SolveMode,
    #[serde(skip)]
    pub witness: Option<Witness>,
    pub max_residual: Option<f64>,
    #[serde(serialize_with = "ser_opt_rational")]
    pub exact_max_residual: Option<BigRational>,
    pub phase_one_objective: Option<f64>,
    #[serde(serialize_with = "ser_opt_rational")]
    pub exact_phase_one_objective: Option<BigRational>,
    pub iterations: usize,
    pub num_vars: usize,
    pub num_rows: usize,
    pub witness_has_zero_entries: Option<bool>,
    pub diagnostics: String,
    pub marginal_violation: Option<MarginalViolation>,
}

fn ser_opt_rational<S: serde::Serializer>(v: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(r) => s.serialize_some(&rational_to_string(r)),
        None => s.serialize_none(),
    }
}

impl FeasibilityVerdict {
    /// Nonzero witness entries keyed by comma-joined outcome labels, one per
    /// coordinate of [`LpProblem::layout`].
    pub fn witness_table(&self, lp: &LpProblem) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let Some(w) = &self.witness else {
            return out;
        };
        for j in 0..lp.num_vars {
            let text = match &w.exact {
                Some(e) if !e[j].is_zero() => rational_to_string(&e[j]),
                Some(_) => continue,
                None if w.values[j] != 0.0 => format!("{}", w.values[j]),
                None => continue,
            };
            let key = lp
                .assignment(j)
                .iter()
                .zip(&lp.outcome_labels)
                .map(|(&o, labels)| labels[o].as_str())
                .collect::<Vec<_>>()
                .join(",");
            out.insert(key, text);
        }
        out
    }
}

fn check_size(q_vars: u128, rows: u128, options: &LftOptions) -> Result<(), LftError> {
    let cells = q_vars.saturating_add(1).saturating_mul(rows);
    if q_vars > options.max_vars as u128 || cells > options.max_cells as u128 {
        return Err(LftError::TooLarge {
            q_vars,
            rows,
            cells,
            max_vars: options.max_vars,
            max_cells: options.max_cells,
        });
    }
    Ok(())
}

/// Builds the equality system with the default size limits.
pub fn build_lp(system: &SelectiveSystem) -> Result<LpProblem, LftError> {
    build_lp_with(system, &LftOptions::default())
}

pub fn build_lp_with(system: &SelectiveSystem, options: &LftOptions) -> Result<LpProblem, LftError> {
    let layout = QLayout::of(system);
    let dims: Vec<usize> = system.variables().iter().map(|v| v.outcomes.len()).collect();
    let cells_per_treatment: usize = dims.iter().product();
    let rows_total = system.num_treatments() as u128 * cells_per_treatment as u128;
    check_size(layout.count(), rows_total, options)?;
    let num_vars = layout.count() as usize;
    let num_rows = rows_total as usize;

    // stride of each coordinate inside the canonical Q-index
    let mut strides = vec![0usize; layout.radices.len()];
    let mut acc = 1;
    for (s, &r) in strides.iter_mut().zip(&layout.radices).rev() {
        *s = acc;
        acc *= r;
    }

    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); num_rows];
    let mut rhs = Vec::with_capacity(num_rows);
    let all_exact = system.distributions().iter().all(|d| d.exact().is_some());
    let mut rhs_exact = all_exact.then(|| Vec::with_capacity(num_rows));
    let mut row_labels = Vec::with_capacity(num_rows);
    for t in 0..system.num_treatments() {
        let pmf = system.distribution(t);
        for cell in 0..cells_per_treatment {
            rhs.push(pmf.probs()[cell]);
            if let (Some(r), Some(e)) = (rhs_exact.as_mut(), pmf.exact()) {
                r.push(e[cell].clone());
            }
            row_labels.push((t, pmf.tuple_of(cell)));
        }
    }
    // each column hits exactly one row per treatment
    let points: Vec<Vec<usize>> = (0..system.num_treatments())
        .map(|t| system.treatment_points(t))
        .collect();
    for q in 0..num_vars {
        for (t, pts) in points.iter().enumerate() {
            let mut cell = 0;
            for (&p, &d) in pts.iter().zip(&dims) {
                cell = cell * d + (q / strides[p]) % layout.radices[p];
            }
            rows[t * cells_per_treatment + cell].push(q);
        }
    }
    Ok(LpProblem {
        num_vars,
        rows,
        rhs,
        rhs_exact,
        row_labels,
        layout,
        var_index: (0..num_vars).collect(),
        outcome_labels: system
            .factors()
            .iter()
            .zip(system.variables())
            .flat_map(|(f, v)| std::iter::repeat_n(v.outcomes.clone(), f.levels.len()))
            .collect(),
    })
}

/// Phase-I simplex on `lp`. Float mode declares feasibility when the
/// objective is at most `eps_lp` and the witness passes the residual check;
/// rational mode requires an objective of exactly zero.
pub fn solve_feasibility(
    lp: &LpProblem,
    eps_lp: f64,
    mode: SolveMode,
    max_iterations: usize,
) -> Result<FeasibilityVerdict, LftError> {
    let undecided = |IterationLimit { iterations }| LftError::Undecided {
        iterations,
        reason: "iteration cap reached".to_string(),
    };
    let base = FeasibilityVerdict {
        feasible: false,
        mode,
        witness: None,
        max_residual: None,
        exact_max_residual: None,
        phase_one_objective: None,
        exact_phase_one_objective: None,
        iterations: 0,
        num_vars: lp.num_vars,
        num_rows: lp.num_rows(),
        witness_has_zero_entries: None,
        diagnostics: String::new(),
        marginal_violation: None,
    };
    match mode {
        SolveMode::Float => {
            let res = phase_one::<f64>(lp.num_vars, &lp.rows, &lp.rhs, max_iterations).map_err(undecided)?;
            let objective = res.objective.max(0.0);
            if objective > eps_lp {
                return Ok(FeasibilityVerdict {
                    phase_one_objective: Some(objective),
                    iterations: res.iterations,
                    diagnostics: format!(
                        "no nonnegative solution: minimal total constraint violation {objective:.6e} exceeds {eps_lp:e}"
                    ),
                    ..base
                });
            }
            let residual = lp.max_residual(&res.solution);
            let most_negative = res.solution.iter().cloned().fold(0.0, f64::min);
            if residual > eps_lp || most_negative < -eps_lp {
                return Err(LftError::Undecided {
                    iterations: res.iterations,
                    reason: format!(
                        "witness check failed (residual {residual:e}, min entry {most_negative:e}); retry in rational mode"
                    ),
                });
            }
            Ok(FeasibilityVerdict {
                feasible: true,
                max_residual: Some(residual),
                phase_one_objective: Some(objective),
                iterations: res.iterations,
                witness_has_zero_entries: Some(res.solution.iter().any(|&v| v.abs() <= eps_lp)),
                diagnostics: format!("feasible: witness residual {residual:.3e}"),
                witness: Some(Witness {
                    values: res.solution,
                    exact: None,
                }),
                ..base
            })
        }
        SolveMode::Rational => {
            let rhs = lp.exact_rhs();
            let res = phase_one::<BigRational>(lp.num_vars, &lp.rows, &rhs, max_iterations).map_err(undecided)?;
            let objective_f = rational_to_f64(&res.objective);
            if !res.objective.is_zero() {
                return Ok(FeasibilityVerdict {
                    phase_one_objective: Some(objective_f),
                    exact_phase_one_objective: Some(res.objective.clone()),
                    iterations: res.iterations,
                    diagnostics: format!(
                        "no nonnegative solution: minimal total constraint violation is exactly {}",
                        rational_to_string(&res.objective)
                    ),
                    ..base
                });
            }
            let exact_residual = lp.max_residual_exact(&res.solution, &rhs);
            let values: Vec<f64> = res.solution.iter().map(rational_to_f64).collect();
            Ok(FeasibilityVerdict {
                feasible: true,
                max_residual: Some(rational_to_f64(&exact_residual)),
                diagnostics: format!(
                    "feasible: exact witness residual {}",
                    rational_to_string(&exact_residual)
                ),
                exact_max_residual: Some(exact_residual),
                phase_one_objective: Some(0.0),
                exact_phase_one_objective: Some(BigRational::zero()),
                iterations: res.iterations,
                witness_has_zero_entries: Some(res.solution.iter().any(|v| v.is_zero())),
                witness: Some(Witness {
                    values,
                    exact: Some(res.solution),
                }),
                ..base
            })
        }
    }
}

/// Marginal-selectivity pre-check, then the LP.
pub fn lft(system: &SelectiveSystem, options: &LftOptions) -> Result<FeasibilityVerdict, LftError> {
    let report = check_marginal_selectivity(system, options.marginal_tol);
    if !report.satisfied {
        let worst = report.worst().cloned();
        let diagnostics = match &worst {
            Some(v) => format!(
                "marginal selectivity violated for ({}) between {} and {} (discrepancy {:.6})",
                v.variables.join(","),
                v.treatments.0,
                v.treatments.1,
                v.discrepancy
            ),
            None => "marginal selectivity violated".to_string(),
        };
        return Ok(FeasibilityVerdict {
            feasible: false,
            mode: options.mode,
            witness: None,
            max_residual: None,
            exact_max_residual: None,
            phase_one_objective: None,
            exact_phase_one_objective: None,
            iterations: 0,
            num_vars: 0,
            num_rows: 0,
            witness_has_zero_entries: None,
            diagnostics,
            marginal_violation: worst,
        });
    }
    let lp = build_lp_with(system, options)?;
    solve_feasibility(&lp, options.eps_lp, options.mode, options.max_iterations)
}

fn check_partition(name: &str, items: &[String], groups: &[Vec<String>]) -> Result<Vec<usize>, ModelError> {
    let bad = |reason: String| ModelError::InvalidPartition {
        name: name.to_string(),
        reason,
    };
    let mut group_of = vec![usize::MAX; items.len()];
    for (g, members) in groups.iter().enumerate() {
        if members.is_empty() {
            return Err(bad(format!("group {g} is empty")));
        }
        for m in members {
            let i = items
                .iter()
                .position(|x| x == m)
                .ok_or_else(|| bad(format!("unknown member {m:?}")))?;
            if group_of[i] != usize::MAX {
                return Err(bad(format!("{m:?} listed twice")));
            }
            group_of[i] = g;
        }
    }
    if let Some(i) = group_of.iter().position(|&g| g == usize::MAX) {
        return Err(bad(format!("{:?} not covered", items[i])));
    }
    Ok(group_of)
}

/// Groups outcomes and/or factor levels.
///
/// Outcomes within a group are summed; the new outcome label joins the
/// members with `|`. Merging factor levels requires every merged combination
/// to be a treatment and all merged treatments to share one coarsened table
/// within `tol`.
pub fn coarsen(
    system: &SelectiveSystem,
    variable_groupings: &BTreeMap<String, Vec<Vec<String>>>,
    factor_groupings: &BTreeMap<String, Vec<Vec<String>>>,
    tol: f64,
) -> Result<SelectiveSystem, ModelError> {
    for v in variable_groupings.keys() {
        if !system.variables().iter().any(|x| &x.name == v) {
            return Err(ModelError::UnknownVariable(v.clone()));
        }
    }
    for f in factor_groupings.keys() {
        if system.factor_index(f).is_none() {
            return Err(ModelError::UnknownFactor(f.clone()));
        }
    }

    let mut variables: Vec<Variable> = system.variables().to_vec();
    let mut distributions: Vec<JointPmf> = system.distributions().to_vec();
    for (axis, var) in system.variables().iter().enumerate() {
        let Some(groups) = variable_groupings.get(&var.name) else {
            continue;
        };
        let group_of = check_partition(&var.name, &var.outcomes, groups)?;
        for d in distributions.iter_mut() {
            *d = d.group_axis(axis, &group_of, groups.len());
        }
        let trivial = groups.iter().all(|g| g.len() == 1);
        variables[axis] = Variable {
            name: var.name.clone(),
            outcomes: groups.iter().map(|g| g.join("|")).collect(),
            numeric_values: if trivial {
                var.numeric_values
                    .as_ref()
                    .map(|nv| groups.iter().map(|g| nv[var.outcome_index(&g[0]).unwrap()]).collect())
            } else {
                None
            },
        };
    }

    let mut factors: Vec<Factor> = system.factors().to_vec();
    let mut level_map: Vec<Vec<usize>> = Vec::new();
    let mut group_sizes: Vec<Vec<usize>> = Vec::new();
    for (fi, f) in system.factors().iter().enumerate() {
        match factor_groupings.get(&f.name) {
            Some(groups) => {
                level_map.push(check_partition(&f.name, &f.levels, groups)?);
                group_sizes.push(groups.iter().map(Vec::len).collect());
                factors[fi] = Factor {
                    name: f.name.clone(),
                    levels: groups.iter().map(|g| g.join("|")).collect(),
                };
            }
            None => {
                level_map.push((0..f.levels.len()).collect());
                group_sizes.push(vec![1; f.levels.len()]);
            }
        }
    }

    let mut merged: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for t in 0..system.num_treatments() {
        let key: Vec<usize> = system
            .treatment_levels(t)
            .iter()
            .enumerate()
            .map(|(f, &l)| level_map[f][l])
            .collect();
        match merged.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(t),
            None => merged.push((key, vec![t])),
        }
    }
    let mut treatments = Vec::with_capacity(merged.len());
    let mut tables = Vec::with_capacity(merged.len());
    for (key, members) in merged {
        let expected: usize = key.iter().enumerate().map(|(f, &g)| group_sizes[f][g]).product();
        if members.len() != expected {
            return Err(ModelError::IllDefinedCoarsening(format!(
                "merged treatment {} covers {} of {} level combinations",
                describe(&factors, &key),
                members.len(),
                expected
            )));
        }
        let first = &distributions[members[0]];
        for &m in &members[1..] {
            let d = first.max_abs_diff(&distributions[m]);
            if d > tol {
                return Err(ModelError::IllDefinedCoarsening(format!(
                    "treatments {} and {} differ by {d:.6} after merging into {}",
                    system.treatment(members[0]),
                    system.treatment(m),
                    describe(&factors, &key)
                )));
            }
        }
        treatments.push(key);
        tables.push(first.clone());
    }
    Ok(SelectiveSystem::with_parts(factors, variables, treatments, tables))
}

fn describe(factors: &[Factor], key: &[usize]) -> String {
    let parts: Vec<String> = factors
        .iter()
        .zip(key)
        .map(|(f, &l)| FactorPoint::new(&f.name, &f.levels[l]).to_string())
        .collect();
    format!("{{{}}}", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Treatment;

    fn crossed_2x2(tables: [[&str; 4]; 4]) -> SelectiveSystem {
        let factors = vec![Factor::new("alpha", &["1", "2"]), Factor::new("beta", &["1", "2"])];
        let vars = vec![Variable::numeric("A", &["0", "1"]), Variable::numeric("B", &["0", "1"])];
        let treatments = [("1", "1"), ("1", "2"), ("2", "1"), ("2", "2")]
            .iter()
            .map(|(a, b)| Treatment::from_pairs(&[("alpha", a), ("beta", b)]))
            .collect();
        let pmfs = tables
            .iter()
            .map(|c| JointPmf::from_strs(&["A", "B"], &[2, 2], c).unwrap())
            .collect();
        SelectiveSystem::new(factors, vars, treatments, pmfs).unwrap()
    }

    #[test]
    fn counts_for_crossed_binary_design() {
        let sys = crossed_2x2([[".25"; 4]; 4]);
        let lp = build_lp(&sys).unwrap();
        assert_eq!(lp.num_vars, 16);
        assert_eq!(lp.num_rows(), 16);
        assert!(lp.rows.iter().all(|r| r.len() == 4));
    }

    #[test]
    fn single_treatment_rows_reproduce_the_pmf() {
        let sys = SelectiveSystem::new(
            vec![Factor::new("alpha", &["1"])],
            vec![Variable::new("A", &["x", "y", "z"])],
            vec![Treatment::from_pairs(&[("alpha", "1")])],
            vec![JointPmf::from_strs(&["A"], &[3], &[".2", ".3", ".5"]).unwrap()],
        )
        .unwrap();
        let lp = build_lp(&sys).unwrap();
        assert_eq!(lp.rows, vec![vec![0], vec![1], vec![2]]);
        let v = solve_feasibility(&lp, 1e-8, SolveMode::Rational, 100).unwrap();
        assert!(v.feasible);
        assert_eq!(v.witness.unwrap().values, vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn independent_system_is_feasible_in_both_modes() {
        let sys = crossed_2x2([[".25"; 4]; 4]);
        for mode in [SolveMode::Float, SolveMode::Rational] {
            let v = lft(
                &sys,
                &LftOptions {
                    mode,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(v.feasible, "{mode:?}");
        }
    }

    #[test]
    fn size_cap_is_actionable() {
        let sys = crossed_2x2([[".25"; 4]; 4]);
        let opts = LftOptions {
            max_vars: 8,
            ..Default::default()
        };
        let err = build_lp_with(&sys, &opts).unwrap_err();
        assert!(err.to_string().contains("Coarsen"));
        assert!(matches!(err, LftError::TooLarge { q_vars: 16, .. }));
    }

    #[test]
    fn permuted_columns_keep_assignments() {
        let sys = crossed_2x2([[".25"; 4]; 4]);
        let lp = build_lp(&sys).unwrap();
        let perm: Vec<usize> = (0..16).rev().collect();
        let p = lp.permute_columns(&perm);
        assert_eq!(p.assignment(0), lp.assignment(15));
        for (a, b) in lp.rows.iter().zip(&p.rows) {
            let mut back: Vec<usize> = b.iter().map(|&c| perm[c]).collect();
            back.sort_unstable();
            assert_eq!(&back, a);
        }
    }

    #[test]
    fn coarsen_rejects_bad_partitions() {
        let sys = crossed_2x2([[".25"; 4]; 4]);
        let mut vg = BTreeMap::new();
        vg.insert("A".to_string(), vec![vec!["0".to_string()]]);
        assert!(coarsen(&sys, &vg, &BTreeMap::new(), 1e-9).is_err());
        vg.insert("A".to_string(), vec![vec!["0".to_string(), "1".to_string()]]);
        let c = coarsen(&sys, &vg, &BTreeMap::new(), 1e-9).unwrap();
        assert_eq!(c.variables()[0].outcomes, vec!["0|1"]);
        assert_eq!(c.variables()[0].numeric_values, None);
    }

    #[test]
    fn merging_levels_needs_identical_tables() {
        let sys = crossed_2x2([
            [".4", ".1", ".1", ".4"],
            [".4", ".1", ".1", ".4"],
            [".25", ".25", ".25", ".25"],
            [".25", ".25", ".25", ".25"],
        ]);
        let mut fg = BTreeMap::new();
        fg.insert("beta".to_string(), vec![vec!["1".to_string(), "2".to_string()]]);
        let c = coarsen(&sys, &BTreeMap::new(), &fg, 1e-9).unwrap();
        assert_eq!(c.num_treatments(), 2);
        assert_eq!(c.factors()[1].levels, vec!["1|2"]);

        fg.clear();
        fg.insert("alpha".to_string(), vec![vec!["1".to_string(), "2".to_string()]]);
        let err = coarsen(&sys, &BTreeMap::new(), &fg, 1e-9).unwrap_err();
        assert!(err.to_string().contains("coarsening ill-defined"));
    }
}
