//! The diversity test.
//!
//! Each factor-point variable is mapped onto classes `1..=s`. The diversity
//! of an ordered `s`-tuple of points is `Pr[R_1 = 1, ..., R_s = s]`. For jointly
//! distributed variables it obeys the simplicial inequality, which chains
//! into `D(root) <= sum of D(face)` over every polyhedral set of faces built
//! from the root by apex substitutions.

use std::collections::{BTreeMap, HashMap, HashSet};

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chains::Design;
use crate::exact::{rational_from_f64, rational_to_f64, rational_to_string};
use crate::lft::SolveMode;
use crate::model::{FactorPoint, JointPmf, ModelError, SelectiveSystem};
use crate::par::{map_slice, Execution};

pub const DEFAULT_DEPTH: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiversityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("partition: {0}")]
    Partition(String),
    #[error("expected {expected} variables, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("marginal selectivity violated for ({points}): diversity values spread by {spread:.3e}")]
    MarginalDisagreement { points: String, spread: f64 },
    #[error("depth must be at least 1")]
    Depth,
}

/// Class assignment (1-based) of every outcome, per factor point.
///
/// Lookup order: `by_point` (keyed `level^factor`), then `by_variable`, then
/// outcome labels that are themselves the integers `1..=s`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub s: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_variable: BTreeMap<String, BTreeMap<String, usize>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_point: BTreeMap<String, BTreeMap<String, usize>>,
    #[serde(default)]
    pub allow_empty_classes: bool,
}

impl Partition {
    /// Outcome labels `"1"..="s"` are their own classes.
    pub fn identity(s: usize) -> Self {
        Partition {
            s,
            ..Default::default()
        }
    }

    /// Two classes: `positive` outcomes are class 2, the rest class 1.
    pub fn from_positive(system: &SelectiveSystem, positive: &[String]) -> Self {
        let by_variable = system
            .variables()
            .iter()
            .map(|v| {
                let map = v
                    .outcomes
                    .iter()
                    .map(|o| (o.clone(), if positive.contains(o) { 2 } else { 1 }))
                    .collect();
                (v.name.clone(), map)
            })
            .collect();
        Partition {
            s: 2,
            by_variable,
            by_point: BTreeMap::new(),
            allow_empty_classes: true,
        }
    }

    /// Class (1-based) of every outcome of the variable at point `p`.
    pub fn classes_for(&self, system: &SelectiveSystem, p: usize) -> Result<Vec<usize>, DiversityError> {
        let point = system.point(p);
        let var = &system.variables()[system.point_factor(p)];
        let map = self
            .by_point
            .get(&point.to_string())
            .or_else(|| self.by_variable.get(&var.name));
        let mut classes = Vec::with_capacity(var.outcomes.len());
        for o in &var.outcomes {
            let class = match map {
                Some(m) => *m
                    .get(o)
                    .ok_or_else(|| DiversityError::Partition(format!("outcome {o:?} of {} has no class", point)))?,
                None => o.parse::<usize>().map_err(|_| {
                    DiversityError::Partition(format!(
                        "no class map for {} and outcome {o:?} is not a class number",
                        point
                    ))
                })?,
            };
            if class == 0 || class > self.s {
                return Err(DiversityError::Partition(format!(
                    "class {class} for outcome {o:?} of {} outside 1..={}",
                    point, self.s
                )));
            }
            classes.push(class);
        }
        if let Some(m) = map {
            if let Some(extra) = m.keys().find(|k| !var.outcomes.contains(k)) {
                return Err(DiversityError::Partition(format!(
                    "unknown outcome {extra:?} in class map for {point}"
                )));
            }
        }
        if !self.allow_empty_classes {
            if let Some(c) = (1..=self.s).find(|c| !classes.contains(c)) {
                return Err(DiversityError::Partition(format!(
                    "class {c} is empty for {point}; set allow_empty_classes to permit this"
                )));
            }
        }
        Ok(classes)
    }
}

/// `Pr[class(slot i) = i + 1 for every slot]`; `classes[i]` maps the outcomes
/// of the `i`-th variable of `joint`.
pub fn diversity_value(joint: &JointPmf, classes: &[Vec<usize>]) -> Result<f64, DiversityError> {
    check_arity(joint, classes)?;
    Ok(pattern_cells(joint, classes).map(|k| joint.probs()[k]).sum())
}

pub fn diversity_value_exact(joint: &JointPmf, classes: &[Vec<usize>]) -> Result<BigRational, DiversityError> {
    check_arity(joint, classes)?;
    let cells = joint.exact_or_decimal();
    Ok(pattern_cells(joint, classes).map(|k| &cells[k]).sum())
}

fn check_arity(joint: &JointPmf, classes: &[Vec<usize>]) -> Result<(), DiversityError> {
    if joint.dims().len() != classes.len() {
        return Err(DiversityError::Arity {
            expected: classes.len(),
            got: joint.dims().len(),
        });
    }
    for (d, c) in joint.dims().iter().zip(classes) {
        if *d != c.len() {
            return Err(DiversityError::Partition(format!(
                "class map covers {} outcomes, variable has {d}",
                c.len()
            )));
        }
    }
    Ok(())
}

fn pattern_cells<'a>(joint: &'a JointPmf, classes: &'a [Vec<usize>]) -> impl Iterator<Item = usize> + 'a {
    (0..joint.len()).filter(move |&k| {
        joint
            .tuple_of(k)
            .iter()
            .enumerate()
            .all(|(slot, &o)| classes[slot][o] == slot + 1)
    })
}

/// An `s`-tuple root and the faces (`s`-tuples) of a polytopal set over it.
/// Faces form a multiset, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PolyhedralSet {
    pub root: Vec<usize>,
    pub faces: Vec<Vec<usize>>,
}

fn apex_faces(face: &[usize], u: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
    (0..face.len()).map(move |i| {
        let mut f = face.to_vec();
        f[i] = u;
        f
    })
}

fn is_realizable(design: &Design, tuple: &[usize]) -> bool {
    let distinct = (0..tuple.len())
        .all(|i| (i + 1..tuple.len()).all(|j| design.factor_of(tuple[i]) != design.factor_of(tuple[j])));
    distinct && design.covers(tuple)
}

/// All polytopal sets over `root` reachable with at most `depth` apex
/// substitutions whose faces, and the root itself, lie inside treatments.
/// Intermediate faces need not be realizable. Sets containing the root face
/// are dropped, their inequality being trivial.
pub fn enumerate_polyhedral_sets(design: &Design, root: &[usize], depth: usize) -> Vec<PolyhedralSet> {
    let mut out = Vec::new();
    if depth == 0 || !is_realizable(design, root) {
        return out;
    }
    let n = design.num_points();
    let mut seen: HashSet<Vec<Vec<usize>>> = HashSet::new();
    let mut frontier: Vec<Vec<Vec<usize>>> = Vec::new();
    for u in 0..n {
        if root.contains(&u) {
            continue;
        }
        let mut faces: Vec<Vec<usize>> = apex_faces(root, u).collect();
        faces.sort();
        if seen.insert(faces.clone()) {
            frontier.push(faces);
        }
    }
    for level in 1..=depth {
        for faces in &frontier {
            if !faces.iter().any(|f| f == root) && faces.iter().all(|f| is_realizable(design, f)) {
                out.push(PolyhedralSet {
                    root: root.to_vec(),
                    faces: faces.clone(),
                });
            }
        }
        if level == depth {
            break;
        }
        let mut next = Vec::new();
        for faces in &frontier {
            for (fi, face) in faces.iter().enumerate() {
                if fi > 0 && faces[fi - 1] == *face {
                    continue;
                }
                for u in 0..n {
                    if face.contains(&u) {
                        continue;
                    }
                    let mut new_faces: Vec<Vec<usize>> = faces
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != fi)
                        .map(|(_, f)| f.clone())
                        .collect();
                    new_faces.extend(apex_faces(face, u));
                    new_faces.sort();
                    if seen.insert(new_faces.clone()) {
                        next.push(new_faces);
                    }
                }
            }
        }
        frontier = next;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiversityViolation {
    pub root: Vec<String>,
    pub faces: Vec<Vec<String>>,
    pub face_values: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_lhs: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_rhs: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiversityReport {
    pub passed: bool,
    pub s: usize,
    pub depth: usize,
    pub mode: SolveMode,
    pub roots_checked: usize,
    pub sets_checked: usize,
    pub violation_count: usize,
    /// Largest violations first, at most `max_reported`.
    pub violations: Vec<DiversityViolation>,
    pub partition: Partition,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiversityOptions {
    pub partition: Partition,
    pub depth: usize,
    pub slack: f64,
    pub agreement_tol: f64,
    pub mode: SolveMode,
    pub max_reported: usize,
    pub execution: Execution,
}

impl DiversityOptions {
    pub fn new(partition: Partition) -> Self {
        DiversityOptions {
            partition,
            depth: DEFAULT_DEPTH,
            slack: crate::chains::DEFAULT_SLACK,
            agreement_tol: crate::chains::DEFAULT_AGREEMENT_TOL,
            mode: SolveMode::Float,
            max_reported: 1000,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug)]
struct TupleValue {
    value: f64,
    exact: Option<BigRational>,
}

fn tuple_value(
    system: &SelectiveSystem,
    classes: &[Vec<usize>],
    tuple: &[usize],
    options: &DiversityOptions,
) -> Result<TupleValue, DiversityError> {
    let positions: Vec<usize> = tuple.iter().map(|&p| system.point_factor(p)).collect();
    let slot_classes: Vec<Vec<usize>> = tuple.iter().map(|&p| classes[p].clone()).collect();
    let covering = system.covering_treatments(tuple);
    let mut values = Vec::with_capacity(covering.len());
    let mut exact = Vec::new();
    for t in covering {
        let m = system.distribution(t).marginal_positions(&positions);
        values.push(diversity_value(&m, &slot_classes)?);
        if options.mode == SolveMode::Rational {
            exact.push(diversity_value_exact(&m, &slot_classes)?);
        }
    }
    let disagreement = |spread: f64| DiversityError::MarginalDisagreement {
        points: tuple
            .iter()
            .map(|&p| system.point(p).to_string())
            .collect::<Vec<_>>()
            .join(" "),
        spread,
    };
    let spread = crate::chains::spread(&values);
    if spread > options.agreement_tol {
        return Err(disagreement(spread));
    }
    let value = values.iter().sum::<f64>() / values.len() as f64;
    let exact = if exact.is_empty() {
        None
    } else {
        let n = BigRational::from_integer(exact.len().into());
        Some(exact.iter().sum::<BigRational>() / n)
    };
    Ok(TupleValue { value, exact })
}

/// Ordered `s`-tuples of points lying in some treatment, each once.
fn realizable_tuples(design: &Design, s: usize) -> Vec<Vec<usize>> {
    let mut set = HashSet::new();
    for t in design.treatments() {
        let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
        while let Some(prefix) = stack.pop() {
            if prefix.len() == s {
                set.insert(prefix);
                continue;
            }
            for &p in t {
                if !prefix.contains(&p) {
                    let mut next = prefix.clone();
                    next.push(p);
                    stack.push(next);
                }
            }
        }
    }
    let mut out: Vec<Vec<usize>> = set.into_iter().collect();
    out.sort();
    out
}

/// Checks the simplicial inequality on every realizable polytopal set of
/// every realizable root, up to `options.depth` substitutions.
pub fn diversity_test(system: &SelectiveSystem, options: &DiversityOptions) -> Result<DiversityReport, DiversityError> {
    let s = options.partition.s;
    if s < 2 {
        return Err(DiversityError::Partition("s must be at least 2".into()));
    }
    if options.depth == 0 {
        return Err(DiversityError::Depth);
    }
    let classes: Vec<Vec<usize>> = (0..system.num_points())
        .map(|p| options.partition.classes_for(system, p))
        .collect::<Result<_, _>>()?;
    let design = Design::of(system);
    let tuples = realizable_tuples(&design, s);
    let computed = map_slice(&tuples, options.execution, |t| {
        tuple_value(system, &classes, t, options)
    });
    let mut table: HashMap<Vec<usize>, TupleValue> = HashMap::with_capacity(tuples.len());
    for (t, v) in tuples.iter().zip(computed) {
        table.insert(t.clone(), v?);
    }
    let slack_exact = rational_from_f64(options.slack).unwrap_or_else(|_| BigRational::zero());

    let per_root = map_slice(&tuples, options.execution, |root| {
        let lhs = &table[root];
        let mut found = Vec::new();
        let mut checked = 0usize;
        // a root of value zero cannot be violated
        if lhs.value <= 0.0 && lhs.exact.as_ref().is_none_or(|e| !e.is_positive()) {
            return (checked, found);
        }
        for set in enumerate_polyhedral_sets(&design, root, options.depth) {
            checked += 1;
            let values: Vec<&TupleValue> = set.faces.iter().map(|f| &table[f]).collect();
            let rhs: f64 = values.iter().map(|v| v.value).sum();
            let (violated, exact_rhs) = match &lhs.exact {
                Some(l) => {
                    let r: BigRational = values.iter().map(|v| v.exact.clone().unwrap()).sum();
                    (l - &r > slack_exact, Some(r))
                }
                None => (lhs.value > rhs + options.slack, None),
            };
            if violated {
                found.push((set, values.iter().map(|v| v.value).collect::<Vec<_>>(), rhs, exact_rhs));
            }
        }
        (checked, found)
    });

    let label = |t: &[usize]| t.iter().map(|&p| system.point(p).to_string()).collect::<Vec<_>>();
    let mut sets_checked = 0;
    let mut violations = Vec::new();
    for (root, (checked, found)) in tuples.iter().zip(per_root) {
        sets_checked += checked;
        let lhs = &table[root];
        for (set, face_values, rhs, exact_rhs) in found {
            violations.push(DiversityViolation {
                root: label(root),
                faces: set.faces.iter().map(|f| label(f)).collect(),
                face_values,
                lhs: lhs.exact.as_ref().map_or(lhs.value, rational_to_f64),
                rhs: exact_rhs.as_ref().map_or(rhs, rational_to_f64),
                exact_lhs: lhs.exact.as_ref().map(rational_to_string),
                exact_rhs: exact_rhs.as_ref().map(rational_to_string),
            });
        }
    }
    let violation_count = violations.len();
    // stable: ties keep enumeration order
    violations.sort_by(|a, b| (b.lhs - b.rhs).total_cmp(&(a.lhs - a.rhs)));
    violations.truncate(options.max_reported);
    let mut warnings = Vec::new();
    if violation_count > options.max_reported {
        warnings.push(format!(
            "{violation_count} violations found; reporting the {} largest",
            options.max_reported
        ));
    }
    Ok(DiversityReport {
        passed: violation_count == 0,
        s,
        depth: options.depth,
        mode: options.mode,
        roots_checked: tuples.len(),
        sets_checked,
        violation_count,
        violations,
        partition: options.partition.clone(),
        warnings,
    })
}

/// Polytopal sets over a root given as factor points.
pub fn polyhedral_sets_over(
    system: &SelectiveSystem,
    root: &[FactorPoint],
    depth: usize,
) -> Result<Vec<Vec<Vec<FactorPoint>>>, DiversityError> {
    let ids: Vec<usize> = root.iter().map(|p| system.lookup_point(p)).collect::<Result<_, _>>()?;
    let design = Design::of(system);
    Ok(enumerate_polyhedral_sets(&design, &ids, depth)
        .into_iter()
        .map(|set| {
            set.faces
                .iter()
                .map(|f| f.iter().map(|&p| system.point(p)).collect())
                .collect()
        })
        .collect())
}
