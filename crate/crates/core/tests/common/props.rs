//! Property checks driven by a seed, shared by the module suites and the
//! acceptance run. Each returns a description of the first failure.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use selinf::chains::{distance_test, enumerate_chain_ids, evaluate_chain_inequalities, DistanceOptions};
use selinf::diversity::{diversity_test, diversity_value, DiversityOptions, Partition};
use selinf::lft::{coarsen, lft, LftOptions};
use selinf::metrics::{Exponent, MetricSpec, MixtureComponent, PairDistribution, WeightedValue};
use selinf::model::{JointPmf, SelectiveSystem, Variable};
use selinf::montecarlo::random_system_2x2;
use selinf::quadtests::{cosphericity_test, CosphericityOptions};
use selinf::Execution;

use super::{
    exhaustive_chain_violation, pattern_probability, random_feasible_system, random_perm, random_pmf, random_shape,
    random_value_table, rng, Limits,
};

pub type Check = Result<(), String>;

fn random_variable(rng: &mut impl Rng, name: &str, m: usize) -> Variable {
    let labels: Vec<String> = (0..m).map(|o| o.to_string()).collect();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let mut v = Variable::new(name, &refs);
    v.numeric_values = Some((0..m).map(|_| rng.gen_range(-3.0..3.0)).collect());
    v
}

/// One of each metric kind and combinator, with random parameters.
/// Classification sets draw from the labels `0..shared_outcomes`.
pub fn metric_zoo(rng: &mut impl Rng, shared_outcomes: usize) -> Vec<MetricSpec> {
    let positive: Vec<String> = (0..shared_outcomes)
        .filter(|_| rng.gen_bool(0.5))
        .map(|o| o.to_string())
        .collect();
    let classification = MetricSpec::Classification {
        positive,
        per_point: BTreeMap::new(),
    };
    let k = rng.gen_range(1..=4);
    let masses = random_pmf(rng, k, 0.0);
    let separation = MetricSpec::Separation {
        v: masses
            .iter()
            .map(|&p| WeightedValue {
                value: rng.gen_range(-3.0..3.0),
                p,
            })
            .collect(),
    };
    let p = rng.gen_range(1.0..4.0);
    let q = rng.gen_range(0.05..=1.0);
    vec![
        MetricSpec::minkowski(1.0),
        MetricSpec::minkowski(2.0),
        MetricSpec::minkowski(p),
        MetricSpec::Minkowski {
            p: Exponent(f64::INFINITY),
        },
        classification.clone(),
        separation.clone(),
        MetricSpec::CondEntropy,
        MetricSpec::NormCondEntropy,
        MetricSpec::power(q, MetricSpec::minkowski(1.0)),
        MetricSpec::power(q, MetricSpec::CondEntropy),
        MetricSpec::bounded(MetricSpec::minkowski(2.0)),
        MetricSpec::Sum {
            terms: vec![classification.clone(), MetricSpec::reverse(classification.clone())],
        },
        MetricSpec::Max {
            terms: vec![MetricSpec::NormCondEntropy, separation.clone()],
        },
        MetricSpec::Mixture {
            components: vec![
                MixtureComponent {
                    weight: rng.gen_range(0.0..2.0),
                    metric: MetricSpec::minkowski(1.0),
                },
                MixtureComponent {
                    weight: rng.gen_range(0.0..2.0),
                    metric: MetricSpec::CondEntropy,
                },
            ],
        },
        MetricSpec::reverse(classification),
        MetricSpec::reverse(MetricSpec::CondEntropy),
    ]
}

/// Triangle inequality for every metric on every ordering of a random
/// jointly distributed triple.
pub fn metric_triangle(seed: u64) -> Check {
    let mut rng = rng(seed);
    let dims: Vec<usize> = (0..3).map(|_| rng.gen_range(1..=4)).collect();
    let vars: Vec<Variable> = ["X", "Y", "Z"]
        .iter()
        .zip(&dims)
        .map(|(n, &m)| random_variable(&mut rng, n, m))
        .collect();
    let zero = if rng.gen_bool(0.5) { 0.0 } else { 0.4 };
    let cells = random_pmf(&mut rng, dims.iter().product(), zero);
    let joint = JointPmf::new(vec!["X".into(), "Y".into(), "Z".into()], dims, cells).unwrap();
    let pair = |a: usize, b: usize| PairDistribution::from_joint(&joint, &vars, a, b);
    let shared = *joint.dims().iter().min().unwrap();
    for metric in metric_zoo(&mut rng, shared) {
        let d = |a, b| metric.evaluate(&pair(a, b)).unwrap();
        for (x, y, z) in [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)] {
            let (lhs, rhs) = (d(x, z), d(x, y) + d(y, z));
            if lhs > rhs + 1e-12 {
                return Err(format!("{metric:?}: D({x},{z}) = {lhs} > {rhs}"));
            }
        }
    }
    Ok(())
}

/// `D(X, X) = 0` for every metric.
pub fn metric_premetric(seed: u64) -> Check {
    let mut rng = rng(seed);
    let m = rng.gen_range(1..=5);
    let v = random_variable(&mut rng, "X", m);
    let marginal = random_pmf(&mut rng, m, 0.3);
    let mut diag = vec![0.0; m * m];
    for (i, p) in marginal.iter().enumerate() {
        diag[i * m + i] = *p;
    }
    let pair = PairDistribution::new(&v, &v, diag);
    for metric in metric_zoo(&mut rng, m) {
        let d = metric.evaluate(&pair).unwrap();
        if d.abs() > 1e-12 {
            return Err(format!("{metric:?}: D(X, X) = {d}"));
        }
    }
    Ok(())
}

/// Simplicial inequality for `P^(3)` on a random jointly distributed
/// quadruple, every ordered root and its apex.
pub fn simplicial_p3(seed: u64) -> Check {
    let mut rng = rng(seed);
    let dims: Vec<usize> = (0..4).map(|_| rng.gen_range(1..=4)).collect();
    let zero = if rng.gen_bool(0.5) { 0.0 } else { 0.5 };
    let cells = random_pmf(&mut rng, dims.iter().product(), zero);
    let names: Vec<String> = (0..4).map(|i| format!("X{i}")).collect();
    let joint = JointPmf::new(names, dims.clone(), cells).unwrap();
    let classes: Vec<Vec<usize>> = dims
        .iter()
        .map(|&m| (0..m).map(|_| rng.gen_range(1..=3)).collect())
        .collect();
    let d = |t: [usize; 3]| -> Result<f64, String> {
        let m = joint.marginal_positions(&t);
        let slot: Vec<Vec<usize>> = t.iter().map(|&i| classes[i].clone()).collect();
        let value = diversity_value(&m, &slot).map_err(|e| e.to_string())?;
        let oracle = pattern_probability(m.dims(), m.probs(), &slot);
        if (value - oracle).abs() > 1e-12 {
            return Err(format!("diversity {value} differs from direct sum {oracle}"));
        }
        Ok(value)
    };
    for x in 0..4 {
        for y in 0..4 {
            for z in 0..4 {
                let distinct = x != y && y != z && x != z;
                if !distinct {
                    continue;
                }
                let u = 6 - x - y - z;
                let lhs = d([x, y, z])?;
                let rhs = d([u, y, z])? + d([x, u, z])? + d([x, y, u])?;
                if lhs > rhs + 1e-12 {
                    return Err(format!("D({x}{y}{z}) = {lhs} > {rhs} with apex {u}"));
                }
            }
        }
    }
    Ok(())
}

/// Irreducible chains up to 6 points reach the same verdict as every
/// treatment-realizable closed walk up to 6 points.
pub fn chain_equivalence(seed: u64) -> Check {
    let mut rng = rng(seed);
    let limits = Limits {
        factors: (2, 4),
        levels: (2, 3),
        outcomes: (1, 1),
        max_hidden_cells: 1,
        drop: rng.gen_range(0.0..0.6),
    };
    let shape = loop {
        let s = random_shape(&mut rng, &limits);
        if s.num_points() <= 8 {
            break s;
        }
    };
    let design = shape.design();
    let values = random_value_table(&mut rng, &design);
    let enumeration = enumerate_chain_ids(&design, 6);
    let found = evaluate_chain_inequalities(
        &enumeration.chains,
        |a, b| values[&(a, b)],
        1e-12,
        Execution::Sequential,
    );
    let oracle = exhaustive_chain_violation(&design, &values, 6, 1e-12);
    if found.is_empty() == !oracle {
        Ok(())
    } else {
        Err(format!(
            "levels {:?}, {} treatments: irreducible says {}, exhaustive says {}",
            shape.levels,
            shape.treatments.len(),
            !found.is_empty(),
            oracle
        ))
    }
}

fn small_limits() -> Limits {
    Limits {
        factors: (2, 3),
        levels: (2, 3),
        outcomes: (2, 3),
        max_hidden_cells: 256,
        drop: 0.3,
    }
}

/// Feasibility survives grouping outcomes of a variable.
pub fn coarsening_monotone(seed: u64) -> Check {
    let mut rng = rng(seed);
    let (_, system) = random_feasible_system(&mut rng, &small_limits());
    let before = lft(&system, &LftOptions::default()).map_err(|e| e.to_string())?;
    if !before.feasible {
        return Err(format!("constructed system judged infeasible: {}", before.diagnostics));
    }
    let mut groupings = BTreeMap::new();
    for v in system.variables() {
        if v.outcomes.len() < 2 || rng.gen_bool(0.4) {
            continue;
        }
        let mut labels = v.outcomes.clone();
        labels.shuffle(&mut rng);
        let cut = rng.gen_range(1..labels.len());
        groupings.insert(v.name.clone(), vec![labels[..cut].to_vec(), labels[cut..].to_vec()]);
    }
    let coarse = coarsen(&system, &groupings, &BTreeMap::new(), 1e-12).map_err(|e| e.to_string())?;
    let after = lft(&coarse, &LftOptions::default()).map_err(|e| e.to_string())?;
    if after.feasible {
        Ok(())
    } else {
        Err(format!(
            "infeasible after grouping {groupings:?}: {}",
            after.diagnostics
        ))
    }
}

fn random_partition(rng: &mut impl Rng, system: &SelectiveSystem, s: usize) -> Partition {
    let mut by_point = BTreeMap::new();
    for p in 0..system.num_points() {
        let var = &system.variables()[system.point_factor(p)];
        let map = var.outcomes.iter().map(|o| (o.clone(), rng.gen_range(1..=s))).collect();
        by_point.insert(system.point(p).to_string(), map);
    }
    Partition {
        s,
        by_variable: BTreeMap::new(),
        by_point,
        allow_empty_classes: true,
    }
}

/// A system built from a hidden joint distribution passes the LFT and every
/// necessary test.
pub fn feasible_passes_all(seed: u64) -> Check {
    let mut rng = rng(seed);
    let (_, system) = random_feasible_system(&mut rng, &small_limits());
    let verdict = lft(&system, &LftOptions::default()).map_err(|e| e.to_string())?;
    if !verdict.feasible {
        return Err(format!("LFT: {}", verdict.diagnostics));
    }
    let options = DistanceOptions {
        max_len: 6,
        execution: Execution::Sequential,
        ..Default::default()
    };
    let shared = system.variables().iter().map(|v| v.outcomes.len()).min().unwrap();
    for metric in metric_zoo(&mut rng, shared) {
        let report = distance_test(&system, &metric, &options).map_err(|e| e.to_string())?;
        if let Some(v) = report.violations.first() {
            return Err(format!("{metric:?}: chain {} with {} > {}", v.chain, v.lhs, v.rhs));
        }
    }
    let cospher = cosphericity_test(
        &system,
        &CosphericityOptions {
            execution: Execution::Sequential,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    if let Some(v) = cospher.violations.first() {
        return Err(format!("cosphericity: {:?} with {} > {}", v.points, v.lhs, v.rhs));
    }
    let s = if system.factors().len() >= 3 && rng.gen_bool(0.5) {
        3
    } else {
        2
    };
    let options = DiversityOptions {
        execution: Execution::Sequential,
        ..DiversityOptions::new(random_partition(&mut rng, &system, s))
    };
    let diversity = diversity_test(&system, &options).map_err(|e| e.to_string())?;
    if let Some(v) = diversity.violations.first() {
        return Err(format!("diversity: root {:?} with {} > {}", v.root, v.lhs, v.rhs));
    }
    Ok(())
}

/// Renaming outcomes at random factor points leaves the LFT verdict alone.
/// Returns the verdict so callers can check both kinds occur.
pub fn relabeling_invariant(seed: u64) -> Result<bool, String> {
    let mut rng = rng(seed);
    let system = match seed % 3 {
        0 => random_feasible_system(&mut rng, &small_limits()).1,
        _ => random_system_2x2(&mut rng),
    };
    let before = lft(&system, &LftOptions::default()).map_err(|e| e.to_string())?;
    let mut renamed = system.clone();
    for p in 0..system.num_points() {
        if rng.gen_bool(0.6) {
            let m = system.variables()[system.point_factor(p)].outcomes.len();
            let perm = random_perm(&mut rng, m);
            renamed = renamed
                .relabel_at_point(&system.point(p), &perm)
                .map_err(|e| e.to_string())?;
        }
    }
    let after = lft(&renamed, &LftOptions::default()).map_err(|e| e.to_string())?;
    if before.feasible == after.feasible {
        Ok(before.feasible)
    } else {
        Err(format!(
            "verdict changed from {} to {} after renaming",
            before.feasible, after.feasible
        ))
    }
}
