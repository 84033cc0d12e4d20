//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

pub mod props;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use selinf::chains::Design;
use selinf::model::{Factor, JointPmf, SelectiveSystem, Treatment, Variable};

pub fn proptest_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Levels per factor, outcomes per variable, and treatments as level tuples.
#[derive(Clone, Debug)]
pub struct Shape {
    pub levels: Vec<usize>,
    pub outcomes: Vec<usize>,
    pub treatments: Vec<Vec<usize>>,
}

impl Shape {
    pub fn num_points(&self) -> usize {
        self.levels.iter().sum()
    }

    /// Point ids, factor-major.
    pub fn point(&self, factor: usize, level: usize) -> usize {
        self.levels[..factor].iter().sum::<usize>() + level
    }

    pub fn point_factor(&self) -> Vec<usize> {
        self.levels
            .iter()
            .enumerate()
            .flat_map(|(f, &k)| std::iter::repeat_n(f, k))
            .collect()
    }

    pub fn is_crossed(&self) -> bool {
        self.treatments.len() == self.levels.iter().product::<usize>()
    }

    pub fn design(&self) -> Design {
        let ts = self
            .treatments
            .iter()
            .map(|t| t.iter().enumerate().map(|(f, &l)| self.point(f, l)).collect())
            .collect();
        Design::from_parts(self.point_factor(), ts, self.is_crossed())
    }

    /// Cells of a joint distribution over one variable per factor point.
    pub fn hidden_cells(&self) -> usize {
        self.levels
            .iter()
            .zip(&self.outcomes)
            .map(|(&k, &m)| m.pow(k as u32))
            .product()
    }
}

pub struct Limits {
    pub factors: (usize, usize),
    pub levels: (usize, usize),
    pub outcomes: (usize, usize),
    pub max_hidden_cells: usize,
    /// Chance that a level combination is left out of the design.
    pub drop: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            factors: (2, 3),
            levels: (2, 3),
            outcomes: (2, 3),
            max_hidden_cells: 1024,
            drop: 0.3,
        }
    }
}

fn all_combinations(levels: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &k in levels {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..k).map(move |l| {
                    let mut t = prefix.clone();
                    t.push(l);
                    t
                })
            })
            .collect();
    }
    out
}

pub fn random_shape(rng: &mut impl Rng, limits: &Limits) -> Shape {
    loop {
        let n = rng.gen_range(limits.factors.0..=limits.factors.1);
        let levels: Vec<usize> = (0..n)
            .map(|_| rng.gen_range(limits.levels.0..=limits.levels.1))
            .collect();
        let outcomes: Vec<usize> = (0..n)
            .map(|_| rng.gen_range(limits.outcomes.0..=limits.outcomes.1))
            .collect();
        let mut treatments: Vec<Vec<usize>> = all_combinations(&levels)
            .into_iter()
            .filter(|_| !rng.gen_bool(limits.drop))
            .collect();
        if treatments.is_empty() {
            continue;
        }
        treatments.shuffle(rng);
        let shape = Shape {
            levels,
            outcomes,
            treatments,
        };
        if shape.hidden_cells() <= limits.max_hidden_cells {
            return shape;
        }
    }
}

/// A random distribution on `n` cells; about `zero` of them empty.
pub fn random_pmf(rng: &mut impl Rng, n: usize, zero: f64) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(zero) {
                    0.0
                } else {
                    -rng.gen::<f64>().ln()
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            return w.into_iter().map(|x| x / total).collect();
        }
    }
}

/// Builds the system whose treatment tables are the margins of `hidden`, a
/// distribution over one variable per factor point (points factor-major,
/// last point fastest).
pub fn system_from_hidden(shape: &Shape, hidden: &[f64]) -> SelectiveSystem {
    let n = shape.levels.len();
    let radices: Vec<usize> = shape.point_factor().iter().map(|&f| shape.outcomes[f]).collect();
    assert_eq!(hidden.len(), radices.iter().product::<usize>());
    let factors = (0..n)
        .map(|f| {
            let labels: Vec<String> = (1..=shape.levels[f]).map(|l| l.to_string()).collect();
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            Factor::new(format!("f{f}"), &refs)
        })
        .collect();
    let variables = (0..n)
        .map(|f| {
            let labels: Vec<String> = (0..shape.outcomes[f]).map(|o| o.to_string()).collect();
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            Variable::numeric(format!("X{f}"), &refs)
        })
        .collect();
    let names: Vec<String> = (0..n).map(|f| format!("X{f}")).collect();
    let mut treatments = Vec::new();
    let mut tables = Vec::new();
    for t in &shape.treatments {
        let pairs: Vec<(String, String)> = t
            .iter()
            .enumerate()
            .map(|(f, &l)| (format!("f{f}"), (l + 1).to_string()))
            .collect();
        let refs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        treatments.push(Treatment::from_pairs(&refs));
        let points: Vec<usize> = t.iter().enumerate().map(|(f, &l)| shape.point(f, l)).collect();
        let mut cells = vec![0.0; shape.outcomes.iter().product()];
        let mut digits = vec![0usize; radices.len()];
        for &p in hidden {
            let mut k = 0;
            for (f, &pt) in points.iter().enumerate() {
                k = k * shape.outcomes[f] + digits[pt];
            }
            cells[k] += p;
            for d in (0..digits.len()).rev() {
                digits[d] += 1;
                if digits[d] < radices[d] {
                    break;
                }
                digits[d] = 0;
            }
        }
        tables.push(JointPmf::new(names.clone(), shape.outcomes.clone(), cells).unwrap());
    }
    SelectiveSystem::new(factors, variables, treatments, tables).unwrap()
}

/// A system that is selectively influenced by construction.
pub fn random_feasible_system(rng: &mut impl Rng, limits: &Limits) -> (Shape, SelectiveSystem) {
    let shape = random_shape(rng, limits);
    let hidden = random_pmf(rng, shape.hidden_cells(), 0.3);
    let system = system_from_hidden(&shape, &hidden);
    (shape, system)
}

/// Treatments drawn independently: usually not even marginally selective.
pub fn random_free_system(rng: &mut impl Rng, limits: &Limits) -> SelectiveSystem {
    let shape = random_shape(rng, limits);
    let mut system = system_from_hidden(&shape, &random_pmf(rng, shape.hidden_cells(), 0.3));
    let tables: Vec<JointPmf> = system
        .distributions()
        .iter()
        .map(|d| JointPmf::new(d.variables().to_vec(), d.dims().to_vec(), random_pmf(rng, d.len(), 0.2)).unwrap())
        .collect();
    system = SelectiveSystem::new(
        system.factors().to_vec(),
        system.variables().to_vec(),
        system.treatments(),
        tables,
    )
    .unwrap();
    system
}

/// A uniformly random permutation of `0..n`.
pub fn random_perm(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Values on ordered covered pairs of distinct factors, each treatment's
/// values satisfying every triangle inequality among its points.
pub fn random_value_table(rng: &mut impl Rng, design: &Design) -> BTreeMap<(usize, usize), f64> {
    let n = design.num_points();
    'retry: loop {
        let mut table = BTreeMap::new();
        for a in 0..n {
            for b in 0..n {
                if a != b && design.factor_of(a) != design.factor_of(b) && design.covers_pair(a, b) {
                    let v = if rng.gen_bool(0.7) {
                        rng.gen_range(0.5..1.0)
                    } else {
                        rng.gen_range(0.0..0.5)
                    };
                    table.insert((a, b), v);
                }
            }
        }
        for t in design.treatments() {
            for &a in t {
                for &b in t {
                    for &c in t {
                        if a != b && b != c && a != c && table[&(a, c)] > table[&(a, b)] + table[&(b, c)] {
                            continue 'retry;
                        }
                    }
                }
            }
        }
        return table;
    }
}

/// Whether any closed walk of 3..=`max_len` points, consecutive points
/// (cyclically) in a common treatment and in different factors, has
/// `D(first, last) > sum of D along the walk + slack`.
pub fn exhaustive_chain_violation(
    design: &Design,
    value: &BTreeMap<(usize, usize), f64>,
    max_len: usize,
    slack: f64,
) -> bool {
    fn extend(
        design: &Design,
        value: &BTreeMap<(usize, usize), f64>,
        walk: &mut Vec<usize>,
        sum: f64,
        max_len: usize,
        slack: f64,
    ) -> bool {
        let last = *walk.last().unwrap();
        if walk.len() >= 3 {
            if let Some(&lhs) = value.get(&(walk[0], last)) {
                if lhs > sum + slack {
                    return true;
                }
            }
        }
        if walk.len() == max_len {
            return false;
        }
        for next in 0..design.num_points() {
            if let Some(&v) = value.get(&(last, next)) {
                walk.push(next);
                let found = extend(design, value, walk, sum + v, max_len, slack);
                walk.pop();
                if found {
                    return true;
                }
            }
        }
        false
    }
    (0..design.num_points()).any(|start| extend(design, value, &mut vec![start], 0.0, max_len, slack))
}

/// `Pr[X_slot = slot + 1 for all slots]` by direct summation over a joint
/// table of `classes.len()` variables.
pub fn pattern_probability(dims: &[usize], cells: &[f64], classes: &[Vec<usize>]) -> f64 {
    let mut total = 0.0;
    for (k, p) in cells.iter().enumerate() {
        let mut rest = k;
        let mut hit = true;
        for slot in (0..dims.len()).rev() {
            let o = rest % dims[slot];
            rest /= dims[slot];
            if classes[slot][o] != slot + 1 {
                hit = false;
            }
        }
        if hit {
            total += p;
        }
    }
    total
}
