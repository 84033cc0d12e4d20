//! Named example systems.

use crate::document::SystemDocument;
use crate::gaussian::{build_example12_system, example12_latent_correlations, median_split_system};
use crate::model::{Factor, JointPmf, SelectiveSystem, Treatment, Variable};
use crate::quadtests::CorrelationSource;

pub const NAMES: &[(&str, &str)] = &[
    (
        "example8",
        "three factors, five treatments; marginal selectivity fails on (A, C)",
    ),
    ("example9", "2x2 binary; marginals match on A only"),
    ("example9_transformed", "example9 with A flipped at 2^alpha"),
    (
        "example9_consistent",
        "example9 with the 1^alpha 2^beta table made marginally consistent",
    ),
    ("example10", "2x2 binary, all marginals 0.5; LFT feasible"),
    ("example11", "2x2 binary, all marginals 0.5; LFT infeasible"),
    (
        "example12",
        "median splits of bivariate normals, rho = (-.9, .9, .9, -.1)",
    ),
    ("equal_rho", "median splits with rho = 0.5 at every treatment"),
    ("independent_2x2", "2x2 binary, uniform and independent"),
    (
        "diversity_tetrahedron",
        "four binary factors, three-valued variables; a tetrahedral diversity violation",
    ),
    ("diversity_zero", "four binary factors, every variable constant"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub name: &'static str,
    pub system: SelectiveSystem,
    pub correlations: Option<CorrelationSource>,
}

impl Fixture {
    pub fn document(&self) -> SystemDocument {
        let doc = SystemDocument::from_system(&self.system).with_name(self.name);
        match &self.correlations {
            Some(c) => doc.with_correlations(c),
            None => doc,
        }
    }
}

pub fn fixture(name: &str) -> Option<Fixture> {
    let (name, _) = NAMES.iter().find(|(n, _)| *n == name)?;
    let (system, correlations) = match *name {
        "example8" => (example8(), None),
        "example9" => (example9(), None),
        "example9_transformed" => (example9_transformed(), None),
        "example9_consistent" => (example9_consistent(), None),
        "example10" => (example10(), None),
        "example11" => (example11(), None),
        "example12" => (build_example12_system(), Some(example12_latent_correlations())),
        "equal_rho" => (equal_rho(), None),
        "independent_2x2" => (independent_2x2(), None),
        "diversity_tetrahedron" => (diversity_tetrahedron(), None),
        "diversity_zero" => (diversity_zero(), None),
        _ => unreachable!(),
    };
    Some(Fixture {
        name,
        system,
        correlations,
    })
}

/// Fully crossed `alpha x beta` with binary `A`, `B`; tables in treatment
/// order 11, 12, 21, 22, cells in order 00, 01, 10, 11.
fn binary_2x2(outcomes: [&str; 2], tables: [[&str; 4]; 4]) -> SelectiveSystem {
    let factors = vec![Factor::new("alpha", &["1", "2"]), Factor::new("beta", &["1", "2"])];
    let variables = vec![Variable::numeric("A", &outcomes), Variable::numeric("B", &outcomes)];
    let treatments = ["1", "2"]
        .iter()
        .flat_map(|a| ["1", "2"].map(move |b| Treatment::from_pairs(&[("alpha", a), ("beta", b)])))
        .collect();
    let pmfs = tables
        .iter()
        .map(|c| JointPmf::from_strs(&["A", "B"], &[2, 2], c).unwrap())
        .collect();
    SelectiveSystem::new(factors, variables, treatments, pmfs).unwrap()
}

pub fn example8() -> SelectiveSystem {
    let factors = vec![
        Factor::new("alpha", &["1", "2"]),
        Factor::new("beta", &["1", "2", "3"]),
        Factor::new("gamma", &["1", "2", "3", "4"]),
    ];
    let variables = ["A", "B", "C"]
        .iter()
        .map(|n| Variable::numeric(*n, &["0", "1"]))
        .collect();
    let t = |a, b, c| Treatment::from_pairs(&[("alpha", a), ("beta", b), ("gamma", c)]);
    let treatments = vec![
        t("1", "2", "1"),
        t("1", "2", "3"),
        t("2", "1", "4"),
        t("1", "3", "1"),
        t("2", "3", "2"),
    ];
    let tables: [[&str; 8]; 5] = [
        [".2", ".1", ".1", ".1", ".1", ".1", ".1", ".2"],
        ["0", ".3", ".2", "0", ".1", ".1", ".1", ".2"],
        [".3", "0", ".3", "0", ".3", "0", "0", ".1"],
        [".4", ".1", "0", "0", "0", ".2", ".1", ".2"],
        [".2", ".1", ".2", ".1", ".3", ".1", "0", "0"],
    ];
    let pmfs = tables
        .iter()
        .map(|c| JointPmf::from_strs(&["A", "B", "C"], &[2, 2, 2], c).unwrap())
        .collect();
    SelectiveSystem::new(factors, variables, treatments, pmfs).unwrap()
}

pub fn example9() -> SelectiveSystem {
    binary_2x2(
        ["0", "1"],
        [
            [".1", "0", "0", ".9"],
            [".09", ".01", ".81", ".09"],
            ["0", ".9", ".1", "0"],
            ["0", ".9", ".1", "0"],
        ],
    )
}

pub fn example9_transformed() -> SelectiveSystem {
    binary_2x2(
        ["0", "1"],
        [
            [".1", "0", "0", ".9"],
            [".09", ".01", ".81", ".09"],
            [".1", "0", "0", ".9"],
            [".1", "0", "0", ".9"],
        ],
    )
}

/// [`example9`] with `A` and `B` independent at `{1^alpha, 2^beta}` under
/// the marginals the other tables imply.
pub fn example9_consistent() -> SelectiveSystem {
    binary_2x2(
        ["0", "1"],
        [
            [".1", "0", "0", ".9"],
            [".01", ".09", ".09", ".81"],
            ["0", ".9", ".1", "0"],
            ["0", ".9", ".1", "0"],
        ],
    )
}

pub fn example10() -> SelectiveSystem {
    binary_2x2(
        ["0", "1"],
        [
            [".140", ".360", ".360", ".140"],
            [".198", ".302", ".302", ".198"],
            [".189", ".311", ".311", ".189"],
            [".460", ".040", ".040", ".460"],
        ],
    )
}

pub fn example11() -> SelectiveSystem {
    binary_2x2(
        ["0", "1"],
        [
            [".450", ".050", ".050", ".450"],
            [".105", ".395", ".395", ".105"],
            [".170", ".330", ".330", ".170"],
            [".110", ".390", ".390", ".110"],
        ],
    )
}

pub fn independent_2x2() -> SelectiveSystem {
    binary_2x2(["0", "1"], [[".25"; 4]; 4])
}

pub fn equal_rho() -> SelectiveSystem {
    median_split_system([0.5; 4]).unwrap()
}

fn four_binary_factors(excluded: &[[&str; 4]], table: impl Fn(&[&str; 4]) -> Vec<&'static str>) -> SelectiveSystem {
    let names = ["alpha", "beta", "gamma", "delta"];
    let factors = names.iter().map(|n| Factor::new(*n, &["1", "2"])).collect();
    let variables = ["A", "B", "C", "D"]
        .iter()
        .map(|n| Variable::numeric(*n, &["1", "2", "3"]))
        .collect();
    let mut treatments = Vec::new();
    let mut pmfs = Vec::new();
    for mask in 0..16u32 {
        let levels: [&str; 4] = std::array::from_fn(|i| if mask >> (3 - i) & 1 == 0 { "1" } else { "2" });
        if excluded.contains(&levels) {
            continue;
        }
        let pairs: Vec<(&str, &str)> = names.iter().copied().zip(levels.iter().copied()).collect();
        treatments.push(Treatment::from_pairs(&pairs));
        pmfs.push(JointPmf::from_strs(&["A", "B", "C", "D"], &[3; 4], &table(&levels)).unwrap());
    }
    SelectiveSystem::new(factors, variables, treatments, pmfs).unwrap()
}

/// `(A, B, C) = (1, 2, 3)` always. `D` is uniform on `{1, 2, 3}`, except at
/// `{1^alpha, 1^beta, 2^gamma, 1^delta}` where it is uniform on `{1, 2}`.
pub fn diversity_tetrahedron() -> SelectiveSystem {
    let excluded = [
        ["1", "1", "2", "2"],
        ["1", "1", "1", "1"],
        ["1", "2", "2", "1"],
        ["2", "1", "2", "1"],
    ];
    four_binary_factors(&excluded, |levels| {
        let mut cells = vec!["0"; 81];
        // cell index of (1, 2, 3, d) with 0-based outcomes: 0*27 + 1*9 + 2*3 + (d-1)
        if *levels == ["1", "1", "2", "1"] {
            cells[15] = "1/2";
            cells[16] = "1/2";
        } else {
            cells[15..18].fill("1/3");
        }
        cells
    })
}

pub fn diversity_zero() -> SelectiveSystem {
    four_binary_factors(&[], |_| {
        let mut cells = vec!["0"; 81];
        cells[0] = "1";
        cells
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_builds_and_exports() {
        for (name, _) in NAMES {
            let f = fixture(name).unwrap();
            let back = f.document().to_system().unwrap();
            assert_eq!(back.distributions().len(), f.system.num_treatments());
        }
        assert!(fixture("example99").is_none());
    }

    #[test]
    fn tetrahedron_has_twelve_treatments() {
        assert_eq!(diversity_tetrahedron().num_treatments(), 12);
    }
}
