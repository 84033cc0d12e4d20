//! How often do random marginally selective systems pass the LFT?
//!
//! Trial `i` of a run with seed `s` draws from its own ChaCha8 stream seeded
//! with `splitmix64(s + (i + 1) * 0x9E3779B97F4A7C15)`, so results do not
//! depend on scheduling or on the execution strategy.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lft::{lft, LftOptions};
use crate::model::{Factor, JointPmf, SelectiveSystem, Treatment, Variable};
use crate::par::{map_range, Execution};

pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.3)";
pub const SEED_RULE: &str = "splitmix64(seed + (trial + 1) * 0x9E3779B97F4A7C15)";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed.wrapping_add(trial.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(seed, trial))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum McDesign {
    #[serde(rename = "2x2")]
    TwoByTwo,
    #[serde(rename = "3x2")]
    ThreeFactor,
}

impl fmt::Display for McDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            McDesign::TwoByTwo => "2x2",
            McDesign::ThreeFactor => "3x2",
        })
    }
}

impl FromStr for McDesign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "2x2" => Ok(McDesign::TwoByTwo),
            "3x2" => Ok(McDesign::ThreeFactor),
            other => Err(format!("unknown design {other:?}; expected 2x2 or 3x2")),
        }
    }
}

impl McDesign {
    pub fn generate(self, rng: &mut impl Rng) -> SelectiveSystem {
        match self {
            McDesign::TwoByTwo => random_system_2x2(rng),
            McDesign::ThreeFactor => random_system_3x2(rng),
        }
    }
}

fn binary_crossed(k: usize, cell_sets: Vec<Vec<f64>>) -> SelectiveSystem {
    const FACTORS: [&str; 3] = ["alpha", "beta", "gamma"];
    const VARS: [&str; 3] = ["A", "B", "C"];
    let factors = (0..k).map(|i| Factor::new(FACTORS[i], &["1", "2"])).collect();
    let variables = (0..k).map(|i| Variable::numeric(VARS[i], &["1", "2"])).collect();
    let treatments = (0..1usize << k)
        .map(|mask| {
            let pairs: Vec<(&str, &str)> = (0..k)
                .map(|i| (FACTORS[i], if mask >> (k - 1 - i) & 1 == 0 { "1" } else { "2" }))
                .collect();
            Treatment::from_pairs(&pairs)
        })
        .collect();
    let names: Vec<String> = VARS[..k].iter().map(|s| s.to_string()).collect();
    let tables = cell_sets
        .into_iter()
        .map(|cells| JointPmf::new(names.clone(), vec![2; k], cells).expect("generated cells are valid"))
        .collect();
    SelectiveSystem::new(factors, variables, treatments, tables).expect("generated system is valid")
}

/// Two binary factors; treatment `t` gets `Pr[1,1] = Pr[2,2] = p[t]` and
/// `Pr[1,2] = Pr[2,1] = 0.5 - p[t]`. Treatments in order 11, 12, 21, 22.
pub fn system_2x2(p11: [f64; 4]) -> SelectiveSystem {
    binary_crossed(2, p11.iter().map(|&p| vec![p, 0.5 - p, 0.5 - p, p]).collect())
}

/// Three binary factors with every 2-marginal uniform. That leaves one free
/// cell `x = Pr[1,1,1]`: one 2 among the outcomes gives `0.25 - x`, two 2s
/// give `x`, and `Pr[2,2,2] = 0.25 - x`.
pub fn system_3x2(p111: [f64; 8]) -> SelectiveSystem {
    binary_crossed(
        3,
        p111.iter()
            .map(|&x| {
                (0..8u32)
                    .map(|k| match k.count_ones() {
                        0 | 2 => x,
                        _ => 0.25 - x,
                    })
                    .collect()
            })
            .collect(),
    )
}

/// Every 1-marginal is 0.5 and `Pr[1,1] ~ U(0, 0.5)` independently per treatment.
pub fn random_system_2x2(rng: &mut impl Rng) -> SelectiveSystem {
    system_2x2(std::array::from_fn(|_| rng.gen_range(0.0..0.5)))
}

/// Every 2-marginal uniform and `Pr[1,1,1] ~ U(0, 0.25)` independently per treatment.
pub fn random_system_3x2(rng: &mut impl Rng) -> SelectiveSystem {
    system_3x2(std::array::from_fn(|_| rng.gen_range(0.0..0.25)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McConfig {
    pub design: String,
    pub rng: &'static str,
    pub seed_rule: &'static str,
    pub lft: LftOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub trials: usize,
    pub feasible_count: usize,
    /// Trials the solver could not decide; counted as not feasible.
    pub undecided_count: usize,
    pub fraction: f64,
    pub seed: u64,
    pub config: McConfig,
}

pub fn estimate_feasible_fraction(
    design: McDesign,
    trials: usize,
    seed: u64,
    options: &LftOptions,
    exec: Execution,
) -> McReport {
    estimate_with(
        &design.to_string(),
        |rng| design.generate(rng),
        trials,
        seed,
        options,
        exec,
    )
}

/// Runs `trials` independent draws of `generator` through the LFT.
pub fn estimate_with<G>(
    label: &str,
    generator: G,
    trials: usize,
    seed: u64,
    options: &LftOptions,
    exec: Execution,
) -> McReport
where
    G: Fn(&mut ChaCha8Rng) -> SelectiveSystem + Sync + Send,
{
    assert!(trials >= 1, "at least one trial");
    let outcomes = map_range(trials, exec, |i| {
        let mut rng = trial_rng(seed, i as u64);
        let system = generator(&mut rng);
        match lft(&system, options) {
            Ok(v) => Some(v.feasible),
            Err(_) => None,
        }
    });
    let feasible_count = outcomes.iter().filter(|o| **o == Some(true)).count();
    let undecided_count = outcomes.iter().filter(|o| o.is_none()).count();
    McReport {
        trials,
        feasible_count,
        undecided_count,
        fraction: feasible_count as f64 / trials as f64,
        seed,
        config: McConfig {
            design: label.to_string(),
            rng: RNG_NAME,
            seed_rule: SEED_RULE,
            lft: *options,
        },
    }
}
