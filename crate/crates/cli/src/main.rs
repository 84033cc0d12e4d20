use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use selinf::chains::{
    distance_test, ChainError, DistanceOptions, DEFAULT_AGREEMENT_TOL, DEFAULT_MAX_LEN, DEFAULT_SLACK,
};
use selinf::diversity::{diversity_test, DiversityError, DiversityOptions, Partition, DEFAULT_DEPTH};
use selinf::document::SystemDocument;
use selinf::fixtures;
use selinf::lft::{build_lp_with, lft, LftError, LftOptions, SolveMode, DEFAULT_EPS_LP, DEFAULT_MAX_ITERATIONS};
use selinf::metrics::MetricSpec;
use selinf::model::{check_marginal_selectivity_capped, SelectiveSystem, DEFAULT_EPS_PROB};
use selinf::montecarlo::{estimate_feasible_fraction, McDesign};
use selinf::quadtests::{cosphericity_test, CorrelationSource, CosphericityOptions, QuadError};
use selinf::Execution;

const EXIT_PASS: u8 = 0;
const EXIT_VIOLATION: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_UNDECIDED: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "selinf",
    version,
    about = "Tests for selective influence of factors on random variables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Add wall-clock timings to the report.
    #[arg(long, global = true)]
    timings: bool,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a system document for structural and numeric problems.
    Validate {
        path: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS_PROB)]
        eps_prob: f64,
    },
    /// Check marginal selectivity on every variable subset.
    Marginal {
        path: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        max_subset_size: Option<usize>,
    },
    /// Linear feasibility test.
    Lft {
        path: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS_LP)]
        tol: f64,
        #[arg(long, default_value = "float")]
        mode: SolveMode,
        /// Include the nonzero entries of the joint distribution found.
        #[arg(long)]
        dump_witness: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
        max_iterations: usize,
    },
    /// Chain (distance-type) test.
    Chains {
        path: PathBuf,
        /// Metric as JSON, or @file.
        #[arg(long)]
        metric: String,
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
        #[arg(long, default_value_t = DEFAULT_SLACK)]
        slack: f64,
    },
    /// Cosphericity test on 2x2 sub-designs.
    Cospher {
        path: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SLACK)]
        slack: f64,
        /// Where correlations come from; `auto` prefers those in the document.
        #[arg(long, value_enum, default_value_t = Source::Auto)]
        correlations: Source,
    },
    /// Diversity test on polytopal sets.
    Diversity {
        path: PathBuf,
        /// Partition as JSON, or @file. Defaults to outcome labels 1..=s.
        #[arg(long)]
        partition: Option<String>,
        #[arg(long, default_value_t = 3)]
        s: usize,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: usize,
        #[arg(long, default_value_t = DEFAULT_SLACK)]
        slack: f64,
        #[arg(long, default_value = "float")]
        mode: SolveMode,
        #[arg(long, default_value_t = 1000)]
        max_reported: usize,
    },
    /// Fraction of random marginally selective systems passing the LFT.
    Mc {
        #[arg(long, default_value = "2x2")]
        design: McDesign,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write a named example system.
    Fixtures {
        #[arg(long, required_unless_present = "list")]
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        list: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Source {
    Auto,
    Distributions,
    Supplied,
}

struct Outcome {
    code: u8,
    verdict: &'static str,
    summary: String,
    args: Value,
    result: Value,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_INPUT,
            error: e.into(),
        }
    }
}

fn undecided(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_UNDECIDED,
        error: e.into(),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate { .. } => "validate",
        Command::Marginal { .. } => "marginal",
        Command::Lft { .. } => "lft",
        Command::Chains { .. } => "chains",
        Command::Cospher { .. } => "cospher",
        Command::Diversity { .. } => "diversity",
        Command::Mc { .. } => "mc",
        Command::Fixtures { .. } => "fixtures",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = command_name(&cli.command);
    let start = Instant::now();
    let outcome = run(&cli);
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let (code, report) = match outcome {
        Ok(Outcome {
            code,
            verdict,
            summary,
            args,
            result,
        }) => {
            eprintln!("{summary}");
            let mut report = json!({
                "tool": "selinf",
                "version": env!("CARGO_PKG_VERSION"),
                "command": name,
                "args": args,
                "verdict": verdict,
                "exit_code": code,
                "result": result,
            });
            if cli.timings {
                report["timings"] = json!({ "total_ms": elapsed });
            }
            (code, report)
        }
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            let verdict = if code == EXIT_UNDECIDED { "undecided" } else { "error" };
            let report = json!({
                "tool": "selinf",
                "version": env!("CARGO_PKG_VERSION"),
                "command": name,
                "verdict": verdict,
                "exit_code": code,
                "error": format!("{error:#}"),
            });
            (code, report)
        }
    };
    let _ = writeln!(std::io::stdout().lock(), "{report}");
    ExitCode::from(code)
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load(path: &Path) -> anyhow::Result<(SelectiveSystem, Option<CorrelationSource>)> {
    let doc = SystemDocument::from_json(&read_text(path)?)?;
    let system = doc.to_system()?;
    Ok((system, doc.correlation_source()?))
}

/// Inline JSON, or `@path` to a file holding it.
fn json_arg<T: serde::de::DeserializeOwned>(arg: &str, what: &str) -> anyhow::Result<T> {
    let text = match arg.strip_prefix('@') {
        Some(path) => read_text(Path::new(path))?,
        None => arg.to_string(),
    };
    serde_json::from_str(&text).with_context(|| format!("parsing {what}"))
}

fn verdict(passed: bool) -> (u8, &'static str) {
    if passed {
        (EXIT_PASS, "pass")
    } else {
        (EXIT_VIOLATION, "violation")
    }
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    let execution = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match &cli.command {
        Command::Validate { path, eps_prob } => {
            let doc = SystemDocument::from_json(&read_text(path)?)?;
            let errors = doc.validate(*eps_prob);
            let (code, verdict) = if errors.is_empty() {
                (EXIT_PASS, "valid")
            } else {
                (EXIT_VIOLATION, "invalid")
            };
            let summary = if errors.is_empty() {
                format!("{}: valid", path.display())
            } else {
                let lines: Vec<String> = errors.iter().map(|e| format!("  {e}")).collect();
                format!("{}: {} problem(s)\n{}", path.display(), errors.len(), lines.join("\n"))
            };
            Ok(Outcome {
                code,
                verdict,
                summary,
                args: json!({ "path": path, "eps_prob": eps_prob }),
                result: json!({
                    "valid": errors.is_empty(),
                    "errors": errors
                        .iter()
                        .map(|e| {
                            let mut v = serde_json::to_value(e).expect("errors serialize");
                            v["message"] = json!(e.to_string());
                            v
                        })
                        .collect::<Vec<_>>(),
                }),
            })
        }
        Command::Marginal {
            path,
            tol,
            max_subset_size,
        } => {
            let (system, _) = load(path)?;
            let cap = max_subset_size.unwrap_or(system.variables().len());
            let report = check_marginal_selectivity_capped(&system, *tol, cap);
            let (code, verdict) = verdict(report.satisfied);
            let summary = match report.worst() {
                None => format!("marginal selectivity holds on {} subsets", report.subsets_checked),
                Some(w) => format!(
                    "marginal selectivity fails: {} violation(s); worst on {{{}}} between {} and {}, discrepancy {}",
                    report.violations.len(),
                    w.variables.join(", "),
                    w.treatments.0,
                    w.treatments.1,
                    w.discrepancy
                ),
            };
            Ok(Outcome {
                code,
                verdict,
                summary,
                args: json!({ "path": path, "tol": tol, "max_subset_size": cap }),
                result: serde_json::to_value(&report)?,
            })
        }
        Command::Lft {
            path,
            tol,
            mode,
            dump_witness,
            max_iterations,
        } => {
            let (system, _) = load(path)?;
            let options = LftOptions {
                eps_lp: *tol,
                mode: *mode,
                max_iterations: *max_iterations,
                ..Default::default()
            };
            let v = match lft(&system, &options) {
                Ok(v) => v,
                Err(e @ LftError::Undecided { .. }) => return Err(undecided(e)),
                Err(e) => return Err(e.into()),
            };
            let mut result = serde_json::to_value(&v)?;
            if *dump_witness && v.witness.is_some() {
                let lp = build_lp_with(&system, &options)?;
                result["witness"] = serde_json::to_value(v.witness_table(&lp))?;
            }
            let (code, verdict) = if v.feasible {
                (EXIT_PASS, "feasible")
            } else {
                (EXIT_VIOLATION, "infeasible")
            };
            Ok(Outcome {
                code,
                verdict,
                summary: format!("{verdict} ({} mode): {}", mode_name(*mode), v.diagnostics),
                args: json!({ "path": path, "tol": tol, "mode": mode, "dump_witness": dump_witness, "max_iterations": max_iterations }),
                result,
            })
        }
        Command::Chains {
            path,
            metric,
            max_len,
            slack,
        } => {
            let (system, _) = load(path)?;
            let metric: MetricSpec = json_arg(metric, "--metric")?;
            let options = DistanceOptions {
                max_len: *max_len,
                slack: *slack,
                agreement_tol: DEFAULT_AGREEMENT_TOL,
                execution,
            };
            let args = json!({ "path": path, "metric": metric, "max_len": max_len, "slack": slack });
            let report = match distance_test(&system, &metric, &options) {
                Ok(r) => r,
                Err(e @ ChainError::MarginalDisagreement { .. }) => return Ok(marginal_failure(args, e.to_string())),
                Err(e) => return Err(e.into()),
            };
            let (code, verdict) = verdict(report.passed);
            let summary = match report.violations.first() {
                None => format!("no chain violations among {} chains", report.chains_checked),
                Some(v) => format!(
                    "{} violated chain(s); first: {} with {} > {}",
                    report.violations.len(),
                    v.chain,
                    v.lhs,
                    v.rhs
                ),
            };
            Ok(Outcome {
                code,
                verdict,
                summary,
                args,
                result: serde_json::to_value(&report)?,
            })
        }
        Command::Cospher {
            path,
            slack,
            correlations,
        } => {
            let (system, supplied) = load(path)?;
            let source = match (correlations, supplied) {
                (Source::Distributions, _) | (Source::Auto, None) => CorrelationSource::Distributions,
                (_, Some(s)) => s,
                (Source::Supplied, None) => return Err(anyhow!("the document carries no correlations").into()),
            };
            let options = CosphericityOptions {
                slack: *slack,
                source,
                execution,
                ..Default::default()
            };
            let args =
                json!({ "path": path, "slack": slack, "correlations": format!("{correlations:?}").to_lowercase() });
            let report = match cosphericity_test(&system, &options) {
                Ok(r) => r,
                Err(e @ QuadError::MarginalDisagreement { .. }) => return Ok(marginal_failure(args, e.to_string())),
                Err(e) => return Err(e.into()),
            };
            let (code, verdict) = verdict(report.passed);
            let summary = match report.violations.first() {
                None => format!(
                    "cosphericity holds on {} quadruple(s) ({} skipped)",
                    report.quadruples_checked, report.quadruples_skipped
                ),
                Some(v) => format!(
                    "{} violated quadruple(s); first: ({}) with {:.6} > {:.6}",
                    report.violations.len(),
                    v.points.join(", "),
                    v.lhs,
                    v.rhs
                ),
            };
            Ok(Outcome {
                code,
                verdict,
                summary,
                args,
                result: serde_json::to_value(&report)?,
            })
        }
        Command::Diversity {
            path,
            partition,
            s,
            depth,
            slack,
            mode,
            max_reported,
        } => {
            let (system, _) = load(path)?;
            let partition: Partition = match partition {
                Some(p) => json_arg(p, "--partition")?,
                None => Partition::identity(*s),
            };
            let options = DiversityOptions {
                depth: *depth,
                slack: *slack,
                mode: *mode,
                max_reported: *max_reported,
                execution,
                ..DiversityOptions::new(partition)
            };
            let args =
                json!({ "path": path, "partition": options.partition, "depth": depth, "slack": slack, "mode": mode });
            let report = match diversity_test(&system, &options) {
                Ok(r) => r,
                Err(e @ DiversityError::MarginalDisagreement { .. }) => {
                    return Ok(marginal_failure(args, e.to_string()))
                }
                Err(e) => return Err(e.into()),
            };
            let (code, verdict) = verdict(report.passed);
            let summary = match report.violations.first() {
                None => format!(
                    "diversity inequalities hold on {} polytopal set(s) over {} root(s)",
                    report.sets_checked, report.roots_checked
                ),
                Some(v) => format!(
                    "{} violation(s); largest: root ({}) with {} > {}",
                    report.violation_count,
                    v.root.join(", "),
                    v.exact_lhs.clone().unwrap_or_else(|| v.lhs.to_string()),
                    v.exact_rhs.clone().unwrap_or_else(|| v.rhs.to_string()),
                ),
            };
            Ok(Outcome {
                code,
                verdict,
                summary,
                args,
                result: serde_json::to_value(&report)?,
            })
        }
        Command::Mc { design, trials, seed } => {
            if *trials == 0 {
                return Err(anyhow!("--trials must be at least 1").into());
            }
            let report = estimate_feasible_fraction(*design, *trials, *seed, &LftOptions::default(), execution);
            Ok(Outcome {
                code: EXIT_PASS,
                verdict: "done",
                summary: format!(
                    "{design}: {} of {} feasible (fraction {:.4})",
                    report.feasible_count, report.trials, report.fraction
                ),
                args: json!({ "design": design, "trials": trials, "seed": seed }),
                result: serde_json::to_value(&report)?,
            })
        }
        Command::Fixtures { name, out, list } => {
            if *list {
                let names: Vec<Value> = fixtures::NAMES
                    .iter()
                    .map(|(n, d)| json!({ "name": n, "description": d }))
                    .collect();
                return Ok(Outcome {
                    code: EXIT_PASS,
                    verdict: "done",
                    summary: format!("{} fixtures", names.len()),
                    args: json!({ "list": true }),
                    result: json!({ "fixtures": names }),
                });
            }
            let name = name.as_deref().unwrap_or_default();
            let fixture = fixtures::fixture(name).ok_or_else(|| {
                let known: Vec<&str> = fixtures::NAMES.iter().map(|(n, _)| *n).collect();
                anyhow!("unknown fixture {name:?}; known: {}", known.join(", "))
            })?;
            let doc = fixture.document();
            let result = match out {
                Some(path) => {
                    fs::write(path, doc.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
                    json!({ "written": path })
                }
                None => json!({ "document": doc }),
            };
            Ok(Outcome {
                code: EXIT_PASS,
                verdict: "done",
                summary: match out {
                    Some(p) => format!("wrote {name} to {}", p.display()),
                    None => format!("{name}: {} treatments", fixture.system.num_treatments()),
                },
                args: json!({ "name": name, "out": out }),
                result,
            })
        }
    }
}

fn marginal_failure(args: Value, message: String) -> Outcome {
    Outcome {
        code: EXIT_VIOLATION,
        verdict: "marginal_selectivity_violated",
        summary: message.clone(),
        args,
        result: json!({ "passed": false, "reason": message }),
    }
}

fn mode_name(mode: SolveMode) -> &'static str {
    match mode {
        SolveMode::Float => "float",
        SolveMode::Rational => "rational",
    }
}
