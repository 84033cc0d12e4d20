use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_selinf");

struct Run {
    code: i32,
    report: Value,
}

fn run(args: &[&str]) -> Run {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let report = serde_json::from_str(stdout.trim()).unwrap_or(Value::Null);
    Run {
        code: out.status.code().unwrap(),
        report,
    }
}

fn write_fixture(dir: &Path, name: &str) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    let r = run(&["fixtures", "--name", name, "--out", path.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{name}");
    path
}

const M1: &str = r#"{"kind":"minkowski","p":1}"#;

#[test]
fn fixture_command_matrix() {
    let dir = TempDir::new().unwrap();
    // (fixture, marginal, lft, chains with M1, cospher)
    let expected = [
        ("example8", 1, 1, 1, 0),
        ("example9", 1, 1, 0, 1),
        ("example9_transformed", 1, 1, 1, 1),
        ("example9_consistent", 0, 1, 0, 1),
        ("example10", 0, 0, 0, 0),
        ("example11", 0, 1, 0, 0),
        ("example12", 0, 1, 1, 1),
        ("equal_rho", 0, 0, 0, 0),
        ("independent_2x2", 0, 0, 0, 0),
        ("diversity_tetrahedron", 1, 1, 1, 0),
        ("diversity_zero", 0, 0, 0, 0),
    ];
    for (name, marginal, lft, chains, cospher) in expected {
        let path = write_fixture(dir.path(), name);
        let p = path.to_str().unwrap();
        assert_eq!(run(&["validate", p]).code, 0, "{name} validate");
        assert_eq!(run(&["marginal", p]).code, marginal, "{name} marginal");
        let l = run(&["lft", p]);
        assert_eq!(l.code, lft, "{name} lft");
        assert_eq!(run(&["lft", p, "--mode", "rational"]).code, lft, "{name} lft rational");
        assert_eq!(run(&["chains", p, "--metric", M1]).code, chains, "{name} chains");
        assert_eq!(run(&["cospher", p]).code, cospher, "{name} cospher");
        assert_eq!(l.report["command"], "lft");
        assert_eq!(l.report["exit_code"], lft);
    }
}

#[test]
fn reports_carry_the_envelope() {
    let dir = TempDir::new().unwrap();
    let p = write_fixture(dir.path(), "example10");
    let r = run(&[
        "lft",
        p.to_str().unwrap(),
        "--mode",
        "rational",
        "--dump-witness",
        "--timings",
    ]);
    assert_eq!(r.code, 0);
    assert_eq!(r.report["tool"], "selinf");
    assert_eq!(r.report["verdict"], "feasible");
    assert_eq!(r.report["result"]["exact_max_residual"], "0");
    assert!(r.report["result"]["witness"].as_object().is_some_and(|w| !w.is_empty()));
    assert!(r.report["timings"].is_object());
    let plain = run(&["lft", p.to_str().unwrap()]);
    assert!(plain.report.get("timings").is_none());
}

#[test]
fn chain_violation_is_reported_in_full() {
    let dir = TempDir::new().unwrap();
    let p = write_fixture(dir.path(), "example12");
    let metric = r#"{"kind":"classification","positive":["2"]}"#;
    let r = run(&["chains", p.to_str().unwrap(), "--metric", metric]);
    assert_eq!(r.code, 1);
    assert_eq!(r.report["verdict"], "violation");
    let v = &r.report["result"]["violations"][0];
    assert_eq!(
        v["chain"],
        serde_json::json!(["1^alpha", "2^beta", "2^alpha", "1^beta"])
    );
    assert!((v["lhs"].as_f64().unwrap() - 0.428217).abs() < 1e-5);
    let metric_file = dir.path().join("metric.json");
    std::fs::write(&metric_file, metric).unwrap();
    let from_file = run(&[
        "chains",
        p.to_str().unwrap(),
        "--metric",
        &format!("@{}", metric_file.display()),
    ]);
    assert_eq!(from_file.report["result"], r.report["result"]);
}

#[test]
fn marginal_disagreement_has_its_own_verdict() {
    let dir = TempDir::new().unwrap();
    let p = write_fixture(dir.path(), "example8");
    let r = run(&["chains", p.to_str().unwrap(), "--metric", M1]);
    assert_eq!(r.code, 1);
    assert_eq!(r.report["verdict"], "marginal_selectivity_violated");
}

#[test]
fn cosphericity_correlation_sources() {
    let dir = TempDir::new().unwrap();
    let p = write_fixture(dir.path(), "example12");
    let p = p.to_str().unwrap();
    let supplied = run(&["cospher", p]);
    assert_eq!(supplied.code, 1);
    assert!((supplied.report["result"]["violations"][0]["lhs"].as_f64().unwrap() - 0.72).abs() < 1e-12);
    assert_eq!(run(&["cospher", p, "--correlations", "distributions"]).code, 0);
}

#[test]
fn diversity_on_the_tetrahedron() {
    let dir = TempDir::new().unwrap();
    let p = write_fixture(dir.path(), "diversity_tetrahedron");
    let r = run(&["diversity", p.to_str().unwrap(), "--mode", "rational", "--depth", "1"]);
    assert_eq!(r.code, 1);
    let v = &r.report["result"]["violations"][0];
    assert_eq!(v["exact_lhs"], "1");
    assert_eq!(v["exact_rhs"], "2/3");
    let partition = r#"{"s":2,"by_variable":{"A":{"0":1,"1":2},"B":{"0":1,"1":2}}}"#;
    let q = write_fixture(dir.path(), "example10");
    let two = run(&["diversity", q.to_str().unwrap(), "--partition", partition, "--s", "2"]);
    assert_eq!(two.code, 0, "{}", two.report);
}

#[test]
fn monte_carlo_is_reproducible() {
    let a = run(&["mc", "--design", "3x2", "--trials", "300", "--seed", "5"]);
    let b = run(&[
        "mc",
        "--design",
        "3x2",
        "--trials",
        "300",
        "--seed",
        "5",
        "--sequential",
    ]);
    assert_eq!(a.code, 0);
    assert_eq!(a.report["result"], b.report["result"]);
    assert_eq!(run(&["mc", "--design", "4x4"]).code, 2);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let r = run(&["lft", bad.to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert_eq!(r.report["verdict"], "error");
    assert!(r.report["error"].is_string());
    assert_eq!(run(&["lft", dir.path().join("missing.json").to_str().unwrap()]).code, 2);
    assert_eq!(run(&["fixtures", "--name", "example99"]).code, 2);
    let p = write_fixture(dir.path(), "example10");
    assert_eq!(
        run(&["chains", p.to_str().unwrap(), "--metric", r#"{"kind":"nope"}"#]).code,
        2
    );
    assert_eq!(run(&["lft", p.to_str().unwrap(), "--mode", "approximate"]).code, 2);
}

#[test]
fn validate_reports_an_unnormalized_table() {
    let dir = TempDir::new().unwrap();
    let p = write_fixture(dir.path(), "example10");
    let text = std::fs::read_to_string(&p)
        .unwrap()
        .replacen(r#""p": "0.14""#, r#""p": "0.24""#, 1);
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, text).unwrap();
    let r = run(&["validate", broken.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    let e = &r.report["result"]["errors"][0];
    assert_eq!(e["kind"], "not_normalized");
    assert!(e["message"].as_str().unwrap().contains("pmf not normalized"));
    assert_eq!(run(&["lft", broken.to_str().unwrap()]).code, 2);
}

#[test]
fn fixtures_list_names_every_system() {
    let r = run(&["fixtures", "--list"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.report["result"]["fixtures"].as_array().unwrap().len(), 11);
}
