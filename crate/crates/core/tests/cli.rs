use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heat-goh")).args(args).output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn coarse_example_passes_in_coarse_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["example", "--grid", "17,48", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["status"], "pass");
    assert_eq!(r["grid"]["coarse"], true);
    for section in ["first_order", "arcs", "quadratic_equivalence", "coercivity", "growth"] {
        assert_eq!(r[section]["passed"], true, "{section}");
    }
    assert!(dir.path().join("example_truth.csv").exists());
    assert!(dir.path().join("coercivity_direction.csv").exists());
}

#[test]
fn verify_accepts_the_example_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "verify",
        "--problem",
        data("example.json").to_str().unwrap(),
        "--candidate",
        data("example_truth.csv").to_str().unwrap(),
        "--grid",
        "51,600",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["passed"], true);
    assert_eq!(r["arcs"]["details"]["labels"], serde_json::json!(["B", "C", "S"]));
}

#[test]
fn negated_costate_fails_first_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "verify",
        "--problem",
        data("example_negated_costate.json").to_str().unwrap(),
        "--candidate",
        data("example_truth.csv").to_str().unwrap(),
        "--grid",
        "51,600",
        "--checks",
        "first_order",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let r = report(dir.path());
    assert_eq!(r["status"], "check_failed");
    assert_eq!(r["first_order"]["passed"], false);
    assert_eq!(r["growth"], serde_json::json!({}));
}

#[test]
fn no_checks_leaves_empty_sections() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["example", "--grid", "17,48", "--checks", "none", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let r = report(dir.path());
    for section in ["first_order", "arcs", "quadratic_equivalence", "coercivity", "growth"] {
        assert_eq!(r[section], serde_json::json!({}), "{section}");
    }
}

#[test]
fn implicit_euler_example_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "example",
        "--grid",
        "33,200",
        "--scheme",
        "implicit_euler",
        "--samples",
        "20",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(dir.path())["grid"]["scheme"], "implicit_euler");
}

#[test]
fn sweeps_write_orders() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["sweep", "grid", "--grid", "17,48", "33,96", "65,192", "--out", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path());
    assert!(r["slope"].as_f64().unwrap() > 1.9);
    assert_eq!(fs::read_to_string(dir.path().join("orders.csv")).unwrap().lines().count(), 4);

    let out = run(&["sweep", "amplitude", "--grid", "33,200", "--out", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(dir.path())["passed"], true);

    let out = run(&["sweep", "amplitude", "--amplitudes", "0.1", "--grid", "17,48", "--out", d]);
    assert_eq!(code(&out), 2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["example", "--grid", "3,10", "--out", d])), 2);
    assert_eq!(code(&run(&["example", "--grid", "abc", "--out", d])), 2);
    assert_eq!(code(&run(&["example", "--checks", "bogus", "--out", d])), 2);

    let cand = dir.path().join("cand.csv");
    fs::write(&cand, "t,u1\n0,1\n3,1\n").unwrap();
    let out = run(&[
        "verify",
        "--problem",
        data("example.json").to_str().unwrap(),
        "--candidate",
        cand.to_str().unwrap(),
        "--out",
        d,
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu_dot1"));

    let missing = dir.path().join("missing.json");
    let out = run(&["verify", "--problem", missing.to_str().unwrap(), "--candidate", cand.to_str().unwrap(), "--out", d]);
    assert_eq!(code(&out), 2);
}

#[test]
fn chattering_candidate_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,u1,mu_dot1\n");
    for b in 0..100 {
        let u = if b % 2 == 0 { "10.869604401089358" } else { "-1" };
        csv.push_str(&format!("{},{u},0\n{},{u},0\n", b as f64 * 0.03, (b + 1) as f64 * 0.03));
    }
    let cand = dir.path().join("chatter.csv");
    fs::write(&cand, csv).unwrap();
    let out = run(&[
        "verify",
        "--problem",
        data("example.json").to_str().unwrap(),
        "--candidate",
        cand.to_str().unwrap(),
        "--grid",
        "17,200",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path());
    assert_eq!(r["status"], "numerical_failure");
    assert!(r["arcs"]["error"].as_str().unwrap().contains("arcs"), "{}", r["arcs"]);
}

#[test]
fn reports_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = run(&["example", "--grid", "17,48", "--seed", "3", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&out), 0);
    }
    for name in ["report.json", "growth.csv", "equivalence.csv", "coercivity.csv"] {
        let read = |d: &tempfile::TempDir| fs::read(d.path().join(name)).unwrap();
        assert_eq!(read(&a), read(&b), "{name}");
    }
}
