use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BORROW_TO_BUY: &str = r#"{"utility":{"kind":"power","p":0.5,"lambda":1.0,"rho":0.1},"rates":{"r":0.02,"R":0.04},
 "constraints":{"pi_lo":-1,"pi_hi":2,"c_lo":0.02,"c_hi":0.05},
 "uncertainty":{"variant":"rect","mu_lo":0.10,"mu_hi":0.12,"sigma_lo":0.1,"sigma_hi":0.2},"T":5,"x0":1}"#;

// mu_lo < r and mu_hi > R: every position loses against some drift.
const NO_TRADING: &str = r#"{"utility":{"kind":"log","lambda":0.1,"rho":0.05},"rates":{"r":0.02,"R":0.04},
 "constraints":{"pi_lo":"-inf","pi_hi":"inf","c_lo":0.0,"c_hi":"inf"},
 "uncertainty":{"variant":"rect","mu_lo":0.01,"mu_hi":0.05,"sigma_lo":0.1,"sigma_hi":0.2},"T":3,"x0":2}"#;

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robust-merton"))
        .args(args)
        .env("ROBUST_MERTON_THREADS", "2")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn classify_no_trading() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "nt.json", NO_TRADING);
    let out = run(&["classify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["regime"], "no_trading");
    assert_eq!(v["pi_star"].as_f64(), Some(0.0));
}

#[test]
fn classify_and_value_borrow_to_buy() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "btb.json", BORROW_TO_BUY);
    let v = json(&run(&["classify", path.to_str().unwrap()]));
    assert_eq!(v["regime"], "borrow_to_buy");
    assert_eq!(v["pi_star"].as_f64(), Some(2.0));
    let v = json(&run(&["value", path.to_str().unwrap()]));
    let q0 = v["q0"].as_f64().unwrap();
    assert!((v["value"].as_f64().unwrap() - 2.0 * q0.exp()).abs() < 1e-12);
}

#[test]
fn consume_csv_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "btb.json", BORROW_TO_BUY);
    let target = dir.path().join("c.csv");
    let out = run(&["consume", path.to_str().unwrap(), "-o", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(target).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,c_star,regime"));
    assert!(lines.count() > 100);
}

#[test]
fn invalid_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing_t = BORROW_TO_BUY.replace(r#""T":5,"#, "");
    let path = write(dir.path(), "bad.json", &missing_t);
    let out = run(&["classify", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`T`"));

    let inverted = BORROW_TO_BUY.replace(r#""c_lo":0.02,"c_hi":0.05"#, r#""c_lo":0.05,"c_hi":0.02"#);
    let path = write(dir.path(), "inv.json", &inverted);
    assert_eq!(run(&["solve", path.to_str().unwrap()]).status.code(), Some(1));

    let path = write(dir.path(), "ok.json", BORROW_TO_BUY);
    assert_eq!(run(&["classify", path.to_str().unwrap(), "--format", "csv"]).status.code(), Some(1));
    assert_eq!(run(&["sweep", path.to_str().unwrap(), "--param", "rho", "--from", "0", "--to", "1"]).status.code(), Some(1));
    assert_eq!(run(&["verify", path.to_str().unwrap(), "--paths", "10"]).status.code(), Some(1));
}

#[test]
fn failed_sweep_check_exits_two() {
    // Sweeping sigma_hi from a short base contradicts the long-position row.
    let dir = tempfile::tempdir().unwrap();
    let short = BORROW_TO_BUY
        .replace(r#""mu_lo":0.10,"mu_hi":0.12"#, r#""mu_lo":0.0,"mu_hi":0.01"#)
        .replace(r#""R":0.04"#, r#""R":0.05"#);
    let path = write(dir.path(), "short.json", &short);
    let out = run(&["sweep", path.to_str().unwrap(), "--param", "sigma_hi", "--from", "0.2", "--to", "0.5", "--format", "json"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stdout));
    let v = json(&out);
    assert!(v["checks"].as_array().unwrap().iter().any(|c| c["pass"] == false));
}

#[test]
fn verify_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "btb.json", BORROW_TO_BUY);
    let args = ["verify", path.to_str().unwrap(), "--paths", "2000", "--steps", "100", "--seed", "3"];
    let a = run(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_robust-merton"))
        .args(args)
        .env("ROBUST_MERTON_THREADS", "1")
        .output()
        .unwrap();
    assert!(matches!(a.status.code(), Some(0 | 2)));
    assert_eq!(a.stdout, b.stdout);
    assert!(json(&a)["saddle_checks"].as_array().unwrap().len() == 12);
}

#[test]
fn sample_scenarios_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let out = run(&["value", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        n += 1;
    }
    assert!(n >= 4);
}
