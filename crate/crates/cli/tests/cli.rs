use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forced-sn"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn graphs_write_two_fields_and_a_report() {
    let d = TempDir::new().unwrap();
    let o = run(&["graphs", "--beta", "0.275"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["graph_lower.csv", "graph_upper.csv"] {
        let text = std::fs::read_to_string(d.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 2001);
        assert!(text.lines().skip(1).all(|l| l.ends_with(",0")));
    }
    let report = read_json(&d.path().join("pinching.json"));
    assert!(report["report"]["min_gap"].as_f64().unwrap() > 0.0);
    assert_eq!(report["config"]["beta"], 0.275);
}

#[test]
fn escape_everywhere_is_a_warning() {
    let d = TempDir::new().unwrap();
    let o = run(&["graphs", "--beta", "1", "--samples", "200"], d.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let text = std::fs::read_to_string(d.path().join("graph_upper.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",,1")));
    assert!(read_json(&d.path().join("pinching.json"))["report"].is_null());
}

#[test]
fn torus_gap_minimum_sits_on_the_first_period_two_orbit() {
    let d = TempDir::new().unwrap();
    let cfg = write(&d, "torus.json", r#"{"base": {"kind": "torus"}, "fibre": {"kind": "arctan2d"}}"#);
    let o = run(
        &["graphs", "--config", &cfg, "--beta", "0.18556", "--samples", "1600", "--depth", "3000"],
        d.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&d.path().join("pinching.json"));
    let c: Vec<f64> = r["report"]["argmin"]["coords"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(c == [0.25, 0.25] || c == [0.75, 0.75], "{c:?}");
}

#[test]
fn restricted_betac_on_m1() {
    let d = TempDir::new().unwrap();
    let cfg = write(&d, "torus.json", r#"{"base": {"kind": "torus"}, "fibre": {"kind": "arctan2d"}}"#);
    let o = run(&["betac", "--config", &cfg, "--restrict", "M1", "--tol", "1e-7"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&d.path().join("betac.json"));
    let b = r["result"]["beta_c"].as_f64().unwrap();
    assert!((b - 0.1855650809).abs() < 1e-6, "{b}");
    assert_eq!(r["result"]["restricted_to"], "M1");
}

#[test]
fn oracle_reference_value() {
    let d = TempDir::new().unwrap();
    let o = run(&["oracle", "--offset", "1"], d.path());
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&d.path().join("oracle.json"));
    assert!((r["closed_form"].as_f64().unwrap() - 0.1855650809).abs() < 1e-9);
    assert!((r["newton"]["beta_star"].as_f64().unwrap() - 0.1855650809).abs() < 1e-9);
}

#[test]
fn sweep_gap_column_decreases() {
    let d = TempDir::new().unwrap();
    let o = run(&["sweep", "--beta-grid", "0.26:0.28:21", "--samples", "500"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 21);
    let gaps: Vec<f64> = rows
        .iter()
        .filter_map(|l| l.split(',').nth(1).and_then(|g| g.parse().ok()))
        .collect();
    assert!(gaps.len() > 10);
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn outputs_are_reproducible_across_runs_and_threads() {
    let d = TempDir::new().unwrap();
    let a = d.path().join("a");
    let args = ["graphs", "--beta", "0.27", "--samples", "300", "--placement", "low_discrepancy", "--seed", "7"];
    let names = ["graph_lower.csv", "graph_upper.csv", "pinching.json"];
    let snapshot = |threads: &str| {
        let mut v = args.to_vec();
        v.extend(["--threads", threads]);
        assert!(run(&v, &a).status.success());
        names.map(|n| std::fs::read(a.join(n)).unwrap())
    };
    let first = snapshot("1");
    let second = snapshot("3");
    for (n, (x, y)) in names.iter().zip(first.iter().zip(&second)) {
        assert!(x == y, "{n} differs");
    }
}

#[test]
fn embedded_config_round_trips() {
    let d = TempDir::new().unwrap();
    let first = d.path().join("first");
    let o = run(&["lyap", "--beta", "0.26", "--n", "2000"], &first);
    assert!(o.status.success());
    let doc = read_json(&first.join("lyap.json"));
    let mut cfg = doc["config"].clone();
    cfg.as_object_mut().unwrap().remove("out");
    let path = write(&d, "resolved.json", &cfg.to_string());
    let second = d.path().join("second");
    assert!(run(&["lyap", "--config", &path], &second).status.success());
    let again = read_json(&second.join("lyap.json"));
    assert_eq!(doc["lambda_upper"], again["lambda_upper"]);
    let mut c2 = again["config"].clone();
    c2.as_object_mut().unwrap().remove("out");
    assert_eq!(cfg, c2);
}

#[test]
fn flowmap_samples_the_induced_map() {
    let d = TempDir::new().unwrap();
    let cfg = write(
        &d,
        "flow.json",
        r#"{"flow": {"t0": 1, "rho_flow": 0.3, "field": "linear", "params": {"a": -1}}}"#,
    );
    let o = run(&["flowmap", "--config", &cfg, "--beta", "0", "--samples", "4", "--x-points", "3"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.path().join("flowmap.csv")).unwrap();
    assert_eq!(text.lines().count(), 13);
    for l in text.lines().skip(1) {
        let d: f64 = l.split(',').nth(3).unwrap().parse().unwrap();
        assert!((d - (-1.0f64).exp()).abs() < 1e-10);
    }
}

#[test]
fn exit_codes() {
    let d = TempDir::new().unwrap();
    assert_eq!(run(&["graphs"], d.path()).status.code(), Some(2));
    let bad = write(&d, "bad.json", "{ not json");
    assert_eq!(run(&["betac", "--config", &bad], d.path()).status.code(), Some(2));
    let unknown = write(&d, "unknown.json", r#"{"fibre": {"kind": "logistic"}}"#);
    assert_eq!(run(&["betac", "--config", &unknown], d.path()).status.code(), Some(2));
    let narrow = write(&d, "narrow.json", r#"{"beta_range": [0.3, 0.4]}"#);
    let o = run(&["betac", "--config", &narrow, "--samples", "100"], d.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("precondition"));
    let lin = write(&d, "lin.json", r#"{"flow": {"t0": 1, "field": "linear", "params": {"a": -1}}}"#);
    assert_eq!(run(&["betac", "--config", &lin], d.path()).status.code(), Some(3));
    assert_eq!(run(&["oracle", "--offset", "1e6"], d.path()).status.code(), Some(4));
}
