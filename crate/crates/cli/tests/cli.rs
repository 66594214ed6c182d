use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdc")).args(args).output().expect("spawn cdc")
}

fn cdc_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdc"))
        .args(args)
        .env(key, value)
        .output()
        .expect("spawn cdc")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn frac(v: &Value) -> String {
    format!("{}/{}", v["num"].as_str().unwrap(), v["den"].as_str().unwrap())
}

const EXAMPLE: [&str; 10] = ["--q", "3", "--n", "6", "--cm", "1", "--cs", "2", "--cr", "1"];

fn with<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(tail).copied().collect()
}

#[test]
fn plan_sequential_worked_example() {
    let v = json(&cdc(&with(&["plan"], &with(&EXAMPLE, &["--mode", "seq"]))));
    assert_eq!(frac(&v["r_star"]), "2/1");
    assert_eq!(v["k_star"], 5);
    assert_eq!(frac(&v["t_star"]), "17/9");
}

#[test]
fn plan_parallel_and_uncoded() {
    let v = json(&cdc(&["plan", "--q", "3", "--cm", "1", "--cs", "2", "--cr", "1", "--mode", "par"]));
    assert_eq!(frac(&v["r_star"]), "10/7");
    assert_eq!(v["k_star"], 6);
    assert_eq!(frac(&v["t_star"]), "31/21");

    let v = json(&cdc(&["plan", "--q", "3", "--cm", "1", "--cs", "2", "--cr", "1", "--uncoded", "--mode", "seq"]));
    assert_eq!(frac(&v["t_star"]), "2/1");

    let both = json(&cdc(&["plan", "--q", "3", "--cm", "0.5", "--cs", "3/2"]));
    assert_eq!(both.as_array().unwrap().len(), 2);
}

#[test]
fn plan_zero_redundancy_has_no_finite_k() {
    let v = json(&cdc(&["plan", "--q", "2", "--cm", "100", "--cs", "1", "--mode", "seq"]));
    assert_eq!(frac(&v["r_star"]), "0/1");
    assert_eq!(v["finite_k_achievable"], false);
    assert!(v["k_star"].is_null());
}

#[test]
fn build_simulate_bound_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("example.json");
    let p = path.to_str().unwrap();
    let out = cdc(&with(&["build"], &with(&EXAMPLE, &["--out", p])));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let trace = dir.path().join("trace.jsonl");
    let sim = json(&cdc(&["simulate", "--scheme", p, "--seed", "9", "--trace", trace.to_str().unwrap()]));
    assert_eq!(sim["oracle_match"], true);
    assert_eq!(frac(&sim["t"]), "17/9");
    assert_eq!(frac(&sim["report"]["l"]), "1/9");
    let lines = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(lines.lines().count(), 2);
    for line in lines.lines() {
        let entry: Value = serde_json::from_str(line).unwrap();
        assert_eq!(entry["recipients"], serde_json::json!([1, 2, 3]));
    }

    let direct = json(&cdc(&with(&["simulate"], &with(&EXAMPLE, &["--seed", "9"]))));
    assert_eq!(direct, sim);

    let bound = json(&cdc(&["bound", "--scheme", p]));
    assert_eq!(frac(&bound["enhanced_bound"]), "1/9");
    assert_eq!(frac(&bound["time_lower_sequential"]), "17/9");
}

#[test]
fn strict_divisibility_is_infeasible() {
    let out = cdc(&with(&["build"], &with(&EXAMPLE, &["--mode", "par"])));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("63"));

    let v = json(&cdc(&with(&["build"], &with(&EXAMPLE, &["--mode", "par", "--pad"]))));
    assert_eq!(v["spec"]["n"], 63);
    assert_eq!(v["layout"]["requested_n"], 6);
}

#[test]
fn search_small_instance() {
    let v = json(&cdc(&["search", "--q", "2", "--n", "4", "--kmax", "4", "--cm", "1", "--cs", "1", "--cr", "1", "--mode", "seq"]));
    assert_eq!(frac(&v["best"]["time"]), "7/4");
    assert_eq!(v["best"]["k"], 4);

    let out = cdc(&["search", "--q", "2", "--n", "4", "--kmax", "4", "--cm", "1", "--cs", "1", "--budget", "5"]);
    assert_eq!(out.status.code(), Some(3));
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn sweep_single_point_and_file() {
    let out = cdc(&["sweep", "--q", "100", "--ratio-min", "1", "--ratio-max", "1", "--steps", "1", "--mode", "seq"]);
    assert!(out.status.success());
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 1);
    let coded: f64 = rows[0][7].parse().unwrap();
    let uncoded: f64 = rows[0][9].parse().unwrap();
    assert!(coded < 0.25 * uncoded, "{coded} vs {uncoded}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = cdc(&[
        "sweep", "--q", "1", "--q-max", "20", "--ratio-min", "1/8", "--ratio-max", "8", "--steps", "5", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let rows = csv_rows(&std::fs::read_to_string(Path::new(&path)).unwrap());
    assert_eq!(rows.len(), 20 * 5 * 2);
    for row in rows {
        let coded: f64 = row[7].parse().unwrap();
        let uncoded: f64 = row[9].parse().unwrap();
        assert!(coded <= uncoded + 1e-12);
    }
}

#[test]
fn outputs_are_byte_identical() {
    let args = with(&["build"], &with(&EXAMPLE, &["--mode", "seq"]));
    assert_eq!(cdc(&args).stdout, cdc(&args).stdout);
    let sweep = ["sweep", "--q", "4", "--q-max", "9", "--ratio-min", "1/2", "--ratio-max", "3", "--steps", "4"];
    assert_eq!(cdc(&sweep).stdout, cdc_env(&sweep, "CDC_THREADS", "1").stdout);
}

#[test]
fn usage_errors() {
    assert_eq!(cdc(&["plan", "--q", "3"]).status.code(), Some(2));
    assert_eq!(cdc(&["plan", "--q", "3", "--cm", "-1", "--cs", "1"]).status.code(), Some(2));
    assert_eq!(cdc(&["simulate", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(cdc(&["search", "--q", "2", "--kmax", "3", "--cm", "1", "--cs", "1", "--mode", "both"]).status.code(), Some(2));
    assert_eq!(cdc_env(&["plan", "--q", "3", "--cm", "1", "--cs", "1"], "CDC_THREADS", "zero").status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"not\": \"a scheme\"}").unwrap();
    assert_eq!(cdc(&["bound", "--scheme", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cdc(&["bound", "--scheme", "/nonexistent/x.json"]).status.code(), Some(2));
}

#[test]
fn tampered_scheme_rejected() {
    let built = cdc(&with(&["build"], &EXAMPLE));
    let mut scheme: Value = serde_json::from_slice(&built.stdout).unwrap();
    scheme["layout"]["placement"]["map_sets"][0] = serde_json::json!([1]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tampered.json");
    std::fs::write(&path, serde_json::to_string(&scheme).unwrap()).unwrap();
    let out = cdc(&["simulate", "--scheme", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
