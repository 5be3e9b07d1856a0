use std::path::Path;
use std::process::{Command, Output};

fn wls(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wls"))
        .args(args)
        .current_dir(dir)
        .env_remove("WLS_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_solve_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&wls(d, &["gen", "--n", "15", "--seed", "3", "--out", "i.json", "--benchmark-out", "b.json"])), 0);
    let o = wls(d, &["solve", "--instance", "i.json", "--algorithm", "classical2", "--out", "p.json", "--report", "r.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = wls(d, &["eval", "--instance", "i.json", "--policy", "p.json", "--out", "c.json", "--trace", "t.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    let cert: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("c.json")).unwrap()).unwrap();
    let a = report["certificate"]["total_cost"].as_f64().unwrap();
    let b = cert["certificate"]["total_cost"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-9 * a);
    assert_eq!(cert["feasibility"]["feasible"], true);
    let ratio = report["ratio_vs_lower_bound"]["measured"].as_f64().unwrap();
    assert!((1.0..=2.0).contains(&ratio));

    let trace = std::fs::read_to_string(d.join("t.csv")).unwrap();
    assert!(trace.starts_with("t,commodity_id,inventory,total_space\n"));
    assert!(trace.lines().count() > 15);
}

#[test]
fn sub2_with_benchmark_is_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    wls(d, &["gen", "--n", "30", "--seed", "8", "--out", "i.json", "--benchmark-out", "b.json"]);
    let o = wls(d, &["solve", "--instance", "i.json", "--algorithm", "sub2", "--benchmark", "b.json", "--report", "r.json", "--out", "p.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(r["feasibility"]["feasible"], true);
    assert!(r["scenario"].is_string());
    let o = wls(d, &["eval", "--instance", "i.json", "--policy", "p.json"]);
    assert!(stderr(&o).contains(": feasible"), "{}", stderr(&o));
}

#[test]
fn broken_mass_balance_names_the_commodity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    wls(d, &["gen", "--n", "5", "--seed", "1", "--out", "i.json"]);
    wls(d, &["solve", "--instance", "i.json", "--out", "p.json"]);
    let mut p: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("p.json")).unwrap()).unwrap();
    let num = p["schedules"]["3"]["orders"][0][2].as_i64().unwrap();
    p["schedules"]["3"]["orders"][0][2] = (num * 2).into();
    std::fs::write(d.join("bad.json"), p.to_string()).unwrap();
    let o = wls(d, &["eval", "--instance", "i.json", "--policy", "bad.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("commodity 3"), "{}", stderr(&o));
}

#[test]
fn missing_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = wls(dir.path(), &["eval", "--instance", "nope.json", "--policy", "nope.json"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn gadget_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = wls(d, &["gadget", "--case", "1", "--emit-trace", "g.csv", "--report", "g.json"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS case 1"));
    assert!(d.join("g.csv").exists());
    let o = wls(d, &["gadget", "--case", "5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("measured 55/32"));
    assert_eq!(code(&wls(d, &["gadget", "--case", "2", "--k", "3"])), 1);
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for f in ["a.json", "b.json"] {
        let o = wls(d, &["po2", "--check", "lemma10", "--trials", "300", "--seed", "5", "--report", f]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
    wls(d, &["gen", "--n", "10", "--seed", "2", "--out", "i1.json"]);
    wls(d, &["gen", "--n", "10", "--seed", "2", "--out", "i2.json"]);
    assert_eq!(std::fs::read(d.join("i1.json")).unwrap(), std::fs::read(d.join("i2.json")).unwrap());
}
