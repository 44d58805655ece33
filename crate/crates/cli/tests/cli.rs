use std::fs;
use std::process::{Command, Output};

use tempfile::tempdir;

fn qqvqe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qqvqe"))
        .args(args)
        .env_remove("QQVQE_TABLE")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn oracle_prints_exact_and_reference_energies() {
    let o = qqvqe(&["oracle", "--r", "0.9"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("R,E0"));
    let row = lines.next().unwrap();
    let e0: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((e0 - -5.72524153).abs() < 1e-8);
    let note = lines.next().unwrap();
    assert!(note.starts_with('#'));
    assert!(note.contains("-2.863"));
}

#[test]
fn oracle_json_lists_every_distance() {
    let o = qqvqe(&["oracle", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 10);
    assert_eq!(v["reference"]["energy"], -2.863);
}

#[test]
fn curve_writes_csv_header() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let o = qqvqe(&["curve", "--r", "0.9,2.5", "--mode", "analytic", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "R,energy,std,oracle,success");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.9,"));
}

#[test]
fn empty_curve_is_header_only() {
    let o = qqvqe(&["curve", "--r", ""]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "R,energy,std,oracle,success\n");
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let dir = tempdir().unwrap();
    let paths: Vec<_> = (0..2).map(|i| dir.path().join(format!("run{i}.json"))).collect();
    for p in &paths {
        let o = qqvqe(&["run", "--r", "0.9", "--lambda", "0.2", "--qem", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(&paths[0]).unwrap();
    assert_eq!(a, fs::read(&paths[1]).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["gammas"].as_array().unwrap().len(), 4);
    assert!(v["trace"].as_array().unwrap().len() == v["n_evals"].as_u64().unwrap() as usize);
    assert_eq!(v["config"]["seed"], 7);
}

#[test]
fn run_trace_csv() {
    let o = qqvqe(&["run", "--mode", "analytic", "--format", "csv", "--max-evals", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("eval,energy,H1,Q1,H2,Q2,H3,Q3"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn sweep_and_bench_headers() {
    let o = qqvqe(&["noise-sweep", "--lambdas", "0.2", "--mode", "analytic", "--analytic-gamma", "--max-evals", "30"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        stdout(&o).lines().next(),
        Some("lambda,lambda_std,E_unmitigated,E_mitigated,E_expected_noisy,oracle")
    );

    let dir = tempdir().unwrap();
    let trials = dir.path().join("trials.csv");
    let o = qqvqe(&["bench-optimizers", "--trials", "3", "--trials-out", trials.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("optimizer,P_S,mean_evals,median_evals"));
    assert_eq!(text.lines().count(), 4);
    let t = fs::read_to_string(trials).unwrap();
    assert_eq!(t.lines().next(), Some("optimizer,trial,best_energy,n_evals,success"));
    assert_eq!(t.lines().count(), 10);
}

#[test]
fn tomography_round_trips_through_gammas_flag() {
    let dir = tempdir().unwrap();
    let g = dir.path().join("gammas.json");
    let o = qqvqe(&["tomography", "--lambda", "0.2", "--seed", "3", "--out", g.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = qqvqe(&[
        "run", "--lambda", "0.2", "--qem", "--gammas", g.to_str().unwrap(), "--mode", "analytic", "--max-evals", "10",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn table_override_adds_distances() {
    let dir = tempdir().unwrap();
    let table = dir.path().join("extra.csv");
    fs::write(&table, "R,II,IZ,ZI,ZZ,IX,ZX,XI,XZ,XX\n3.0,-1,0.5,0.5,0,0,0,0,0,0\n").unwrap();

    let o = qqvqe(&["oracle", "--r", "3.0"]);
    assert_eq!(o.status.code(), Some(1));

    let o = qqvqe(&["oracle", "--r", "3.0", "--table", table.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("3.0,-2"));

    let o = Command::new(env!("CARGO_BIN_EXE_qqvqe"))
        .args(["oracle", "--r", "3.0"])
        .env("QQVQE_TABLE", &table)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn exit_codes() {
    assert_eq!(qqvqe(&["--help"]).status.code(), Some(0));
    assert_eq!(qqvqe(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(qqvqe(&["run", "--shots", "many"]).status.code(), Some(1));
    assert_eq!(qqvqe(&["run", "--r", "0.33"]).status.code(), Some(1));
    assert_eq!(qqvqe(&["run", "--lambda", "1", "--qem"]).status.code(), Some(1));
    assert_eq!(qqvqe(&["noise-sweep", "--lambdas", "0.2,1.0"]).status.code(), Some(1));
    assert_eq!(qqvqe(&["run", "--shots", "0"]).status.code(), Some(1));

    let dir = tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = qqvqe(&["run", "--qem", "--gammas", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let out = dir.path().join("no-such-dir").join("x.csv");
    let o = qqvqe(&["oracle", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
