//! End-to-end runs of the compiled binary: exit codes, report shape, and
//! byte-level determinism of every artifact.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shortfall"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout_str(out)).expect("stdout parses as JSON")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, contents).expect("write fixture");
    path.display().to_string()
}

const SCENARIOS: &str = "asset_1,asset_2\n0.1,-0.2\n-0.3,0.1\n0.2,0.05\n-0.1,-0.15\n0.05,0.3\n";
const DOMINANT: &str = "asset_1,asset_2\n0.10,0.05\n0.20,0.10\n0.10,0.00\n";

#[test]
fn optimize_reports_the_solution_and_echoes_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_file(dir.path(), "s.csv", SCENARIOS);
    let out = run(&[
        "optimize",
        "--scenarios",
        &scen,
        "--beta",
        "0.7",
        "--eta-tilde",
        "0.1",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["command"], "optimize");
    assert_eq!(v["config"]["beta"], 0.7);
    assert_eq!(v["config"]["eta_tilde"], 0.1);
    assert!(v["version"].as_str().unwrap().contains('.'));
    assert_eq!(v["result"]["status"], "Optimal");
    let w: Vec<f64> = v["result"]["w"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(w.len(), 2);
    assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-9);
    let v_star = v["result"]["v"].as_f64().unwrap();
    let eps = v["result"]["epsilon"].as_f64().unwrap();
    let q0 = v["result"]["q0"].as_f64().unwrap();
    let norm = w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
    assert!((q0 - norm).abs() < 1e-12);
    assert!(v_star > eps);
}

#[test]
fn optimize_signals_instability_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_file(dir.path(), "dom.csv", DOMINANT);
    let out = run(&["optimize", "--scenarios", &scen, "--beta", "0.7"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["result"]["status"], "Unbounded");
    let ray = v["result"]["ray"].as_array().unwrap();
    assert_eq!(ray.len(), 2);
    assert!(v["result"].get("w").is_none());
}

#[test]
fn optimize_worst_loss_paths_work() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_file(dir.path(), "s.csv", SCENARIOS);
    let plain = run(&["optimize", "--scenarios", &scen, "--ml"]);
    assert!(plain.status.success());
    assert_eq!(json(&plain)["config"]["mode"], "ml");

    let reg = run(&["optimize", "--scenarios", &scen, "--ml", "--eta", "0.05"]);
    assert!(reg.status.success());
    let v = json(&reg);
    assert_eq!(v["result"]["status"], "Optimal");
    assert_eq!(v["config"]["eta"], 0.05);

    let mixed = run(&[
        "optimize",
        "--scenarios",
        &scen,
        "--ml",
        "--eta-tilde",
        "0.1",
    ]);
    assert_eq!(mixed.status.code(), Some(1));
}

#[test]
fn optimize_rejects_malformed_csv_with_line_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_file(dir.path(), "bad.csv", "asset_1,asset_2\n0.1,oops\n");
    let out = run(&["optimize", "--scenarios", &bad, "--beta", "0.7"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2"), "stderr was: {err}");
    assert!(err.contains("oops"));
}

#[test]
fn replica_sweep_writes_a_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path_a = dir.path().join("a.csv");
    let path_b = dir.path().join("b.csv");
    let args = |p: &Path| {
        vec![
            "replica".to_string(),
            "--beta".into(),
            "0.7".into(),
            "--eta-tilde".into(),
            "0,0.1".into(),
            "--t".into(),
            "0.3:0.6:0.15".into(),
            "--out".into(),
            p.display().to_string(),
        ]
    };
    let first = bin().args(args(&path_a)).output().unwrap();
    assert!(first.status.success());
    let v = json(&first);
    assert_eq!(v["command"], "replica");
    assert_eq!(v["result"]["rows"], 6);
    assert_eq!(
        v["result"]["converged"].as_u64().unwrap() + v["result"]["diverged"].as_u64().unwrap(),
        6
    );

    let second = bin().args(args(&path_b)).output().unwrap();
    assert!(second.status.success());
    assert_eq!(fs::read(&path_a).unwrap(), fs::read(&path_b).unwrap());

    // Without --out the same CSV streams to stdout.
    let streamed = run(&[
        "replica",
        "--beta",
        "0.7",
        "--eta-tilde",
        "0,0.1",
        "--t",
        "0.3:0.6:0.15",
    ]);
    assert!(streamed.status.success());
    assert_eq!(streamed.stdout, fs::read(&path_a).unwrap());
    let header = stdout_str(&streamed);
    assert!(header.starts_with("beta,eta_tilde,t,eps_tilde,q0_tilde,delta,q0,status\n"));
}

#[test]
fn replica_phase_boundary_reports_critical_ratios() {
    let out = run(&["replica", "--phase-boundary", "--beta", "0.5:0.9:0.2"]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("beta,t_star"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert!((rows[1][0] - 0.7).abs() < 1e-9);
    assert!((rows[1][1] - 0.4633).abs() < 0.01);
    // The critical ratio rises with the confidence level.
    assert!(rows[0][1] < rows[1][1] && rows[1][1] < rows[2][1]);
}

#[test]
fn mc_ensemble_output_is_identical_across_thread_counts() {
    let args = [
        "mc", "--N", "12", "--T", "40", "--beta", "0.7", "--eta-tilde", "0.1", "--runs", "4",
        "--seed", "7",
    ];
    let one = bin().arg("--jobs").arg("1").args(args).output().unwrap();
    let two = bin().arg("--jobs").arg("2").args(args).output().unwrap();
    assert!(one.status.success());
    assert_eq!(one.stdout, two.stdout);
    let v = json(&one);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["spec"]["seed"], 7);
    assert_eq!(v["feasible_fraction"], 1.0);
    assert_eq!(v["records"].as_array().unwrap().len(), 4);
}

#[test]
fn mc_feasibility_writes_curve_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let out = bin()
        .args([
            "mc",
            "--feasibility",
            "--beta",
            "0.7",
            "--N",
            "16",
            "--t",
            "0.2:0.8:0.2",
            "--runs",
            "6",
            "--seed",
            "7",
            "--out",
        ])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["config"]["n_assets"], 16);
    assert_eq!(v["result"]["points"], 4);
    assert!(v["result"]["crossing"].as_f64().is_some());
    let csv = fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with("t,feasible_fraction,n,seed\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn mc_compare_accepts_an_explicit_prediction() {
    let out = run(&[
        "mc",
        "--compare",
        "--N",
        "10",
        "--T",
        "40",
        "--beta",
        "0.7",
        "--eta-tilde",
        "0.1",
        "--runs",
        "3",
        "--seed",
        "7",
        "--replica-point",
        "0.3,2.0,0.8",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["result"]["saddle"]["delta"], 0.8);
    let q0_pred = v["result"]["comparison"]["q0_predicted"].as_f64().unwrap();
    assert!((q0_pred - 2.0 * 0.8 * 0.8).abs() < 1e-12);
    assert!(v["result"]["comparison"]["q0_pass"].is_boolean());
}

#[test]
fn liquidate_reproduces_hand_computed_cash() {
    let dir = tempfile::tempdir().unwrap();
    let sched = write_file(dir.path(), "sched.csv", "asset_1,asset_2\n1,1\n1,1\n");
    let rets = write_file(dir.path(), "ret.csv", "asset_1,asset_2\n0,0\n0,0\n");
    let csv_path = dir.path().join("run.csv");
    let out = bin()
        .args([
            "liquidate",
            "--schedule",
            &sched,
            "--returns",
            &rets,
            "--p0",
            "1,1",
            "--eta",
            "0.25",
            "--out",
        ])
        .arg(&csv_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["result"]["total_proceeds"], 2.5);
    let csv = fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("t,cash,price_1,price_2\n"));
    assert!(csv.contains("0,1.50000000000e00,"));

    // Frictionless trading at unit prices just pays out the schedule;
    // without --out the CSV itself is the stdout artifact.
    let free = run(&[
        "liquidate",
        "--schedule",
        &sched,
        "--returns",
        &rets,
        "--p0",
        "1,1",
    ]);
    assert!(free.status.success());
    let total: f64 = stdout_str(&free)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert_eq!(total, 4.0);
}

#[test]
fn liquidate_handles_an_empty_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let sched = write_file(dir.path(), "sched.csv", "asset_1,asset_2\n");
    let rets = write_file(dir.path(), "ret.csv", "asset_1,asset_2\n0,0\n");
    let csv_path = dir.path().join("run.csv");
    let out = bin()
        .args(["liquidate", "--schedule", &sched, "--returns", &rets, "--out"])
        .arg(&csv_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json(&out)["result"]["steps"], 0);
    assert_eq!(fs::read_to_string(&csv_path).unwrap(), "t,cash,price_1,price_2\n");
}

#[test]
fn help_names_every_subcommand_and_flag_group() {
    let top = run(&["--help"]);
    let text = stdout_str(&top);
    for name in ["optimize", "replica", "mc", "liquidate", "--jobs"] {
        assert!(text.contains(name), "missing {name} in top-level help");
    }
    for (sub, flag) in [
        ("optimize", "--eta-tilde"),
        ("replica", "--phase-boundary"),
        ("mc", "--feasibility"),
        ("liquidate", "--schedule"),
    ] {
        let out = run(&[sub, "--help"]);
        assert!(out.status.success());
        assert!(stdout_str(&out).contains(flag), "{sub} help lacks {flag}");
    }
}
