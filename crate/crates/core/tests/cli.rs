use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn dualmarket(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualmarket"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn dynamics_mode_writes_trajectory_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = fixture("parity.cfg");
    let o = dualmarket(&["run", "--mode", "dynamics", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let summary = String::from_utf8(o.stdout).unwrap();
    assert!(summary.starts_with("dynamics: converged=true"), "{summary}");
    assert!(summary.contains("symmetric=true"));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,g_B,g_W,pi_B,pi_W,gamma_B,gamma_W,w,eta_hat_B,eta_hat_W,k_B"
    );
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["mode"], "dynamics");
    assert_eq!(report["config"]["regime"], "parity");
    assert_eq!(report["result"]["steady_state"]["converged"], true);
}

#[test]
fn compare_mode_reports_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("asym.cfg");
    let o = dualmarket(&[
        "run", "--mode", "compare", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let pareto = read_json(&dir.path().join("pareto.json"));
    let verdicts = pareto["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 2);
    for v in verdicts {
        assert_eq!(v["dominates"], true, "{v}");
        assert_eq!(v["group_w_worse_off_mass"], 0.0);
    }
}

#[test]
fn missing_config_exits_one_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = dualmarket(&[
        "run", "--mode", "dynamics", "--config", "/no/such/scenario.cfg", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("/no/such/scenario.cfg"));
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "regime = parity\n\ntau = -3\n").unwrap();
    let o = dualmarket(&["run", "--mode", "dynamics", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("bad.cfg:3:"), "{err}");
}

#[test]
fn unknown_override_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dualmarket(&["run", "--mode", "dynamics", "--set", "no.such=1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn steady_state_nonconvergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("parity.cfg");
    let o = dualmarket(&[
        "run", "--mode", "steady-state", "--config", cfg.to_str().unwrap(), "--max-t", "2", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn overrides_beat_file_values_in_echoed_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("parity.cfg");
    let o = dualmarket(&[
        "run", "--mode", "dynamics", "--config", cfg.to_str().unwrap(), "--set", "seed=3", "--set", "init.g_B=0.4",
        "--tol", "1e-9", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["config"]["seed"], "3");
    assert_eq!(report["config"]["init.g_B"], "0.4");
    assert_eq!(report["config"]["run.tol"], "0.000000001");
}

#[test]
fn sweep_emits_one_line_per_point_in_grid_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("parity.cfg");
    let o = dualmarket(&[
        "run", "--mode", "dynamics", "--config", cfg.to_str().unwrap(), "--sweep", "form.cost.beta=0.5,1,2", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("sweep.jsonl")).unwrap();
    let betas: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["point"]["form.cost.beta"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(betas, ["0.5", "1", "2"]);
}

#[test]
fn sweep_over_initial_gaps_reports_convergence_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("parity.cfg");
    let o = dualmarket(&[
        "run", "--mode", "steady-state", "--config", cfg.to_str().unwrap(), "--set", "init.g_W=0.9", "--sweep",
        "init.g_B=0.1,0.3,0.5,0.7,0.9", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("sweep.jsonl")).unwrap();
    let times: Vec<u64> = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["result"]["steady_state"]["t_convergence"].as_u64().unwrap())
        .collect();
    assert_eq!(times.len(), 5);
    assert!(times.iter().all(|&t| t >= 1));
}

#[test]
fn abm_event_log_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = fixture("parity.cfg");
    for d in [&a, &b] {
        let o = dualmarket(&[
            "run", "--mode", "abm", "--config", cfg.to_str().unwrap(), "--set", "abm.steps=30", "--set",
            "abm.event_log=true", "--seed", "17", "--out", d.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let log = |d: &tempfile::TempDir| std::fs::read(d.path().join("events.log")).unwrap();
    assert!(!log(&a).is_empty());
    assert_eq!(log(&a), log(&b));
}

#[test]
fn lil_and_dp_dump_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dualmarket(&["lil", "--replicas", "1000", "--steps", "200", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(dir.path().join("lil.csv")).unwrap().starts_with("tau,"));
    let o = dualmarket(&["dp-dump", "--theta", "0.7", "--rho", "u", "--horizon", "8", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("dp.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "length,successes,steps_remaining,value,effort_prob");
    let meta = read_json(&dir.path().join("dp.json"));
    assert_eq!(meta["horizon"], 8);
}
