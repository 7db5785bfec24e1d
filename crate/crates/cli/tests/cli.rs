use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sircontrol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sircontrol")).args(args).output().expect("binary runs")
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

#[test]
fn reproduce_policy_compare_writes_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = sircontrol(&["reproduce", "policy-compare", "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("policy-compare");
    for label in ["optimal", "robust", "misestimated"] {
        assert_eq!(header(&root.join(label).join("trajectory.csv")), "t,S_true,I_true,R_true,S_meas,I_meas,u_applied,stage");
    }
    assert_eq!(header(&root.join("costs.csv")), "policy,total_cost,gap_direct,gap_lemma4,gap_thm4,gap_upper,t_b,t_h,feasible");
    assert!(root.join("summary.json").exists());
}

#[test]
fn estimate_honours_alpha_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = sircontrol(&["estimate", "--alphas", "1", "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("estimates.csv")).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "alpha,h,beta_hat,gamma_hat,err_norm,bound_b,contained");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn sir_wave_is_open_loop() {
    let dir = tempfile::tempdir().unwrap();
    let out = sircontrol(&["reproduce", "sir-wave", "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("sir-wave/open_loop/trajectory.csv")).unwrap();
    // 110 time units at step 0.01, plus the header
    assert_eq!(text.lines().count(), 11_002);
}

#[test]
fn invalid_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sircontrol(&["simulate", "--u-max=-0.1", "--out", &out_arg(dir.path())]).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"name\": 3}").unwrap();
    assert_eq!(sircontrol(&["simulate", "--config", &out_arg(&bad)]).status.code(), Some(2));
    assert_eq!(sircontrol(&["simulate", "--config", "/nonexistent/scenario.json"]).status.code(), Some(2));
}

#[test]
fn infeasible_robust_run_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = sircontrol(&["simulate", "--u-max", "0.05", "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("costs.csv").exists());
}

#[test]
fn dumped_config_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let dump = sircontrol(&["config", "fig1"]);
    assert_eq!(dump.status.code(), Some(0));
    let cfg = dir.path().join("fig1.json");
    fs::write(&cfg, &dump.stdout).unwrap();

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(sircontrol(&["simulate", "--config", &out_arg(&cfg), "--out", &out_arg(&a)]).status.code(), Some(0));
    assert_eq!(sircontrol(&["reproduce", "fig1", "--out", &out_arg(&b)]).status.code(), Some(0));
    for file in ["costs.csv", "robust/trajectory.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join("fig1").join(file)).unwrap(), "{file}");
    }
}

#[test]
fn gap_command_writes_one_row_per_inflation() {
    let dir = tempfile::tempdir().unwrap();
    let out = sircontrol(&["gap", "--inflations", "0,0.05", "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("costs.csv")).unwrap();
    let policies: Vec<_> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(policies, ["robust[0]", "robust[0.05]"]);
}
