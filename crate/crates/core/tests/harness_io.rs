use std::fs;

use sircontrol::harness::output::{read_costs, read_estimates, read_trajectory, EstimateRecord};
use sircontrol::harness::{emit_csv, gap_grid, run_scenario, sweep_h, NoiseConfig, OutputSet, Preset, ScenarioConfig};

fn relative_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-11 * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn emitted_tables_parse_back_and_reemit_identically() {
    let artifacts = run_scenario(&Preset::PolicyCompare.config()).unwrap();
    let set = OutputSet::from(&artifacts);
    let dir = tempfile::tempdir().unwrap();
    let written = emit_csv(&set, dir.path()).unwrap();
    let names: Vec<_> = written.iter().map(|p| p.strip_prefix(dir.path()).unwrap().display().to_string()).collect();
    assert_eq!(
        names,
        [
            "optimal/trajectory.csv",
            "robust/trajectory.csv",
            "misestimated/trajectory.csv",
            "costs.csv",
            "summary.json"
        ]
    );

    for (label, rows) in &set.trajectories {
        let parsed = read_trajectory(fs::File::open(dir.path().join(label).join("trajectory.csv")).unwrap()).unwrap();
        assert_eq!(parsed.len(), rows.len());
        for (a, b) in parsed.iter().zip(rows) {
            assert!(relative_close(a.t, b.t) && relative_close(a.i_true, b.i_true) && relative_close(a.u_applied, b.u_applied));
            assert_eq!(a.stage, b.stage);
        }
    }
    let costs = read_costs(fs::File::open(dir.path().join("costs.csv")).unwrap()).unwrap();
    assert_eq!(costs.len(), 3);
    assert!(relative_close(costs[1].total_cost, artifacts.outcomes[1].cost.total_cost));

    let before: Vec<_> = written.iter().map(|p| fs::read(p).unwrap()).collect();
    emit_csv(&set, dir.path()).unwrap();
    let after: Vec<_> = written.iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn trajectory_rows_cover_the_grid_plus_switching_nodes() {
    let cfg = Preset::PolicyCompare.config();
    let artifacts = run_scenario(&cfg).unwrap();
    let grid = cfg.integrator.n_steps() + 1;
    for outcome in &artifacts.outcomes {
        let run = &outcome.run;
        let switches = [run.trace.switching.t_b, run.trace.switching.t_h].iter().flatten().count();
        assert!(run.trajectory.len() >= grid && run.trajectory.len() <= grid + switches, "{}", outcome.cost.policy);
    }
    assert_eq!(artifacts.outcomes[0].run.trajectory.len(), grid + 2);
}

#[test]
fn gap_grid_is_independent_of_scheduling() {
    let base = Preset::Fig1.config();
    let grid = [0.0, 0.03, 0.06, 0.09];
    let parallel = gap_grid(&base, &grid, true).unwrap();
    let sequential = gap_grid(&base, &grid, false).unwrap();
    assert_eq!(parallel, sequential);
    assert_eq!(parallel[0].cost.policy, "robust[0]");
}

#[test]
fn estimate_table_round_trips() {
    let mut cfg = Preset::BoundSweep.config();
    cfg.estimation.alphas = vec![1, 7, 50];
    let rows: Vec<EstimateRecord> = sweep_h(&cfg).unwrap().iter().map(EstimateRecord::from).collect();
    let dir = tempfile::tempdir().unwrap();
    emit_csv(&OutputSet { estimates: Some(rows.clone()), ..OutputSet::default() }, dir.path()).unwrap();
    let parsed = read_estimates(fs::File::open(dir.path().join("estimates.csv")).unwrap()).unwrap();
    assert_eq!(parsed.len(), 3);
    for (a, b) in parsed.iter().zip(&rows) {
        assert_eq!((a.alpha, a.contained), (b.alpha, b.contained));
        assert!(relative_close(a.beta_hat, b.beta_hat) && relative_close(a.bound_b, b.bound_b));
    }
}

#[test]
fn single_alpha_gives_single_row() {
    let mut cfg = Preset::ParamEst.config();
    cfg.estimation.alphas = vec![1];
    assert_eq!(sweep_h(&cfg).unwrap().len(), 1);
}

#[test]
fn vanishing_noise_matches_the_noise_free_sweep() {
    let mut clean = Preset::ParamEst.config();
    clean.estimation.alphas = vec![1, 10, 100];
    let noisy = ScenarioConfig { noise: NoiseConfig::SnrDb { db: 300.0 }, ..clean.clone() };
    for (a, b) in sweep_h(&clean).unwrap().iter().zip(&sweep_h(&noisy).unwrap()) {
        assert!((a.beta_hat - b.beta_hat).abs() <= 1e-6 && (a.gamma_hat - b.gamma_hat).abs() <= 1e-6);
    }
}

#[test]
fn config_json_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    for preset in Preset::ALL {
        let path = dir.path().join(format!("{preset}.json"));
        fs::write(&path, preset.config().to_json()).unwrap();
        let back = ScenarioConfig::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, preset.config());
    }
}
