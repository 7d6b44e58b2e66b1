use std::fs;

use tempfile::TempDir;

use pco_core::analysis::{check_global_sync, rate_bounds, ConditionStatus};
use pco_core::experiments::{run_grid, ExperimentConfig};
use pco_core::prf::{PhaseResponseFunction, PrfTable};
use pco_core::scenario::{Scenario, TopologyRef};
use pco_core::topology::Topology;

#[test]
fn topology_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let t = Topology::random_geometric(9, 0.5, 3).unwrap();
    let path = dir.path().join("t.json");
    fs::write(&path, serde_json::to_string(&t.to_doc()).unwrap()).unwrap();
    let back = Topology::from_json_path(&path).unwrap();
    assert_eq!(back.edges(), t.edges());
    assert_eq!(back.positions(), t.positions());
}

#[test]
fn scenario_resolves_relative_topology_path() {
    let dir = TempDir::new().unwrap();
    let sub = dir.path().join("nets");
    fs::create_dir(&sub).unwrap();
    fs::write(
        sub.join("pair.json"),
        r#"{"n": 2, "edges": [[0, 1]], "g": [0.01, 0], "l": 0.01, "T": 1}"#,
    )
    .unwrap();
    let scenario = dir.path().join("s.json");
    fs::write(
        &scenario,
        r#"{
            "topology": {"path": "nets/pair.json"},
            "qg": {"family": "sine", "amplitude": 1.0},
            "ql": {"family": "tanh", "epsilon": 0.2},
            "initial": [0.3, 0.1]
        }"#,
    )
    .unwrap();
    let s = Scenario::from_json_path(&scenario).unwrap();
    assert_eq!(s.topology().unwrap().n(), 2);
    let resolved = s.resolved().unwrap();
    assert!(matches!(resolved.topology, TopologyRef::Inline(_)));
    let text = serde_json::to_string(&resolved).unwrap();
    assert_eq!(Scenario::from_json_str(&text).unwrap(), resolved);
}

#[test]
fn csv_table_matches_analytic_prf() {
    let dir = TempDir::new().unwrap();
    let analytic = PhaseResponseFunction::tanh(0.4).unwrap();
    let rows: String = (0..=400)
        .map(|k| {
            let x = -std::f64::consts::PI + std::f64::consts::TAU * k as f64 / 400.0;
            format!("{x},{}\n", analytic.evaluate(x))
        })
        .collect();
    let path = dir.path().join("q.csv");
    fs::write(&path, format!("# tanh, eps = 0.4\nx,q\n{rows}")).unwrap();
    let table = PhaseResponseFunction::Custom(PrfTable::from_csv_path(&path).unwrap());
    assert!(table.validate_admissibility(1000).unwrap().passed());
    for k in 0..50 {
        let x = -3.0 + 0.12 * k as f64;
        assert!((table.evaluate(x) - analytic.evaluate(x)).abs() < 1e-3);
    }
}

#[test]
fn experiment_file_with_topology_path_is_inlined() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("line.json"),
        r#"{"n": 3, "edges": [[0, 1], [1, 2]], "g": [0, 0, 0], "l": 0, "T": 1}"#,
    )
    .unwrap();
    let cfg_path = dir.path().join("e.json");
    fs::write(
        &cfg_path,
        r#"{
            "topology": {"path": "line.json"},
            "attach": {"nodes": [2]},
            "eps_g": [0.4], "eps_l": [0.4], "g": [0.05], "l": [0.05],
            "init": {"uniform": [0.0, 1e-300]},
            "seed": 1, "runs": 1
        }"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::from_json_path(&cfg_path).unwrap();
    assert!(matches!(cfg.topology, TopologyRef::Inline(_)));
    let r = run_grid(&cfg).unwrap();
    assert_eq!(r.cells[0].mean_t_sync, Some(0.0));
}

#[test]
fn desk_network_with_every_node_attached_gets_a_report() {
    let desk = Topology::desk();
    let t = desk.with_coupling(vec![0.01; desk.n()], 0.01).unwrap();
    let q = PhaseResponseFunction::tanh(0.4).unwrap();
    let report = check_global_sync(&t, &q, &q, 2.0, 2000).unwrap();
    assert!(report.all_attached);
    assert_ne!(report.decay.status, ConditionStatus::Inapplicable);
    let bounds = rate_bounds(&t, &q, &q, 2.0, 2000).unwrap();
    assert!(bounds.bounds.alpha2.is_some());
}
