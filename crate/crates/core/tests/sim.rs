use std::path::PathBuf;

use linkflow::admission::AdmissionMode;
use linkflow::dynamics::FlatState;
use linkflow::sim::{
    monitor_constraints, monitors_csv, replay, run_scenario, trajectory_csv, FleetSpec,
    ScenarioConfig,
};
use linkflow::Vec3;

fn reference() -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/table1.cfg");
    ScenarioConfig::from_path(&path).unwrap()
}

fn single(q: Vec3, qdot: Vec3, duration: f64) -> ScenarioConfig {
    let mut cfg = reference();
    cfg.fleet = FleetSpec::Explicit(vec![FlatState::new(q, qdot)]);
    cfg.schedule = None;
    cfg.duration = duration;
    cfg
}

#[test]
fn empty_fleet_is_vacuous() {
    let mut cfg = reference();
    cfg.fleet = FleetSpec::Explicit(Vec::new());
    cfg.schedule = None;
    cfg.duration = 1.0;
    let r = run_scenario(&cfg).unwrap();
    assert_eq!(r.monitors.len(), 101);
    assert!(r.monitors.iter().all(|m| m.energy.h == 0.0 && m.min_sep.is_infinite()));
    assert!(r.trajectory.is_empty());
    assert!(r.verdicts.constraints_pass() && r.verdicts.objectives_pass());
}

#[test]
fn equilibrium_vehicle_flies_straight() {
    let q0 = Vec3::new(100.0, 0.0, 0.0);
    let v_hat = Vec3::new(10.0, 0.0, 0.0);
    let r = run_scenario(&single(q0, v_hat, 10.0)).unwrap();
    for row in &r.trajectory {
        let expect = q0 + v_hat * row.t;
        assert!((row.state.q - expect).norm() < 1e-9, "t={} q={:?}", row.t, row.state.q);
        assert_eq!(row.state.qdot, v_hat);
        assert_eq!(row.u, Vec3::zeros());
    }
    let first = r.monitors[0];
    for m in &r.monitors {
        assert_eq!((m.min_speed, m.max_speed, m.min_wall_dist), (first.min_speed, first.max_speed, first.min_wall_dist));
        assert_eq!(m.energy.h, 0.0);
    }
    assert_eq!(r.final_fleet.len(), 1);
    assert!((r.final_fleet[0].state.q.x - 200.0).abs() < 1e-9);
}

#[test]
fn overspeed_vehicle_fails_speed_envelope_at_start() {
    let r = run_scenario(&single(Vec3::new(100.0, 0.0, 0.0), Vec3::new(30.0, 0.0, 0.0), 2.0)).unwrap();
    assert!(!r.verdicts.c1.pass);
    assert_eq!(r.verdicts.c1.first_violation_t, Some(0.0));
    assert!(r.verdicts.c2.pass && r.verdicts.c3.pass);
}

#[test]
fn reference_entries_and_snapshots() {
    let r = run_scenario(&reference()).unwrap();
    assert!(r.verdicts.constraints_pass());
    assert_eq!(r.entries.len(), 9);
    assert!(r.entries.iter().all(|e| e.injected && e.ids.len() == 2));
    let mut times: Vec<f64> = r.trajectory.iter().map(|t| t.t).collect();
    times.dedup();
    let expect: Vec<f64> = (0..=10).map(|k| 20.0 * k as f64).collect();
    assert_eq!(times.len(), expect.len());
    for (a, b) in times.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn verdicts_replay_from_csv() {
    let mut cfg = reference();
    cfg.duration = 120.0;
    let r = run_scenario(&cfg).unwrap();
    let replayed = replay(&monitors_csv(&r), &trajectory_csv(&r), &cfg.link).unwrap();
    assert!(replayed.agrees_with(&r.verdicts, 1e-7), "{replayed:?} vs {:?}", r.verdicts);
    assert_eq!(monitor_constraints(&r), r.verdicts);

    let bad = run_scenario(&single(Vec3::new(100.0, 0.0, 0.0), Vec3::new(30.0, 0.0, 0.0), 2.0)).unwrap();
    let replayed = replay(&monitors_csv(&bad), &trajectory_csv(&bad), &cfg.link).unwrap();
    assert!(replayed.agrees_with(&bad.verdicts, 1e-7));
}

#[test]
fn same_seed_same_bytes() {
    let mut cfg = reference();
    cfg.duration = 60.0;
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(monitors_csv(&a), monitors_csv(&b));
    assert_eq!(trajectory_csv(&a), trajectory_csv(&b));
    cfg.seed += 1;
    let c = run_scenario(&cfg).unwrap();
    assert_ne!(monitors_csv(&a), monitors_csv(&c));
}

#[test]
fn observe_mode_injects_rejected_groups() {
    let mut cfg = reference();
    cfg.duration = 45.0;
    cfg.admission.mode = AdmissionMode::Observe;
    cfg.admission.lambda = Some(2.0);
    let s = cfg.schedule.as_mut().unwrap();
    s.velocity_offsets = Some(vec![Vec3::new(0.0, 5.0, 0.0), Vec3::new(0.0, -5.0, 0.0)]);
    let r = run_scenario(&cfg).unwrap();
    assert!(r.entries.iter().all(|e| e.injected && !e.verdict.is_admit()));

    cfg.admission.mode = AdmissionMode::Enforce;
    let r = run_scenario(&cfg).unwrap();
    assert!(r.entries.iter().all(|e| !e.injected));
    assert_eq!(r.final_fleet.len(), 6);
}

#[test]
fn exit_drop_removes_departed_vehicles() {
    let mut cfg = single(Vec3::new(990.0, 0.0, 0.0), Vec3::new(10.0, 0.0, 0.0), 2.0);
    cfg.exit_drop = true;
    let r = run_scenario(&cfg).unwrap();
    assert!(r.final_fleet.is_empty());
    assert_eq!(r.monitors.last().unwrap().vehicles, 0);
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = reference();
    cfg.link.v_hat = Vec3::new(0.0, 10.0, 0.0);
    let err = run_scenario(&cfg).unwrap_err();
    assert!(err.to_string().contains("velocity-not-parallel"), "{err}");
}
