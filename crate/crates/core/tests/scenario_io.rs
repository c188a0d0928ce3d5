use formation_core::formation::RigidityClass;
use formation_core::log::{log_from_str, log_to_string};
use formation_core::scenario::bundled_names;
use formation_core::*;

fn header_for(s: &Scenario) -> LogHeader {
    LogHeader {
        scenario_digest: s.digest(),
        robot_count: s.config.robot_count(),
        edge_count: s.config.shape.graph().edge_count(),
    }
}

#[test]
fn square_scenario_is_the_rigid_square_with_diagonal() {
    let s = Scenario::bundled("square-1m").unwrap();
    let g = s.config.shape.graph();
    assert_eq!(g.robot_count(), 4);
    assert_eq!(g.edge_count(), 5);
    assert_eq!(
        s.config.shape.rigidity().unwrap().classification,
        RigidityClass::InfinitesimallyRigid
    );
    let d = s.config.shape.desired_distances();
    assert_eq!(d[0], 1.0);
    assert!((d[2] - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn omitted_dt_defaults_to_five_hertz() {
    let s = load_scenario(r#"{"shape": {"edges": [[0, 1]], "reference_positions": [[0, 0], [2, 0]]}}"#).unwrap();
    assert_eq!(s.config.dt, 0.2);
    assert_eq!(s.config.shape.desired_distances(), &[2.0]);
}

#[test]
fn triangle_with_cyclic_estimators_is_rejected() {
    let text = r#"{
        "shape": {"edges": [[0, 1], [1, 2], [2, 0]], "reference_positions": [[0, 0], [1, 0], [0, 1]]},
        "biases": [{"robot": 0, "edge": 0, "mu": 0.01}],
        "estimator": {"enabled": true, "assignment": [0, 1, 2]}
    }"#;
    match load_scenario(text) {
        Err(Error::EstimationCycle(c)) => assert_eq!(c.robots.len(), 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn explicit_distances_must_agree_with_reference() {
    let text = r#"{"shape": {"edges": [[0, 1]], "distances": [1.5], "reference_positions": [[0, 0], [1, 0]]}}"#;
    assert!(matches!(load_scenario(text), Err(Error::ScenarioField { .. })));
}

#[test]
fn loading_never_panics_on_mangled_input() {
    let good = formation_core::scenario::bundled_text("square-1m-estimator").unwrap();
    // Truncations and single-byte edits of a valid document.
    for cut in (0..good.len()).step_by(7) {
        let _ = load_scenario(&good[..cut]);
    }
    for (i, _) in good.char_indices().step_by(5) {
        for repl in ["9", "-", "\"", "]", "null"] {
            let mut s = good.to_string();
            s.replace_range(i..i + 1, repl);
            let _ = load_scenario(&s);
        }
    }
}

#[test]
fn full_biased_run_logs_1500_rows_and_round_trips() {
    let s = Scenario::bundled("square-1m-biased").unwrap();
    let records = run(&s.config, &s.schedule).unwrap();
    assert_eq!(records.len(), 1500);
    let text = log_to_string(&header_for(&s), &records).unwrap();
    assert_eq!(text.lines().count(), 1502);
    assert!(text.starts_with(&format!("# formation-log v1 scenario_digest={}\n", s.digest())));
    let back = log_from_str(&text).unwrap();
    assert_eq!(back.records, records);
}

#[test]
fn log_files_round_trip() {
    let s = Scenario::bundled("office-tour").unwrap().with_duration(20.0).unwrap();
    let records = run(&s.config, &s.schedule).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    write_log_file(&path, &header_for(&s), &records).unwrap();
    let back = read_log_file(&path).unwrap();
    assert_eq!(back.header, header_for(&s));
    assert_eq!(back.records, records);
    assert!(matches!(
        read_log_file(&dir.path().join("missing.csv")),
        Err(Error::Io(_))
    ));
}

#[test]
fn bundled_scenarios_run_without_breaking() {
    for name in bundled_names() {
        let s = Scenario::bundled(name).unwrap();
        let records = run(&s.config, &s.schedule).unwrap();
        assert_eq!(records.len(), s.config.tick_count(), "{name}");
        assert!(records.iter().all(|r| r.positions().iter().all(|p| p.is_finite())));
    }
}

#[test]
fn office_tour_follows_its_schedule() {
    let s = Scenario::bundled("office-tour").unwrap();
    let records = run(&s.config, &s.schedule).unwrap();
    let at = |t: f64| &records[(t / s.config.dt).round() as usize];
    // 30 s at 0.15 m/s along x.
    let dx = at(35.0).centroid.x - at(5.0).centroid.x;
    assert!((dx - 4.5).abs() < 0.05, "{dx}");
    // Quarter turn between 35 s and 50.7 s.
    let turn = at(50.6).orient - at(35.0).orient;
    assert!((turn - 0.1 * 15.6).abs() < 0.05, "{turn}");
    let m = metrics(&records, &MetricsOptions::default()).unwrap();
    assert!(m.centroid_path_length > 8.0);
}

#[test]
fn metrics_of_the_estimator_run_report_the_estimate() {
    let s = Scenario::bundled("square-1m-estimator").unwrap();
    let records = run(&s.config, &s.schedule).unwrap();
    let m = metrics(&records, &MetricsOptions::default()).unwrap();
    assert!(m.edges[0].mu_hat_mean.is_some());
    assert!(m.edges[1..].iter().all(|e| e.mu_hat_mean.is_none()));
    let json = serde_json::to_string(&m).unwrap();
    let back: Metrics = serde_json::from_str(&json).unwrap();
    assert_eq!(back, m);
}
