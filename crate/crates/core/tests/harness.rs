use dynadense::harness::{
    check_round_budget, emit_report, replay, run_scenario, run_sweep, Formats, HarnessError, QueryStatus,
    ScenarioConfig, SweepGrid,
};

fn config(json: &str) -> ScenarioConfig {
    ScenarioConfig::from_json(json).unwrap()
}

fn k5(extra: &str) -> ScenarioConfig {
    let edges: Vec<String> = (0..5).flat_map(|u| (u + 1..5).map(move |v| format!("[{u},{v}]"))).collect();
    config(&format!(
        r#"{{"seed": 3, "graph": {{"kind": "edges", "n": 5, "edges": [{}]}},
            "protocol": {{"epsilon": 0.5 {extra}}}, "duration": {{"passes": 2}},
            "queries": {{"every_pass": true}}}}"#,
        edges.join(",")
    ))
}

#[test]
fn static_k5_query_is_within_bound() {
    let report = run_scenario(&k5("")).unwrap();
    let answered: Vec<_> = report.queries.iter().filter(|q| q.status == QueryStatus::Answered).collect();
    assert!(!answered.is_empty());
    for q in &answered {
        assert_eq!(q.oracle_density, "2/1");
        assert!(q.ratio_f64.unwrap() <= 2.5);
        assert!(q.conditioned, "r = 0 conditions every query");
        assert_eq!(q.guarantee_ok, Some(true));
    }
    assert!(report.passed);
}

#[test]
fn path_query_before_first_pass_is_recorded() {
    let cfg = config(
        r#"{"seed": 1, "graph": {"kind": "edges", "n": 4, "edges": [[0,1],[1,2],[2,3]]},
            "protocol": {"epsilon": 0.5, "exact_counting": true}, "duration": {"rounds": 40},
            "queries": {"at_rounds": [0, 39]}}"#,
    );
    let report = run_scenario(&cfg).unwrap();
    assert_eq!(report.queries[0].status, QueryStatus::NoCompleteFamily);
    assert_eq!(report.queries[1].status, QueryStatus::Answered);
    assert!(report.passed);
}

#[test]
fn planted_clique_under_churn_meets_conditioned_bounds() {
    let cfg = config(
        r#"{"seed": 4, "graph": {"kind": "planted_dense", "n": 60, "q": 15, "p_noise": 0.05},
            "adversary": {"kind": "random_churn", "rate": 1},
            "protocol": {"epsilon": 1.0, "diameter": 10}, "duration": {"passes": 6},
            "queries": {"every_pass": true}}"#,
    );
    let report = run_scenario(&cfg).unwrap();
    assert!(report.queries.len() >= 5);
    for q in report.queries.iter().filter(|q| q.conditioned) {
        assert_eq!(q.guarantee_ok, Some(true), "query {q:?}");
    }
    assert!(report.checks.round_budget.ok);
    assert!(report.passed);
}

#[test]
fn round_budget_identity_on_small_diameter() {
    let report = run_scenario(&k5(", \"exact_counting\": true")).unwrap();
    assert_eq!(report.params.level_round_cost(), 5);
    for p in &report.passes {
        assert_eq!(p.length, p.levels as u64 * 5);
    }
    let budget = check_round_budget(&report.params, &report.passes, &report.queries);
    assert!(budget.ok);
    let mut broken = report.passes.clone();
    broken[0].length += 1;
    assert!(!check_round_budget(&report.params, &broken, &report.queries).ok);
}

#[test]
fn padding_runs_respect_the_attempt_cap() {
    let cfg = config(
        r#"{"seed": 8, "graph": {"kind": "clique_plus_noise", "q": 20, "satellites": 20, "attach": 2},
            "protocol": {"epsilon": 0.5, "exact_counting": true}, "duration": {"passes": 2},
            "queries": {"every_pass": true, "k": [30]}}"#,
    );
    let report = run_scenario(&cfg).unwrap();
    let padded: Vec<_> = report.queries.iter().filter(|q| q.padded).collect();
    assert!(!padded.is_empty());
    for q in padded {
        assert!(q.padding_attempts >= 1 && q.padding_attempts <= report.params.padding_cap);
    }
    assert!(report.checks.round_budget.ok);
}

#[test]
fn reports_round_trip_and_replay_identically() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_scenario(&k5("")).unwrap();
    let files = emit_report(&report, dir.path(), Formats { csv: true, json: true, gnuplot: true }).unwrap();
    assert_eq!(files.len(), 3);
    let csv = std::fs::read_to_string(dir.path().join("queries.csv")).unwrap();
    assert_eq!(csv.lines().count(), report.queries.len() + 1);
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let again = replay(&json).unwrap();
    assert!(again.identical_report);
    assert!(again.identical_log);
    assert!(report.event_log_digest.is_some());
}

#[test]
fn different_seeds_give_different_logs() {
    let a = run_scenario(&k5("")).unwrap();
    let mut cfg = k5("");
    cfg.seed = 4;
    let b = run_scenario(&cfg).unwrap();
    assert_ne!(a.event_log_digest, b.event_log_digest);
}

#[test]
fn disconnected_graph_needs_explicit_diameter() {
    let cfg = config(
        r#"{"seed": 1, "graph": {"kind": "edges", "n": 4, "edges": [[0,1],[2,3]]},
            "protocol": {"epsilon": 0.5}, "duration": {"rounds": 10}}"#,
    );
    assert!(matches!(run_scenario(&cfg), Err(HarnessError::Config(_))));
}

#[test]
fn sweep_expands_the_grid() {
    let base = config(
        r#"{"name": "g", "seed": 1, "graph": {"kind": "gnp", "n": 20, "p": 0.4},
            "protocol": {"epsilon": 0.5, "exact_counting": true}, "duration": {"passes": 1},
            "queries": {"every_pass": true}, "output": {"event_log": "off"}}"#,
    );
    let grid = SweepGrid { epsilon: vec![0.5, 1.0], n: vec![16, 20], ..Default::default() };
    let rows = run_sweep(&base, &grid).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.error.is_none() && r.passes >= 1));
}

#[test]
fn hundred_node_pass_fits_the_depth_budget() {
    let cfg = config(
        r#"{"seed": 2, "graph": {"kind": "gnp", "n": 100, "p": 0.1},
            "protocol": {"epsilon": 0.5, "diameter": 4}, "duration": {"passes": 2},
            "output": {"event_log": "off"}}"#,
    );
    assert!(cfg.build_graph().unwrap().is_connected());
    let report = run_scenario(&cfg).unwrap();
    assert_eq!(report.params.level_round_cost(), 17);
    assert_eq!(report.passes.len(), 2);
    for p in &report.passes {
        assert!(p.length <= report.params.p_cap as u64 * 17);
        assert_eq!(p.length, p.levels as u64 * 17);
    }
}
