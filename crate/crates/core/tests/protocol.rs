use dynadense::counting::CountEnv;
use dynadense::graph::{gnp, planted_clique, static_diameter, DynamicGraph, NoChurn, NodeId};
use dynadense::nodeset::NodeSet;
use dynadense::oracle::peel_reference;
use dynadense::protocol::{
    acceptance_window, coin_probability, padding_cap, padding_deficit, CloseReason, NodeEvent, NodeState,
    ProtocolError, ProtocolParams, QueryOutcome, QueryRequest,
};
use dynadense::sim::{EventLog, Network};
use proptest::prelude::*;

fn complete(n: u32) -> DynamicGraph {
    DynamicGraph::from_edges(n as usize, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))), 0).unwrap()
}

fn triangle_pendant() -> DynamicGraph {
    DynamicGraph::from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)], 0).unwrap()
}

fn star(leaves: u32) -> DynamicGraph {
    DynamicGraph::from_edges(leaves as usize + 1, (1..=leaves).map(|v| (0, v)), 0).unwrap()
}

struct Run {
    net: Network<NodeState>,
    env: CountEnv,
}

impl Run {
    fn new(g: &DynamicGraph, params: ProtocolParams, seed: u64) -> Self {
        let n = g.node_count();
        let nodes = (0..n).map(|_| NodeState::new(params)).collect();
        let net = Network::new(g.clone(), Box::new(NoChurn), nodes, seed, EventLog::off());
        Self { net, env: CountEnv::new(seed, n) }
    }

    fn round(&mut self) -> Vec<NodeEvent> {
        self.net.run_round(&mut self.env).unwrap();
        let mut all = Vec::new();
        for v in self.net.nodes_mut() {
            all.extend(v.drain_events());
        }
        all
    }

    /// Runs until node 0 serves the family of pass `pass`.
    fn until_pass(&mut self, pass: u64) {
        for _ in 0..1_000_000 {
            if self.net.nodes()[0].served().is_some_and(|f| f.pass >= pass) {
                return;
            }
            self.round();
        }
        panic!("pass {pass} never closed");
    }

    fn query(&mut self, id: u64, k: usize) {
        let issued_at = self.net.round();
        for v in self.net.nodes_mut() {
            v.enqueue_query(QueryRequest { id, k, issued_at });
        }
    }

    fn until_answered(&mut self, id: u64) {
        while self.net.nodes().iter().any(|v| v.answer(id).is_none()) {
            self.round();
        }
    }

    fn answer_set(&self, id: u64) -> NodeSet {
        let n = self.net.nodes().len();
        NodeSet::from_ids(n, (0..n).filter(|&v| self.net.nodes()[v].membership_query(id).unwrap()))
    }
}

fn exact_params(epsilon: f64, g: &DynamicGraph) -> ProtocolParams {
    let d = static_diameter(g).finite().unwrap().max(1);
    ProtocolParams::new(epsilon, d, g.node_count()).unwrap().with_exact_counting(true)
}

#[test]
fn triangle_with_pendant_peels_to_the_triangle() {
    let g = triangle_pendant();
    let mut run = Run::new(&g, exact_params(0.24, &g), 1);
    run.until_pass(0);
    for (v, node) in run.net.nodes().iter().enumerate() {
        let f = node.served().unwrap();
        let scalars: Vec<(f64, f64)> = f.levels.iter().map(|l| (l.n, l.m)).collect();
        assert_eq!(scalars, vec![(4.0, 4.0), (3.0, 3.0)]);
        assert_eq!(f.reason, CloseReason::FixedPoint);
        assert_eq!(f.levels[1].member, v != 3);
    }
}

#[test]
fn star_is_a_fixed_point_after_one_level() {
    let g = star(5);
    let mut run = Run::new(&g, exact_params(0.24, &g), 2);
    run.until_pass(0);
    let f = run.net.nodes()[0].served().unwrap();
    assert_eq!(f.levels.len(), 1);
    assert_eq!((f.levels[0].n, f.levels[0].m), (6.0, 5.0));
    assert_eq!(f.reason, CloseReason::FixedPoint);
}

#[test]
fn pass_length_is_levels_times_level_cost() {
    let g = planted_clique(30, 8, 0.15, 3).unwrap();
    let params = exact_params(0.48, &g);
    let cost = params.level_round_cost();
    let mut run = Run::new(&g, params, 3);
    let mut seen = Vec::new();
    for pass in 0..3 {
        run.until_pass(pass);
        let f = run.net.nodes()[0].served().unwrap().clone();
        assert_eq!(f.pass_length(), f.levels.len() as u64 * cost, "pass {pass}");
        assert!(f.levels.len() <= params.p_cap);
        seen.push(f);
    }
    assert_eq!(seen[0].started_at, 2 * params.d as u64);
    assert_eq!(seen[1].started_at, seen[0].closed_at);
    let shape = |f: &dynadense::protocol::Family| f.levels.iter().map(|l| (l.n, l.m, l.member)).collect::<Vec<_>>();
    assert_eq!(shape(&seen[1]), shape(&seen[2]), "a static graph yields the same family every pass");
}

fn check_against_reference(g: &DynamicGraph, factor: f64, seed: u64) {
    let params = exact_params(0.24, g).with_threshold_factor(factor).unwrap();
    let reference = peel_reference(g, params.peel_factor(), params.p_cap);
    let mut run = Run::new(g, params, seed);
    run.until_pass(0);
    let n = g.node_count();
    let f = run.net.nodes()[0].served().unwrap();
    assert_eq!(f.levels.len(), reference.levels.len());
    for (j, want) in reference.levels.iter().enumerate() {
        let got = &f.levels[j];
        assert_eq!((got.n, got.m), (want.nodes as f64, want.edges as f64), "level {j}");
        let members = NodeSet::from_ids(n, (0..n).filter(|&v| run.net.nodes()[v].served().unwrap().levels[j].member));
        assert_eq!(members, want.members, "level {j}");
    }
}

#[test]
fn exact_counting_reproduces_centralized_peeling() {
    check_against_reference(&triangle_pendant(), 1.0, 4);
    check_against_reference(&planted_clique(40, 10, 0.1, 5).unwrap(), 1.0, 5);
    check_against_reference(&planted_clique(40, 10, 0.1, 5).unwrap(), 1.6, 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn exact_peeling_matches_reference_on_random_graphs(n in 4usize..24, p in 0.2f64..0.8, seed in 0u64..1_000) {
        let g = gnp(n, p, seed).unwrap();
        prop_assume!(g.is_connected());
        check_against_reference(&g, 1.0, seed);
    }
}

#[test]
fn queries_before_the_first_family_report_it() {
    let g = complete(5);
    let mut run = Run::new(&g, exact_params(0.24, &g), 6);
    assert!(matches!(run.net.nodes()[0].membership_query(7), Err(ProtocolError::UnknownSnapshot(7))));
    run.query(7, 0);
    run.until_answered(7);
    for v in run.net.nodes() {
        assert_eq!(v.answer(7).unwrap().outcome, QueryOutcome::NoCompleteFamily);
        assert_eq!(v.membership_query(7), Err(ProtocolError::NoCompleteFamily));
    }
}

#[test]
fn unconstrained_query_returns_the_densest_level() {
    let g = planted_clique(40, 12, 0.12, 7).unwrap();
    assert!(g.is_connected());
    let mut run = Run::new(&g, exact_params(0.24, &g), 7);
    run.until_pass(0);
    run.query(1, 0);
    run.until_answered(1);
    let f = run.net.nodes()[0].served().unwrap().clone();
    let best = f.levels.iter().map(|l| l.ratio).fold(f64::MIN, f64::max);
    let members = run.answer_set(1);
    let density = g.induced_density(&members).unwrap();
    assert_eq!(density.edge_count as f64 / members.len() as f64, best);
    assert!(members.len() >= 12 - 1);
}

#[test]
fn padding_reaches_at_least_k_nodes() {
    let g = planted_clique(60, 10, 0.08, 8).unwrap();
    let mut run = Run::new(&g, exact_params(0.24, &g), 8);
    run.until_pass(0);
    let k = 30;
    run.query(2, k);
    run.until_answered(2);
    let QueryOutcome::Answered { n_i, padding: Some(p), .. } = &run.net.nodes()[0].answer(2).unwrap().outcome else {
        panic!("expected a padded answer");
    };
    let members = run.answer_set(2);
    if p.accepted {
        assert!(p.window.contains(p.estimate));
        assert_eq!(members.len() as f64, n_i + p.estimate, "exact counts are exact");
        assert!(members.len() >= k);
    }
    assert!(p.attempts <= run.net.nodes()[0].params().padding_cap);
    // Every node agrees on the padding outcome.
    for v in run.net.nodes() {
        let QueryOutcome::Answered { padding: Some(q), .. } = &v.answer(2).unwrap().outcome else { panic!() };
        assert_eq!((q.attempts, q.estimate.to_bits(), q.accepted), (p.attempts, p.estimate.to_bits(), p.accepted));
    }
}

#[test]
fn queries_are_answered_in_arrival_order() {
    let g = planted_clique(30, 8, 0.1, 9).unwrap();
    let mut run = Run::new(&g, exact_params(0.48, &g), 9);
    run.until_pass(0);
    run.query(10, 20);
    run.query(11, 0);
    run.until_answered(11);
    let a = run.net.nodes()[0].answer(10).unwrap();
    let b = run.net.nodes()[0].answer(11).unwrap();
    assert!(a.answered_at <= b.started_at);
}

#[test]
fn estimated_scalars_agree_network_wide() {
    let g = planted_clique(40, 12, 0.15, 10).unwrap();
    let d = static_diameter(&g).finite().unwrap();
    let params = ProtocolParams::new(0.48, d, g.node_count()).unwrap();
    let mut run = Run::new(&g, params, 10);
    let mut recorded = 0;
    while run.net.nodes()[0].served().is_none() {
        let events = run.round();
        let levels: Vec<(u64, usize, u64, u64)> = events
            .iter()
            .filter_map(|e| match e {
                NodeEvent::LevelRecorded { pass, level, n, m, .. } => Some((*pass, *level, n.to_bits(), m.to_bits())),
                _ => None,
            })
            .collect();
        if let Some(first) = levels.first() {
            assert_eq!(levels.len(), g.node_count());
            assert!(levels.iter().all(|l| l == first), "nodes disagree on level scalars");
            recorded += 1;
        }
    }
    assert!(recorded >= 1);
    let f = run.net.nodes()[0].served().unwrap();
    let n0 = f.levels[0].n;
    assert!((n0 - 40.0).abs() <= 0.1 * 40.0, "n_0 estimate {n0}");
}

#[test]
fn membership_bits_are_consistent_with_the_family() {
    let g = planted_clique(30, 10, 0.1, 11).unwrap();
    let mut run = Run::new(&g, exact_params(0.24, &g), 11);
    run.until_pass(1);
    let nodes = run.net.nodes();
    let f0 = nodes[0].served().unwrap();
    for j in 1..f0.levels.len() {
        for v in nodes {
            let l = &v.served().unwrap().levels;
            assert!(!l[j].member || l[j - 1].member, "levels are nested");
        }
    }
    let members: Vec<NodeId> =
        (0..30).filter(|&v| nodes[v as usize].served().unwrap().levels.last().unwrap().member).collect();
    assert!(!members.is_empty());
}

/// n = 200, k = 100, n_i = 50 with exact counts: the window is the single
/// integer 52. Each attempt is a Binomial(150, p) draw, accepted with the
/// binomial point mass at 52; compare 500 seeded padding loops against it.
#[test]
fn padding_loop_matches_the_binomial_acceptance_rate() {
    use rand::{Rng, SeedableRng};

    let (n, k, n_i, delta) = (200usize, 100usize, 50.0, 0.01);
    let deficit = padding_deficit(k, n_i, delta).unwrap();
    assert!((deficit - 51.0).abs() < 1e-9);
    let w = acceptance_window(deficit, delta, true);
    assert_eq!((w.lo, w.hi), (52.0, 52.0));
    let p = coin_probability(&w, n as f64, n_i);
    assert!((p - 52.0 / 150.0).abs() < 1e-12);
    let cap = padding_cap(n);

    let ln_pmf = (1..=150).map(|i| (i as f64).ln()).sum::<f64>()
        - (1..=52).map(|i| (i as f64).ln()).sum::<f64>()
        - (1..=98).map(|i| (i as f64).ln()).sum::<f64>()
        + 52.0 * p.ln()
        + 98.0 * (1.0 - p).ln();
    let hit = ln_pmf.exp();
    let expected = 1.0 - (1.0 - hit).powi(cap as i32);

    let seeds = 500;
    let mut accepted = 0;
    for seed in 0..seeds {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let attempts = (1..=cap).find(|_| (0..150).filter(|_| rng.gen_bool(p)).count() == 52);
        accepted += attempts.is_some() as u32;
    }
    let rate = accepted as f64 / seeds as f64;
    let sigma = (expected * (1.0 - expected) / seeds as f64).sqrt();
    assert!((rate - expected).abs() <= 4.0 * sigma, "accepted {rate:.3}, expected {expected:.3} ± {sigma:.3}");
}
