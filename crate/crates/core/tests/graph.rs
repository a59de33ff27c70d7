use dynadense::graph::{
    gnp, measure_dynamic_diameter, parse_edge_list, planted_clique, random_regular, Adversary, DynamicDiameter,
    DynamicGraph, GraphError, RandomChurn, ScriptedAdversary, ScriptedRound,
};
use dynadense::nodeset::NodeSet;
use dynadense::sim::flood;
use proptest::prelude::*;

/// A churned trace: `G_0` plus `rounds` random batches.
fn churned(
    n: usize,
    p: f64,
    rate: usize,
    rounds: usize,
    seed: u64,
) -> (DynamicGraph, Vec<Vec<dynadense::graph::Edit>>) {
    let g0 = gnp(n, p, seed).unwrap().with_churn_rate(rate);
    let mut adv = RandomChurn::new(rate, seed ^ 0x5eed);
    let mut g = g0.clone();
    let mut batches = Vec::new();
    for _ in 0..rounds {
        let b = adv.next_batch(&g);
        g.apply_churn(&b).unwrap();
        batches.push(b);
    }
    (g0, batches)
}

/// Floods from `origin` starting at snapshot `start` through the simulator.
fn simulated_reach(
    g0: &DynamicGraph,
    batches: &[Vec<dynadense::graph::Edit>],
    start: usize,
    origin: usize,
    rounds: u32,
) -> NodeSet {
    let mut g = g0.clone();
    for b in &batches[..start] {
        g.apply_churn(b).unwrap();
    }
    let g = DynamicGraph::from_edges(g.node_count(), g.edges(), g0.churn_rate()).unwrap();
    let script: Vec<ScriptedRound> = batches[start..]
        .iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(t, b)| ScriptedRound { round: t as u64, edits: b.clone() })
        .collect();
    let adv = ScriptedAdversary::load(script, &g, g0.churn_rate()).unwrap();
    flood(g.clone(), Box::new(adv), &NodeSet::singleton(g.node_count(), origin), rounds).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The measured dynamic diameter is the smallest D for which the
    /// simulator's flood reaches everyone from every origin and start.
    #[test]
    fn measured_diameter_agrees_with_simulated_floods(
        n in 3usize..10, p in 0.3f64..0.9, rate in 1usize..3, seed in any::<u64>(),
    ) {
        let rounds = 14;
        let (g0, batches) = churned(n, p, rate, rounds, seed);
        let mut g = g0.clone();
        let mut snaps = vec![g.clone()];
        for b in &batches {
            g.apply_churn(b).unwrap();
            snaps.push(g.clone());
        }
        let DynamicDiameter::Finite(d) = measure_dynamic_diameter(&snaps) else {
            return Ok(());
        };
        for s in 0..=snaps.len() - d as usize {
            for o in 0..n {
                prop_assert_eq!(simulated_reach(&g0, &batches, s, o, d).len(), n, "start {} origin {}", s, o);
            }
        }
        if d > 1 {
            let some_miss = (0..=snaps.len() - (d as usize - 1))
                .any(|s| (0..n).any(|o| simulated_reach(&g0, &batches, s, o, d - 1).len() < n));
            prop_assert!(some_miss, "D = {} is not minimal", d);
        }
    }

    #[test]
    fn churn_preserves_budget_and_simple_graph(n in 2usize..20, rate in 1usize..4, seed in any::<u64>()) {
        let (g0, batches) = churned(n, 0.3, rate, 20, seed);
        let mut g = g0;
        for b in &batches {
            prop_assert!(b.len() <= rate);
            g.apply_churn(b).unwrap();
            prop_assert!(g.edges().all(|(u, v)| u < v));
        }
        prop_assert_eq!(g.time(), 20);
    }
}

#[test]
fn generators_are_reproducible_and_well_formed() {
    assert_eq!(gnp(50, 0.2, 7).unwrap().content_hash(), gnp(50, 0.2, 7).unwrap().content_hash());
    assert_ne!(gnp(50, 0.2, 7).unwrap().content_hash(), gnp(50, 0.2, 8).unwrap().content_hash());
    let g = planted_clique(40, 10, 0.1, 1).unwrap();
    assert_eq!(g.induced_edge_count(&NodeSet::from_ids(40, 0..10)), 45);
    let r = random_regular(30, 4, 2).unwrap();
    assert!((0..30).all(|v| r.degree(v) == 4));
}

#[test]
fn edge_list_round_trip() {
    let g = gnp(25, 0.2, 4).unwrap();
    let text: String = g.edges().map(|(u, v)| format!("{u} {v}\n")).collect();
    let back = parse_edge_list(&format!("# header\n{text}"), Some(25)).unwrap();
    assert_eq!(back.content_hash(), g.content_hash());
    assert!(matches!(parse_edge_list("0 1 2\n", None), Err(GraphError::Parse { line: 1, .. })));
}
