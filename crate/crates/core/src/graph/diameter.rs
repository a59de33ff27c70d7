//! Dynamic diameter measurement by reachability closure over a trace.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{DynamicGraph, Edit, GraphError};
use crate::nodeset::NodeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicDiameter {
    Finite(u32),
    /// Some window never floods to every node within the trace.
    Unbounded,
}

impl DynamicDiameter {
    pub fn finite(self) -> Option<u32> {
        match self {
            Self::Finite(d) => Some(d),
            Self::Unbounded => None,
        }
    }
}

/// `G_0` plus the churn batch applied after each round.
#[derive(Debug, Clone)]
pub struct GraphTrace {
    initial: DynamicGraph,
    batches: Vec<Vec<Edit>>,
}

impl GraphTrace {
    pub fn new(initial: DynamicGraph) -> Self {
        Self { initial, batches: Vec::new() }
    }

    pub fn push_batch(&mut self, batch: Vec<Edit>) {
        self.batches.push(batch);
    }

    pub fn len(&self) -> usize {
        self.batches.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Materializes `G_0, G_1, …` (one snapshot per recorded batch plus the
    /// initial graph).
    pub fn snapshots(&self) -> Result<Vec<DynamicGraph>, GraphError> {
        let mut g = self.initial.clone();
        let mut out = vec![g.clone()];
        for b in &self.batches {
            g.apply_churn(b)?;
            out.push(g.clone());
        }
        Ok(out)
    }
}

/// Rounds needed, starting at snapshot `start`, until every origin's
/// information is known at every node. `None` if the trace ends first.
fn flood_time(trace: &[DynamicGraph], start: usize) -> Option<u32> {
    let n = trace[0].node_count();
    let mut reach: Vec<NodeSet> = (0..n).map(|v| NodeSet::singleton(n, v)).collect();
    let full = |r: &[NodeSet]| r.iter().all(|s| s.len() == n);
    if full(&reach) {
        return Some(0);
    }
    for (steps, g) in trace[start..].iter().enumerate() {
        let prev = reach.clone();
        for (v, set) in reach.iter_mut().enumerate() {
            for &u in g.neighbors(v as u32) {
                set.union_with(&prev[u as usize]);
            }
        }
        if full(&reach) {
            return Some(steps as u32 + 1);
        }
    }
    None
}

/// Smallest `D ≥ 1` such that a flood started at any node at any time `s`
/// reaches every node by `s + D`, considering every window `[s, s + D)` that
/// fits inside the trace.
pub fn measure_dynamic_diameter(trace: &[DynamicGraph]) -> DynamicDiameter {
    assert!(!trace.is_empty(), "trace must contain at least one snapshot");
    let len = trace.len();
    let times: Vec<Option<u32>> = (0..len).map(|s| flood_time(trace, s)).collect();
    for d in 1..=len {
        let ok = times[..=len - d].iter().all(|t| matches!(t, Some(t) if *t as usize <= d));
        if ok {
            return DynamicDiameter::Finite(d as u32);
        }
    }
    DynamicDiameter::Unbounded
}

/// Hop diameter of a single snapshot (BFS from every node).
pub fn static_diameter(g: &DynamicGraph) -> DynamicDiameter {
    let n = g.node_count();
    let mut best = 0u32;
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[s] = 0;
        queue.push_back(s as u32);
        let mut seen = 1;
        while let Some(u) = queue.pop_front() {
            for &v in g.neighbors(u) {
                if dist[v as usize] == u32::MAX {
                    dist[v as usize] = dist[u as usize] + 1;
                    best = best.max(dist[v as usize]);
                    seen += 1;
                    queue.push_back(v);
                }
            }
        }
        if seen < n {
            return DynamicDiameter::Unbounded;
        }
    }
    DynamicDiameter::Finite(best.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(n: usize) -> DynamicGraph {
        DynamicGraph::from_edges(n, (0..n as u32 - 1).map(|i| (i, i + 1)), 0).unwrap()
    }

    #[test]
    fn static_path_trace_matches_eccentricity() {
        let trace = vec![path(5); 8];
        assert_eq!(measure_dynamic_diameter(&trace), DynamicDiameter::Finite(4));
        assert_eq!(static_diameter(&path(5)), DynamicDiameter::Finite(4));
    }

    #[test]
    fn complete_graph_has_diameter_one() {
        let edges = (0..6u32).flat_map(|u| (u + 1..6).map(move |v| (u, v)));
        let k6 = DynamicGraph::from_edges(6, edges, 0).unwrap();
        assert_eq!(measure_dynamic_diameter(&vec![k6; 3]), DynamicDiameter::Finite(1));
    }

    #[test]
    fn alternating_edge_needs_two_rounds() {
        let on = DynamicGraph::from_edges(2, [(0, 1)], 1).unwrap();
        let off = DynamicGraph::new(2, 1);
        let trace: Vec<_> = (0..6).map(|t| if t % 2 == 0 { on.clone() } else { off.clone() }).collect();
        assert_eq!(measure_dynamic_diameter(&trace), DynamicDiameter::Finite(2));
    }

    #[test]
    fn permanently_disconnected_is_unbounded() {
        let g = DynamicGraph::new(3, 0);
        assert_eq!(measure_dynamic_diameter(&vec![g.clone(); 4]), DynamicDiameter::Unbounded);
        assert_eq!(static_diameter(&g), DynamicDiameter::Unbounded);
    }

    #[test]
    fn trace_snapshots_follow_batches() {
        let mut t = GraphTrace::new(DynamicGraph::from_edges(3, [(0, 1)], 1).unwrap());
        t.push_batch(vec![Edit::add(1, 2)]);
        t.push_batch(vec![Edit::remove(0, 1)]);
        let snaps = t.snapshots().unwrap();
        assert_eq!(snaps.len(), 3);
        assert_eq!(snaps[2].edges().collect::<Vec<_>>(), vec![(1, 2)]);
    }

    proptest! {
        #[test]
        fn static_connected_trace_equals_bfs_diameter(
            n in 2usize..9,
            pairs in proptest::collection::vec((0u32..9, 0u32..9), 0..25),
        ) {
            // a spanning path keeps the graph connected
            let mut edges: Vec<_> = (0..n as u32 - 1).map(|i| (i, i + 1)).collect();
            edges.extend(pairs.into_iter().filter(|(u, v)| u != v && (*u as usize) < n && (*v as usize) < n));
            let g = DynamicGraph::from_edges(n, edges, 0).unwrap();
            let trace = vec![g.clone(); n + 1];
            prop_assert_eq!(measure_dynamic_diameter(&trace), static_diameter(&g));
        }
    }
}
