//! Evolving undirected simple graphs over a fixed node set.

mod adversary;
mod diameter;
mod generators;
mod io;

pub use adversary::{
    Adversary, AdversaryKind, AdversarySchedule, NoChurn, RandomChurn, ScriptedAdversary, ScriptedRound,
    TargetedAdversary,
};
pub use diameter::{measure_dynamic_diameter, static_diameter, DynamicDiameter, GraphTrace};
pub use generators::{clique_plus_satellites, gnp, planted_clique, random_regular, GeneratorError};
pub use io::{parse_edge_list, read_edge_list};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nodeset::NodeSet;

pub type NodeId = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("churn batch of {size} edits exceeds rate {rate}")]
    ChurnBudgetExceeded { size: usize, rate: usize },
    #[error("invalid edit {edit:?}: {reason}")]
    InvalidEdit { edit: Edit, reason: &'static str },
    #[error("density of an empty subset is undefined")]
    EmptySubset,
    #[error("node {0} is out of range")]
    NodeOutOfRange(usize),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    Add,
    Remove,
}

/// A single adversarial edge change. Endpoints are stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edit {
    pub op: EditOp,
    pub u: NodeId,
    pub v: NodeId,
}

impl Edit {
    pub fn add(u: NodeId, v: NodeId) -> Self {
        Self { op: EditOp::Add, u: u.min(v), v: u.max(v) }
    }

    pub fn remove(u: NodeId, v: NodeId) -> Self {
        Self { op: EditOp::Remove, u: u.min(v), v: u.max(v) }
    }
}

/// Exact density record of an induced subgraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetDensity {
    pub members: NodeSet,
    pub edge_count: u64,
    pub density: Ratio<u64>,
}

impl SubsetDensity {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Time-indexed undirected simple graph `G_t` with a per-round churn budget.
#[derive(Debug, Clone)]
pub struct DynamicGraph {
    adj: Vec<Vec<NodeId>>,
    edge_count: usize,
    time: u64,
    churn_rate: usize,
    log: Vec<(u64, Edit)>,
}

impl DynamicGraph {
    pub fn new(node_count: usize, churn_rate: usize) -> Self {
        assert!(node_count > 0, "graph needs at least one node");
        Self { adj: vec![Vec::new(); node_count], edge_count: 0, time: 0, churn_rate, log: Vec::new() }
    }

    /// Builds `G_0` from an edge list. Duplicate edges are merged; self-loops
    /// and out-of-range ids are errors.
    pub fn from_edges(
        node_count: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        churn_rate: usize,
    ) -> Result<Self, GraphError> {
        let mut g = Self::new(node_count, churn_rate);
        for (u, v) in edges {
            let edit = Edit::add(u, v);
            g.check_endpoints(&edit)?;
            if !g.has_edge(u, v) {
                g.insert_edge(u, v);
            }
        }
        Ok(g)
    }

    pub fn with_churn_rate(mut self, churn_rate: usize) -> Self {
        self.churn_rate = churn_rate;
        self
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn churn_rate(&self) -> usize {
        self.churn_rate
    }

    pub fn mutation_log(&self) -> &[(u64, Edit)] {
        &self.log
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj[v as usize].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adj.get(u as usize).is_some_and(|n| n.binary_search(&v).is_ok())
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, ns)| {
            let u = u as NodeId;
            ns.iter().filter(move |&&v| v > u).map(move |&v| (u, v))
        })
    }

    fn check_endpoints(&self, e: &Edit) -> Result<(), GraphError> {
        let n = self.node_count() as NodeId;
        if e.u >= n || e.v >= n {
            return Err(GraphError::NodeOutOfRange(e.u.max(e.v) as usize));
        }
        if e.u == e.v {
            return Err(GraphError::InvalidEdit { edit: *e, reason: "self-loop" });
        }
        Ok(())
    }

    fn insert_edge(&mut self, u: NodeId, v: NodeId) {
        for (a, b) in [(u, v), (v, u)] {
            let list = &mut self.adj[a as usize];
            let pos = list.binary_search(&b).unwrap_err();
            list.insert(pos, b);
        }
        self.edge_count += 1;
    }

    fn delete_edge(&mut self, u: NodeId, v: NodeId) {
        for (a, b) in [(u, v), (v, u)] {
            let list = &mut self.adj[a as usize];
            let pos = list.binary_search(&b).expect("edge present");
            list.remove(pos);
        }
        self.edge_count -= 1;
    }

    /// Checks a batch against the current snapshot without applying it:
    /// removals must hit present edges, additions absent ones, and no pair
    /// may appear twice.
    pub fn validate_batch(&self, batch: &[Edit]) -> Result<(), GraphError> {
        if batch.len() > self.churn_rate {
            return Err(GraphError::ChurnBudgetExceeded { size: batch.len(), rate: self.churn_rate });
        }
        for (i, e) in batch.iter().enumerate() {
            self.check_endpoints(e)?;
            if batch[..i].iter().any(|p| (p.u, p.v) == (e.u, e.v)) {
                return Err(GraphError::InvalidEdit { edit: *e, reason: "pair edited twice in one batch" });
            }
            let present = self.has_edge(e.u, e.v);
            match e.op {
                EditOp::Remove if !present => {
                    return Err(GraphError::InvalidEdit { edit: *e, reason: "removing an absent edge" })
                }
                EditOp::Add if present => {
                    return Err(GraphError::InvalidEdit { edit: *e, reason: "adding a present edge" })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// `E(G_{t+1}) = (E(G_t) \ E_U) ∪ E_V`, then `t ← t + 1`.
    pub fn apply_churn(&mut self, batch: &[Edit]) -> Result<(), GraphError> {
        self.validate_batch(batch)?;
        for e in batch {
            match e.op {
                EditOp::Add => self.insert_edge(e.u, e.v),
                EditOp::Remove => self.delete_edge(e.u, e.v),
            }
            self.log.push((self.time, *e));
        }
        self.time += 1;
        Ok(())
    }

    /// Number of edges with both endpoints in `members`.
    pub fn induced_edge_count(&self, members: &NodeSet) -> u64 {
        let mut twice = 0u64;
        for u in members.iter() {
            twice += self.adj[u].iter().filter(|&&v| members.contains(v as usize)).count() as u64;
        }
        twice / 2
    }

    /// Degree of `v` inside the subgraph induced by `members`.
    pub fn induced_degree(&self, v: NodeId, members: &NodeSet) -> usize {
        self.adj[v as usize].iter().filter(|&&w| members.contains(w as usize)).count()
    }

    /// Exact density `|E(S)| / |S|` of the subgraph induced by `members`.
    pub fn induced_density(&self, members: &NodeSet) -> Result<SubsetDensity, GraphError> {
        if members.capacity() != self.node_count() {
            return Err(GraphError::NodeOutOfRange(members.capacity()));
        }
        let size = members.len() as u64;
        if size == 0 {
            return Err(GraphError::EmptySubset);
        }
        let edge_count = self.induced_edge_count(members);
        Ok(SubsetDensity { members: members.clone(), edge_count, density: Ratio::new(edge_count, size) })
    }

    pub fn all_nodes(&self) -> NodeSet {
        NodeSet::full(self.node_count())
    }

    /// True when every node can reach every other node in this snapshot.
    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0u32];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in self.neighbors(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    /// Content hash of the current edge set (node count plus sorted edges).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.node_count() as u64).to_le_bytes());
        for (u, v) in self.edges() {
            h.update(u.to_le_bytes());
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn complete(n: usize) -> DynamicGraph {
        let edges = (0..n as u32).flat_map(|u| (u + 1..n as u32).map(move |v| (u, v)));
        DynamicGraph::from_edges(n, edges, 0).unwrap()
    }

    #[test]
    fn removing_one_triangle_edge_leaves_a_path() {
        let mut g = DynamicGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)], 1).unwrap();
        g.apply_churn(&[Edit::remove(0, 1)]).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 2), (1, 2)]);
        assert_eq!(g.time(), 1);
        assert_eq!(g.mutation_log(), &[(0, Edit::remove(0, 1))]);
    }

    #[test]
    fn empty_batch_only_advances_time() {
        let mut g = complete(4);
        let before: Vec<_> = g.edges().collect();
        g.apply_churn(&[]).unwrap();
        assert_eq!(g.time(), 1);
        assert_eq!(g.edges().collect::<Vec<_>>(), before);
    }

    #[test]
    fn batch_over_budget_is_rejected() {
        let mut g = complete(4);
        g.churn_rate = 2;
        let err = g.apply_churn(&[Edit::remove(0, 1), Edit::remove(0, 2), Edit::remove(0, 3)]).unwrap_err();
        assert_eq!(err, GraphError::ChurnBudgetExceeded { size: 3, rate: 2 });
        assert_eq!(g.time(), 0);
    }

    #[test]
    fn edge_state_mismatch_is_invalid() {
        let mut g = DynamicGraph::from_edges(3, [(0, 1)], 2).unwrap();
        assert!(matches!(g.apply_churn(&[Edit::remove(1, 2)]), Err(GraphError::InvalidEdit { .. })));
        assert!(matches!(g.apply_churn(&[Edit::add(0, 1)]), Err(GraphError::InvalidEdit { .. })));
        assert!(matches!(g.apply_churn(&[Edit::add(2, 2)]), Err(GraphError::InvalidEdit { .. })));
    }

    #[test]
    fn densities_of_small_graphs() {
        let k4 = complete(4);
        assert_eq!(k4.induced_density(&k4.all_nodes()).unwrap().density, Ratio::new(3, 2));

        let path = DynamicGraph::from_edges(3, [(0, 1), (1, 2)], 0).unwrap();
        assert_eq!(path.induced_density(&path.all_nodes()).unwrap().density, Ratio::new(2, 3));

        // K4 on 0..3 plus pendant 4 attached to 0: 6 + 1 edges over 5 nodes.
        let mut edges: Vec<_> = complete(4).edges().collect();
        edges.push((0, 4));
        let g = DynamicGraph::from_edges(5, edges, 0).unwrap();
        assert_eq!(g.induced_density(&g.all_nodes()).unwrap().density, Ratio::new(7, 5));
    }

    #[test]
    fn empty_subset_has_no_density() {
        let g = complete(3);
        assert_eq!(g.induced_density(&NodeSet::new(3)).unwrap_err(), GraphError::EmptySubset);
    }

    proptest! {
        #[test]
        fn whole_graph_density_times_n_is_edge_count(
            n in 1usize..12,
            pairs in proptest::collection::vec((0u32..12, 0u32..12), 0..40),
        ) {
            let edges = pairs.into_iter().filter(|(u, v)| u != v && (*u as usize) < n && (*v as usize) < n);
            let g = DynamicGraph::from_edges(n, edges, 0).unwrap();
            let d = g.induced_density(&g.all_nodes()).unwrap();
            prop_assert_eq!(d.density * n as u64, Ratio::from_integer(g.edge_count() as u64));
        }

        #[test]
        fn adding_edges_inside_subset_never_lowers_density(
            n in 2usize..10,
            pairs in proptest::collection::vec((0u32..10, 0u32..10), 0..30),
            mask in 1u32..1024,
            extra in (0u32..10, 0u32..10),
        ) {
            let edges = pairs.into_iter().filter(|(u, v)| u != v && (*u as usize) < n && (*v as usize) < n);
            let mut g = DynamicGraph::from_edges(n, edges, 1).unwrap();
            let s = NodeSet::from_ids(n, (0..n).filter(|i| mask >> i & 1 == 1));
            prop_assume!(!s.is_empty());
            let before = g.induced_density(&s).unwrap().density;
            let (u, v) = extra;
            if u != v && s.contains(u as usize) && s.contains(v as usize) && !g.has_edge(u, v) {
                g.apply_churn(&[Edit::add(u, v)]).unwrap();
            }
            prop_assert!(g.induced_density(&s).unwrap().density >= before);
        }
    }
}
