//! Edge-churn adversaries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DynamicGraph, Edit, EditOp, GraphError, NodeId};
use crate::nodeset::NodeSet;
use crate::rng::{self, SimRng};

/// Produces the churn batch applied at the end of each round.
pub trait Adversary {
    fn next_batch(&mut self, g: &DynamicGraph) -> Vec<Edit>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    None,
    Scripted,
    RandomChurn,
    Targeted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedRound {
    pub round: u64,
    pub edits: Vec<Edit>,
}

/// Declarative adversary description, as found in scenario configs and
/// standalone script files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySchedule {
    pub kind: AdversaryKind,
    #[serde(default)]
    pub rate: usize,
    /// Overrides the stream derived from the scenario seed.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Scripted edits, one entry per round that has any.
    #[serde(default)]
    pub rounds: Vec<ScriptedRound>,
    /// Targeted mode: rounds between recomputations of the densest set.
    #[serde(default = "default_refresh")]
    pub refresh: u64,
}

fn default_refresh() -> u64 {
    1
}

impl Default for AdversarySchedule {
    fn default() -> Self {
        Self { kind: AdversaryKind::None, rate: 0, seed: None, rounds: Vec::new(), refresh: 1 }
    }
}

impl AdversarySchedule {
    pub fn build(&self, initial: &DynamicGraph, scenario_seed: u64) -> Result<Box<dyn Adversary>, GraphError> {
        let seed = self.seed.unwrap_or_else(|| rng::derive_seed(scenario_seed, "adversary", 0));
        Ok(match self.kind {
            AdversaryKind::None => Box::new(NoChurn),
            AdversaryKind::Scripted => Box::new(ScriptedAdversary::load(self.rounds.clone(), initial, self.rate)?),
            AdversaryKind::RandomChurn => Box::new(RandomChurn::new(self.rate, seed)),
            AdversaryKind::Targeted => Box::new(TargetedAdversary::new(self.rate, seed, self.refresh)),
        })
    }
}

pub struct NoChurn;

impl Adversary for NoChurn {
    fn next_batch(&mut self, _g: &DynamicGraph) -> Vec<Edit> {
        Vec::new()
    }
}

/// Replays a fixed script. The script is checked against `G_0` at load time.
#[derive(Debug, Clone)]
pub struct ScriptedAdversary {
    rounds: Vec<ScriptedRound>,
    cursor: usize,
    round: u64,
}

impl ScriptedAdversary {
    pub fn load(mut rounds: Vec<ScriptedRound>, initial: &DynamicGraph, rate: usize) -> Result<Self, GraphError> {
        for r in rounds.iter_mut() {
            for e in r.edits.iter_mut() {
                *e = Edit { op: e.op, u: e.u.min(e.v), v: e.u.max(e.v) };
            }
        }
        rounds.sort_by_key(|r| r.round);
        if let Some(w) = rounds.windows(2).find(|w| w[0].round == w[1].round) {
            return Err(GraphError::Parse { line: 0, msg: format!("round {} scripted twice", w[0].round) });
        }
        // Dry run so that no-op edits and budget violations surface now.
        let mut g = DynamicGraph::from_edges(initial.node_count(), initial.edges(), rate)?;
        let mut t = 0;
        for r in &rounds {
            while t < r.round {
                g.apply_churn(&[])?;
                t += 1;
            }
            g.apply_churn(&r.edits)?;
            t += 1;
        }
        Ok(Self { rounds, cursor: 0, round: 0 })
    }
}

impl Adversary for ScriptedAdversary {
    fn next_batch(&mut self, _g: &DynamicGraph) -> Vec<Edit> {
        let out = match self.rounds.get(self.cursor) {
            Some(r) if r.round == self.round => {
                self.cursor += 1;
                r.edits.clone()
            }
            _ => Vec::new(),
        };
        self.round += 1;
        out
    }
}

fn random_pair(rng: &mut SimRng, n: usize) -> (NodeId, NodeId) {
    let u = rng.gen_range(0..n as NodeId);
    let mut v = rng.gen_range(0..n as NodeId - 1);
    if v >= u {
        v += 1;
    }
    (u.min(v), u.max(v))
}

/// Uniform over legal edits: every unordered pair is exactly one legal edit
/// (remove if present, add if absent), so a uniform pair is toggled.
pub struct RandomChurn {
    rate: usize,
    rng: SimRng,
}

impl RandomChurn {
    pub fn new(rate: usize, seed: u64) -> Self {
        Self { rate, rng: rng::stream(seed, "random-churn", 0) }
    }
}

impl Adversary for RandomChurn {
    fn next_batch(&mut self, g: &DynamicGraph) -> Vec<Edit> {
        let n = g.node_count();
        let pairs = n * (n - 1) / 2;
        let want = self.rate.min(pairs);
        let mut batch: Vec<Edit> = Vec::with_capacity(want);
        while batch.len() < want {
            let (u, v) = random_pair(&mut self.rng, n);
            if batch.iter().any(|e| (e.u, e.v) == (u, v)) {
                continue;
            }
            batch.push(if g.has_edge(u, v) { Edit::remove(u, v) } else { Edit::add(u, v) });
        }
        batch
    }
}

/// Spends its budget deleting edges inside the current exact densest
/// subgraph; falls back to random toggles when that subgraph has no edges.
pub struct TargetedAdversary {
    rate: usize,
    refresh: u64,
    rounds_since: u64,
    target: Option<NodeSet>,
    fallback: RandomChurn,
    rng: SimRng,
}

impl TargetedAdversary {
    pub fn new(rate: usize, seed: u64, refresh: u64) -> Self {
        Self {
            rate,
            refresh: refresh.max(1),
            rounds_since: 0,
            target: None,
            fallback: RandomChurn::new(rate, rng::derive_seed(seed, "targeted-fallback", 0)),
            rng: rng::stream(seed, "targeted", 0),
        }
    }
}

impl Adversary for TargetedAdversary {
    fn next_batch(&mut self, g: &DynamicGraph) -> Vec<Edit> {
        if self.target.is_none() || self.rounds_since >= self.refresh {
            self.target = Some(crate::oracle::exact_densest(g).members);
            self.rounds_since = 0;
        }
        self.rounds_since += 1;
        let target = self.target.as_ref().expect("target computed");
        let inside: Vec<(NodeId, NodeId)> =
            g.edges().filter(|(u, v)| target.contains(*u as usize) && target.contains(*v as usize)).collect();
        if inside.is_empty() {
            return self.fallback.next_batch(g);
        }
        let mut batch = Vec::new();
        let want = self.rate.min(inside.len());
        while batch.len() < want {
            let (u, v) = inside[self.rng.gen_range(0..inside.len())];
            let e = Edit::remove(u, v);
            if !batch.contains(&e) {
                batch.push(e);
            }
        }
        batch
    }
}

impl Edit {
    pub fn is_add(&self) -> bool {
        self.op == EditOp::Add
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(rate: usize) -> DynamicGraph {
        DynamicGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)], rate).unwrap()
    }

    #[test]
    fn scripted_noop_removal_rejected_at_load() {
        let rounds = vec![
            ScriptedRound { round: 0, edits: vec![Edit::remove(0, 1)] },
            ScriptedRound { round: 2, edits: vec![Edit::remove(0, 1)] },
        ];
        assert!(matches!(ScriptedAdversary::load(rounds, &triangle(1), 1), Err(GraphError::InvalidEdit { .. })));
    }

    #[test]
    fn scripted_over_budget_rejected_at_load() {
        let rounds = vec![ScriptedRound { round: 1, edits: vec![Edit::remove(0, 1), Edit::remove(1, 2)] }];
        assert!(matches!(
            ScriptedAdversary::load(rounds, &triangle(1), 1),
            Err(GraphError::ChurnBudgetExceeded { .. })
        ));
    }

    #[test]
    fn scripted_replays_on_schedule() {
        let rounds = vec![ScriptedRound { round: 1, edits: vec![Edit::remove(1, 0)] }];
        let mut adv = ScriptedAdversary::load(rounds, &triangle(1), 1).unwrap();
        let g = triangle(1);
        assert!(adv.next_batch(&g).is_empty());
        assert_eq!(adv.next_batch(&g), vec![Edit::remove(0, 1)]);
        assert!(adv.next_batch(&g).is_empty());
    }

    #[test]
    fn random_churn_respects_rate_and_legality() {
        let mut g = DynamicGraph::from_edges(8, [(0, 1), (2, 3)], 3).unwrap();
        let mut adv = RandomChurn::new(3, 11);
        for _ in 0..200 {
            let batch = adv.next_batch(&g);
            assert_eq!(batch.len(), 3);
            g.apply_churn(&batch).unwrap();
        }
    }

    #[test]
    fn targeted_deletes_inside_dense_core() {
        // K4 on 0..3 plus a path 3-4-5
        let mut edges: Vec<_> = (0..4u32).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect();
        edges.extend([(3, 4), (4, 5)]);
        let g = DynamicGraph::from_edges(6, edges, 2).unwrap();
        let mut adv = TargetedAdversary::new(2, 5, 1);
        let batch = adv.next_batch(&g);
        assert_eq!(batch.len(), 2);
        assert!(batch.iter().all(|e| !e.is_add() && e.v < 4));
    }
}
