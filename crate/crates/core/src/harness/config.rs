//! Scenario configuration (JSON, unknown keys rejected).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::graph::{
    clique_plus_satellites, gnp, planted_clique, random_regular, read_edge_list, AdversaryKind, AdversarySchedule,
    DynamicGraph, NodeId,
};
use crate::protocol::level_round_cost;

/// Where `G_0` comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    Gnp {
        n: usize,
        p: f64,
    },
    /// A clique `K_q` laid over `G(n, p_noise)`. Without `q`, the smallest
    /// clique clearing the dynamic precondition with the given margin.
    PlantedDense {
        n: usize,
        #[serde(default)]
        q: Option<usize>,
        p_noise: f64,
        #[serde(default = "default_margin")]
        margin: f64,
    },
    /// A clique `K_q` plus `satellites` nodes each wired to `attach` clique
    /// nodes (hop diameter ≤ 2 when `attach > q/2`). Without `q`, solved as
    /// for `planted_dense`.
    CliquePlusNoise {
        #[serde(default)]
        q: Option<usize>,
        satellites: usize,
        /// Defaults to `⌊q/2⌋ + 1`.
        #[serde(default)]
        attach: Option<usize>,
        #[serde(default = "default_margin")]
        margin: f64,
    },
    RandomRegular {
        n: usize,
        d: usize,
    },
    EdgeList {
        path: PathBuf,
        #[serde(default)]
        node_count: Option<usize>,
    },
    /// Inline edge list.
    Edges {
        n: usize,
        edges: Vec<(NodeId, NodeId)>,
    },
}

fn default_margin() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub epsilon: f64,
    #[serde(default)]
    pub k: usize,
    /// Diameter bound `D'` given to the nodes; defaults to the hop diameter
    /// of `G_0`.
    #[serde(default)]
    pub diameter: Option<u32>,
    #[serde(default)]
    pub p_cap: Option<usize>,
    #[serde(default = "one")]
    pub threshold_factor: f64,
    #[serde(default)]
    pub exact_counting: bool,
    #[serde(default)]
    pub strict_congest: bool,
    /// Relative error of the fine counting stage (default `ε/24`).
    #[serde(default)]
    pub estimator_epsilon: Option<f64>,
    /// Rounds between a pass closure and the query it triggers, used only
    /// to size solved cliques (default: two levels plus one round).
    #[serde(default)]
    pub t_estimate: Option<u64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Duration {
    /// Stop after this many rounds.
    #[serde(default)]
    pub rounds: Option<u64>,
    /// Stop once this many families have been served.
    #[serde(default)]
    pub passes: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySchedule {
    /// Rounds at which queries are injected.
    #[serde(default)]
    pub at_rounds: Vec<u64>,
    /// Inject a query in the round after every pass closure.
    #[serde(default)]
    pub every_pass: bool,
    /// One query per listed `k` at every injection (default: `protocol.k`).
    #[serde(default)]
    pub k: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogMode {
    Off,
    #[default]
    Digest,
    File,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub event_log: LogMode,
    #[serde(default)]
    pub gnuplot: bool,
    /// Directory of the content-addressed oracle cache (static graphs).
    #[serde(default)]
    pub oracle_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub graph: GraphSource,
    #[serde(default)]
    pub adversary: AdversarySchedule,
    pub protocol: ProtocolSpec,
    pub duration: Duration,
    #[serde(default)]
    pub queries: QuerySchedule,
    #[serde(default)]
    pub output: OutputSpec,
    /// Track flood completion times on the evolving graph.
    #[serde(default)]
    pub monitor_diameter: bool,
}

/// Smallest clique size `q` with `max(k,1) · (q − 1)/2 ≥ margin · 24·T·r/ε`
/// (and `q ≥ k`, `q ≥ 2`).
pub fn solve_clique_size(r: usize, epsilon: f64, t: u64, k: usize, margin: f64) -> usize {
    let need = margin * 24.0 * t as f64 * r as f64 / epsilon;
    let per = k.max(1) as f64;
    let q = (2.0 * need / per + 1.0).ceil().max(2.0) as usize;
    q.max(k)
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configs serialize")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let p = &self.protocol;
        if !(p.epsilon > 0.0 && p.epsilon <= 1.0) {
            return bad(format!("protocol.epsilon must lie in (0, 1], got {}", p.epsilon));
        }
        if !(p.threshold_factor > 0.0 && p.threshold_factor.is_finite()) {
            return bad(format!("protocol.threshold_factor must be positive, got {}", p.threshold_factor));
        }
        if p.diameter == Some(0) {
            return bad("protocol.diameter must be at least 1".into());
        }
        if self.duration.rounds.is_none() && self.duration.passes.is_none() {
            return bad("duration needs `rounds` or `passes`".into());
        }
        if self.adversary.kind != AdversaryKind::None && self.adversary.rate == 0 {
            return bad("adversary.rate must be positive for a churning adversary".into());
        }
        match &self.graph {
            GraphSource::Gnp { n, p } if *n == 0 || !(0.0..=1.0).contains(p) => {
                bad(format!("gnp needs n ≥ 1 and p ∈ [0, 1], got n = {n}, p = {p}"))
            }
            GraphSource::PlantedDense { margin, .. } | GraphSource::CliquePlusNoise { margin, .. }
                if margin.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) =>
            {
                bad(format!("margin must be positive, got {margin}"))
            }
            _ => Ok(()),
        }
    }

    /// Clique size for generators that solve for it.
    fn solved_q(&self, q: Option<usize>, margin: f64, d: u32) -> usize {
        q.unwrap_or_else(|| {
            let t = self.protocol.t_estimate.unwrap_or(2 * level_round_cost(d) + 1);
            let k = self.queries.k.iter().copied().max().unwrap_or(self.protocol.k);
            solve_clique_size(self.adversary.rate, self.protocol.epsilon, t, k, margin)
        })
    }

    /// Builds `G_0` with the adversary's churn rate.
    pub fn build_graph(&self) -> Result<DynamicGraph, HarnessError> {
        let seed = crate::rng::derive_seed(self.seed, "graph", 0);
        let gen = |e: crate::graph::GeneratorError| HarnessError::Config(e.to_string());
        // Solved cliques are sized for the configured diameter bound, or 2.
        let d = self.protocol.diameter.unwrap_or(2);
        let g = match &self.graph {
            GraphSource::Gnp { n, p } => gnp(*n, *p, seed).map_err(gen)?,
            GraphSource::PlantedDense { n, q, p_noise, margin } => {
                let q = self.solved_q(*q, *margin, d);
                if q > *n {
                    return Err(HarnessError::Config(format!("clique of {q} nodes does not fit in n = {n}")));
                }
                planted_clique(*n, q, *p_noise, seed).map_err(gen)?
            }
            GraphSource::CliquePlusNoise { q, satellites, attach, margin } => {
                let q = self.solved_q(*q, *margin, d);
                clique_plus_satellites(q, *satellites, attach.unwrap_or(q / 2 + 1), seed).map_err(gen)?
            }
            GraphSource::RandomRegular { n, d } => random_regular(*n, *d, seed).map_err(gen)?,
            GraphSource::EdgeList { path, node_count } => read_edge_list(path, *node_count)?,
            GraphSource::Edges { n, edges } => DynamicGraph::from_edges(*n, edges.iter().copied(), 0)?,
        };
        Ok(g.with_churn_rate(self.adversary.rate))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const K5: &str = r#"{
        "seed": 1,
        "graph": {"kind": "edges", "n": 5, "edges": [[0,1],[0,2],[0,3],[0,4],[1,2],[1,3],[1,4],[2,3],[2,4],[3,4]]},
        "protocol": {"epsilon": 0.5},
        "duration": {"passes": 1}
    }"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ScenarioConfig::from_json(K5).unwrap();
        assert_eq!(cfg.build_graph().unwrap().edge_count(), 10);
        assert_eq!(cfg.output.event_log, LogMode::Digest);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = K5.replace("\"seed\": 1", "\"seed\": 1, \"sede\": 2");
        assert!(matches!(ScenarioConfig::from_json(&bad), Err(HarnessError::Config(_))));
        let bad = K5.replace("\"epsilon\": 0.5", "\"epsilon\": 0.5, \"eps\": 1");
        assert!(ScenarioConfig::from_json(&bad).is_err());
        let bad = K5.replace("\"n\": 5,", "\"n\": 5, \"m\": 3,");
        assert!(ScenarioConfig::from_json(&bad).is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(ScenarioConfig::from_json(&K5.replace("0.5", "1.5")).is_err());
        assert!(ScenarioConfig::from_json(&K5.replace("{\"passes\": 1}", "{}")).is_err());
    }

    #[test]
    fn clique_solver_clears_the_precondition() {
        let q = solve_clique_size(1, 1.0, 10, 0, 1.0);
        assert!((q - 1) as f64 / 2.0 >= 240.0);
        assert!((q - 2) as f64 / 2.0 < 240.0);
        let q = solve_clique_size(4, 1.0, 10, 50, 1.0);
        assert!(50.0 * (q - 1) as f64 / 2.0 >= 960.0);
        assert_eq!(solve_clique_size(0, 0.5, 10, 0, 2.0), 2);
    }
}
