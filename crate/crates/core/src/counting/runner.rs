//! Standalone execution of one counting task on a simulated network.

use super::counter::{CountMsg, Counter, Plan};
use super::pool::{CountEnv, PoolStats};
use super::{CountConfig, CountKind, CountMode, EstimatorParams};
use crate::graph::{Adversary, DynamicGraph, NoChurn};
use crate::nodeset::NodeSet;
use crate::rng::Fnv64;
use crate::sim::{BandwidthLedger, EventLog, Network, NodeProgram, Payload, SimError, StepCtx};

/// Wire format of the standalone counting program: an optional membership
/// announcement (edge counts only) and an optional counting payload.
#[derive(Debug, Clone, PartialEq)]
pub struct CountWire {
    pub member: Option<bool>,
    pub count: Option<CountMsg>,
}

impl Payload for CountWire {
    fn bit_parts(&self, out: &mut Vec<(&'static str, u64)>) {
        if self.member.is_some() {
            out.push(("count.membership", 1));
        }
        if let Some(c) = &self.count {
            c.bit_parts(out);
        }
    }

    fn digest(&self) -> u64 {
        let mut h = Fnv64::default();
        h.write_u64(self.member.map_or(2, |m| m as u64));
        h.write_u64(self.count.as_ref().map_or(0, |c| c.digest()));
        h.finish()
    }
}

/// Pool domain used by standalone counting runs.
pub const STANDALONE_DOMAIN: u64 = 0x636f_756e_7400_0001;

/// A node running exactly one counting task.
#[derive(Debug, Clone)]
pub struct CountNode {
    member: bool,
    kind: CountKind,
    cfg: CountConfig,
    plan: Plan,
    counter: Option<Counter>,
    started: Option<u64>,
    pub result: Option<f64>,
    pub finished: Option<u64>,
}

impl CountNode {
    pub fn new(member: bool, kind: CountKind, cfg: CountConfig, plan: Plan) -> Self {
        Self { member, kind, cfg, plan, counter: None, started: None, result: None, finished: None }
    }

    pub fn counter(&self) -> Option<&Counter> {
        self.counter.as_ref()
    }
}

impl NodeProgram for CountNode {
    type Msg = CountWire;
    type Env = CountEnv;

    fn step(&mut self, ctx: StepCtx<'_, CountWire>, env: &mut CountEnv) -> Option<CountWire> {
        env.set_round(ctx.round);
        if self.counter.is_none() {
            let weight = match self.kind {
                CountKind::Nodes => self.member as u64,
                // One warm-up round: members announce themselves, then each
                // member counts its member neighbors.
                CountKind::Edges if ctx.round == 0 => {
                    return Some(CountWire { member: Some(self.member), count: None });
                }
                CountKind::Edges => {
                    if self.member {
                        ctx.inbox.iter().filter(|(_, m)| m.member == Some(true)).count() as u64
                    } else {
                        0
                    }
                }
            };
            self.started = Some(ctx.round);
            self.counter = Some(Counter::new(
                ctx.id,
                self.kind,
                weight,
                self.cfg,
                self.plan,
                STANDALONE_DOMAIN,
                ctx.round,
                "count",
            ));
        }
        let counter = self.counter.as_mut().expect("counter started");
        let step = counter.step(ctx.inbox.iter().filter_map(|(_, m)| m.count.as_ref()), env);
        if let Some(v) = step.done {
            self.result = Some(v);
            self.finished = Some(ctx.round);
        }
        step.msg.map(|c| CountWire { member: None, count: Some(c) })
    }
}

/// Result of a standalone counting run.
#[derive(Debug, Clone)]
pub struct CountOutcome {
    /// Final estimate held by each node.
    pub estimates: Vec<f64>,
    /// Whether every node holds a bit-identical estimate.
    pub agreed: bool,
    /// Rounds from the start of the counting task to its result.
    pub rounds: u64,
    /// Rounds including the membership warm-up of edge counts.
    pub total_rounds: u64,
    pub coarse: Option<f64>,
    pub l_geo: usize,
    pub l_exp: Option<usize>,
    pub max_bits: u64,
    pub pool: PoolStats,
    pub ledger: BandwidthLedger,
}

impl CountOutcome {
    pub fn value(&self) -> f64 {
        self.estimates[0]
    }
}

/// Runs one counting task over `graph` under `adversary` until every node
/// holds its result.
#[allow(clippy::too_many_arguments)]
pub fn run_count(
    graph: DynamicGraph,
    adversary: Box<dyn Adversary>,
    members: &NodeSet,
    kind: CountKind,
    cfg: CountConfig,
    plan: Plan,
    seed: u64,
    log: EventLog,
) -> Result<(CountOutcome, EventLog), SimError> {
    let n = graph.node_count();
    let nodes = (0..n).map(|v| CountNode::new(members.contains(v), kind, cfg, plan)).collect();
    let mut env = CountEnv::new(seed, n);
    let mut net = Network::new(graph, adversary, nodes, seed, log);
    while net.nodes().iter().any(|x| x.result.is_none()) {
        net.run_round(&mut env)?;
    }
    let nodes = net.nodes();
    let estimates: Vec<f64> = nodes.iter().map(|x| x.result.expect("finished")).collect();
    let agreed = estimates.iter().all(|e| e.to_bits() == estimates[0].to_bits());
    let c0 = nodes[0].counter().expect("started");
    let outcome = CountOutcome {
        agreed,
        rounds: c0.rounds_used().expect("finished"),
        total_rounds: nodes[0].finished.expect("finished"),
        coarse: c0.coarse(),
        l_geo: c0.l_geo(),
        l_exp: c0.l_exp(),
        max_bits: net.ledger().global_max_bits(),
        pool: env.stats().clone(),
        ledger: net.ledger().clone(),
        estimates,
    };
    Ok((outcome, net.into_log()))
}

fn run_static(
    g: &DynamicGraph,
    members: &NodeSet,
    kind: CountKind,
    cfg: CountConfig,
    plan: Plan,
    seed: u64,
) -> Result<CountOutcome, SimError> {
    run_count(g.clone(), Box::new(NoChurn), members, kind, cfg, plan, seed, EventLog::off()).map(|r| r.0)
}

/// (2, δ)-approximate size of `members` after `d` rounds of max-merging.
pub fn count_nodes_coarse(
    g: &DynamicGraph,
    members: &NodeSet,
    d: u32,
    delta_fail: f64,
    seed: u64,
) -> Result<CountOutcome, SimError> {
    let params = EstimatorParams::new(1.0, delta_fail, 1.0, d).expect("valid coarse parameters");
    run_static(g, members, CountKind::Nodes, CountConfig::estimate(params), Plan::CoarseOnly, seed)
}

/// (1 ± ε) size of `members` given an upper bound `n_bound`, after `d` rounds
/// of min-merging.
pub fn count_nodes_fine(
    g: &DynamicGraph,
    members: &NodeSet,
    d: u32,
    epsilon: f64,
    n_bound: f64,
    seed: u64,
) -> Result<CountOutcome, SimError> {
    let params = EstimatorParams::new(epsilon, 0.5, 1.0, d).expect("valid fine parameters");
    run_static(g, members, CountKind::Nodes, CountConfig::estimate(params), Plan::FineOnly { n_bound }, seed)
}

/// Coarse then fine node count (`2D` rounds), or exact counting.
pub fn count_nodes(g: &DynamicGraph, members: &NodeSet, cfg: CountConfig, seed: u64) -> Result<CountOutcome, SimError> {
    run_static(g, members, CountKind::Nodes, cfg, Plan::Full, seed)
}

/// Edge count of the subgraph induced by `members`.
pub fn count_edges(g: &DynamicGraph, members: &NodeSet, cfg: CountConfig, seed: u64) -> Result<CountOutcome, SimError> {
    run_static(g, members, CountKind::Edges, cfg, Plan::Full, seed)
}

impl CountConfig {
    pub fn is_exact(&self) -> bool {
        self.mode == CountMode::Exact
    }
}
