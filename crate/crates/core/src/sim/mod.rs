//! Lock-step synchronous round engine: every node computes on the messages
//! broadcast to it last round, broadcasts are delivered over the round-start
//! topology, then the adversary applies its churn batch.

mod ledger;
mod log;

pub use ledger::{assert_bandwidth, BandwidthLedger, BandwidthReport, EdgeEntry, TagRow, TagStats, Violation};
pub use log::{EventLog, EventRecord, LogSink};

use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Adversary, DynamicGraph, Edit, GraphError, NoChurn, NodeId};
use crate::nodeset::NodeSet;
use crate::rng::{stream, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("node {node} panicked in round {round}: {message}")]
    HandlerPanic { node: NodeId, round: u64, message: String },
    #[error("adversary produced an illegal batch in round {round}: {source}")]
    Churn { round: u64, source: GraphError },
}

/// A broadcast payload. Sizes are always recomputed from content.
pub trait Payload {
    /// Pushes `(accounting tag, bits)` for every component of the payload.
    fn bit_parts(&self, out: &mut Vec<(&'static str, u64)>);

    /// Stable 64-bit content hash used in the event log.
    fn digest(&self) -> u64;

    fn total_bits(&self) -> u64 {
        let mut parts = Vec::new();
        self.bit_parts(&mut parts);
        parts.iter().map(|p| p.1).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Compute,
    Deliver,
    Churn,
}

/// Round counter plus the phase currently executing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    pub round: u64,
    pub phase: Phase,
}

impl SimClock {
    fn enter(&mut self, next: Phase) {
        let legal = matches!(
            (self.phase, next),
            (Phase::Churn, Phase::Compute) | (Phase::Compute, Phase::Deliver) | (Phase::Deliver, Phase::Churn)
        );
        assert!(legal, "phase order violated: {:?} -> {:?}", self.phase, next);
        if next == Phase::Compute {
            self.round += 1;
        }
        self.phase = next;
    }
}

/// Compressed adjacency of the topology a batch of messages was sent over.
#[derive(Debug, Clone, Default)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
}

impl Csr {
    fn of(g: &DynamicGraph) -> Self {
        let n = g.node_count();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(2 * g.edge_count());
        offsets.push(0);
        for v in 0..n {
            targets.extend_from_slice(g.neighbors(v as NodeId));
            offsets.push(targets.len());
        }
        Self { offsets, targets }
    }

    fn neighbors(&self, v: usize) -> &[NodeId] {
        if self.offsets.is_empty() {
            return &[];
        }
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Messages delivered to one node: its neighbors at send time, in id order,
/// paired with whatever each of them broadcast.
pub struct Inbox<'a, M> {
    senders: &'a [NodeId],
    outbox: &'a [Option<M>],
}

impl<'a, M> Inbox<'a, M> {
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &'a M)> + 'a {
        let outbox = self.outbox;
        self.senders.iter().filter_map(move |&w| outbox[w as usize].as_ref().map(|m| (w, m)))
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.iter().next().is_none()
    }
}

/// Everything a node may look at during its compute step.
pub struct StepCtx<'a, M> {
    pub id: NodeId,
    pub round: u64,
    /// Neighbor count in the current (round-start) topology.
    pub degree: usize,
    pub inbox: Inbox<'a, M>,
    pub rng: &'a mut SimRng,
}

/// Per-node protocol logic. `Env` carries simulation-side services shared by
/// all handlers (e.g. estimator pools); it must not be used to read other
/// nodes' state.
pub trait NodeProgram {
    type Msg: Payload + Clone;
    type Env;

    fn step(&mut self, ctx: StepCtx<'_, Self::Msg>, env: &mut Self::Env) -> Option<Self::Msg>;
}

pub struct Network<P: NodeProgram> {
    graph: DynamicGraph,
    adversary: Box<dyn Adversary>,
    nodes: Vec<P>,
    rngs: Vec<SimRng>,
    outbox: Vec<Option<P::Msg>>,
    sent_over: Csr,
    topology_dirty: bool,
    clock: SimClock,
    started: bool,
    ledger: BandwidthLedger,
    log: EventLog,
    trace: Option<Vec<Vec<Edit>>>,
    parts: Vec<(&'static str, u64)>,
}

impl<P: NodeProgram> Network<P> {
    /// Node `v` receives `nodes[v]` and an RNG stream derived from `(seed, v)`.
    pub fn new(graph: DynamicGraph, adversary: Box<dyn Adversary>, nodes: Vec<P>, seed: u64, log: EventLog) -> Self {
        assert_eq!(graph.node_count(), nodes.len(), "one program per node");
        let n = nodes.len();
        Self {
            rngs: (0..n).map(|v| stream(seed, "node", v as u64)).collect(),
            outbox: (0..n).map(|_| None).collect(),
            sent_over: Csr::default(),
            topology_dirty: true,
            clock: SimClock { round: 0, phase: Phase::Churn },
            started: false,
            ledger: BandwidthLedger::default(),
            trace: None,
            parts: Vec::new(),
            graph,
            adversary,
            nodes,
            log,
        }
    }

    /// Static network without churn.
    pub fn static_network(graph: DynamicGraph, nodes: Vec<P>, seed: u64) -> Self {
        Self::new(graph, Box::new(NoChurn), nodes, seed, EventLog::off())
    }

    /// Keep every applied churn batch so the run can be replayed as a trace.
    pub fn record_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace_batches(&self) -> Option<&[Vec<Edit>]> {
        self.trace.as_deref()
    }

    pub fn graph(&self) -> &DynamicGraph {
        &self.graph
    }

    pub fn nodes(&self) -> &[P] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [P] {
        &mut self.nodes
    }

    /// Number of completed rounds; the next round to execute has this index.
    pub fn round(&self) -> u64 {
        if self.started {
            self.clock.round + 1
        } else {
            0
        }
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn ledger(&self) -> &BandwidthLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut BandwidthLedger {
        &mut self.ledger
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn log_mut(&mut self) -> &mut EventLog {
        &mut self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    /// Messages delivered to `v` in the last round, awaiting its next compute.
    pub fn inbox(&self, v: NodeId) -> Inbox<'_, P::Msg> {
        Inbox { senders: self.sent_over.neighbors(v as usize), outbox: &self.outbox }
    }

    pub fn run_round(&mut self, env: &mut P::Env) -> Result<(), SimError> {
        let round = self.round();
        if self.started {
            self.clock.enter(Phase::Compute);
        } else {
            self.clock.phase = Phase::Compute;
            self.started = true;
        }

        let n = self.nodes.len();
        let mut staged: Vec<Option<P::Msg>> = Vec::with_capacity(n);
        for v in 0..n {
            let ctx = StepCtx {
                id: v as NodeId,
                round,
                degree: self.graph.degree(v as NodeId),
                inbox: Inbox { senders: self.sent_over.neighbors(v), outbox: &self.outbox },
                rng: &mut self.rngs[v],
            };
            let node = &mut self.nodes[v];
            let out = catch_unwind(AssertUnwindSafe(|| node.step(ctx, env))).map_err(|e| {
                let message = e
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| e.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "non-string panic".into());
                SimError::HandlerPanic { node: v as NodeId, round, message }
            })?;
            staged.push(out);
        }

        self.clock.enter(Phase::Deliver);
        if self.topology_dirty {
            self.sent_over = Csr::of(&self.graph);
            self.topology_dirty = false;
        }
        self.ledger.begin_round(round);
        for (v, msg) in staged.iter().enumerate() {
            if let Some(msg) = msg {
                self.parts.clear();
                msg.bit_parts(&mut self.parts);
                let bits: u64 = self.parts.iter().map(|p| p.1).sum();
                let receivers = self.sent_over.neighbors(v);
                self.ledger.record(round, v as NodeId, receivers, &self.parts);
                if self.log.is_enabled() {
                    self.log.record(&EventRecord::new(round, Some(v as NodeId), "send", msg.digest(), bits));
                }
            }
        }
        self.outbox = staged;

        self.clock.enter(Phase::Churn);
        let batch = self.adversary.next_batch(&self.graph);
        self.graph.apply_churn(&batch).map_err(|source| SimError::Churn { round, source })?;
        if !batch.is_empty() {
            self.topology_dirty = true;
            if self.log.is_enabled() {
                for e in &batch {
                    let mut h = crate::rng::Fnv64::default();
                    h.write_u64(e.u as u64);
                    h.write_u64(e.v as u64);
                    h.write_u64(e.is_add() as u64);
                    let event = if e.is_add() { "edge_add" } else { "edge_remove" };
                    self.log.record(&EventRecord::new(round, Some(e.u), event, h.finish(), 0));
                }
            }
        }
        if let Some(trace) = &mut self.trace {
            trace.push(batch);
        }
        Ok(())
    }

    pub fn run(&mut self, rounds: u64, env: &mut P::Env) -> Result<(), SimError> {
        for _ in 0..rounds {
            self.run_round(env)?;
        }
        Ok(())
    }
}

/// One-bit flooding program used by [`flood`].
#[derive(Debug, Clone)]
struct FloodNode {
    reached: bool,
}

#[derive(Debug, Clone, Copy)]
struct Token;

impl Payload for Token {
    fn bit_parts(&self, out: &mut Vec<(&'static str, u64)>) {
        out.push(("flood", 1));
    }

    fn digest(&self) -> u64 {
        1
    }
}

impl NodeProgram for FloodNode {
    type Msg = Token;
    type Env = ();

    fn step(&mut self, ctx: StepCtx<'_, Token>, _: &mut ()) -> Option<Token> {
        if !ctx.inbox.is_empty() {
            self.reached = true;
        }
        self.reached.then_some(Token)
    }
}

/// Floods a token from `origins` for `rounds` rounds on `graph` under
/// `adversary`, returning every node that holds the token afterwards
/// (including receipts from the final round's deliveries).
pub fn flood(
    graph: DynamicGraph,
    adversary: Box<dyn Adversary>,
    origins: &NodeSet,
    rounds: u32,
) -> Result<NodeSet, SimError> {
    assert!(rounds >= 1, "flood needs at least one round");
    let n = graph.node_count();
    let nodes = (0..n).map(|v| FloodNode { reached: origins.contains(v) }).collect();
    let mut net = Network::new(graph, adversary, nodes, 0, EventLog::off());
    net.run(rounds as u64, &mut ())?;
    Ok(NodeSet::from_ids(n, (0..n).filter(|&v| net.nodes()[v].reached || !net.inbox(v as NodeId).is_empty())))
}
