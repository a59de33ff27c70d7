//! Per-node state machine: family maintenance and query answering.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::query::{acceptance_window, coin_probability, padding_deficit, select_level, AcceptanceWindow};
use super::{peel_threshold, ProtocolError, ProtocolParams};
use crate::counting::{CountEnv, CountKind, CountMsg, Counter, Plan};
use crate::graph::NodeId;
use crate::rng::{mix64, Fnv64, SimRng};
use crate::sim::{Inbox, NodeProgram, Payload, StepCtx};

/// Shared simulation environment of the protocol (the estimator pools).
pub type ProtoEnv = CountEnv;

const NODES_DOMAIN: u64 = 0x6d61_696e_0000_0001;
const EDGES_DOMAIN: u64 = 0x6d61_696e_0000_0002;
const QUERY_DOMAIN: u64 = 0x7175_6572_7900_0000;

/// One message per node per round: the membership bit, the drop bit while it
/// is being flooded, and the payloads of the running counting tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtoMsg {
    pub member: bool,
    pub dropped: Option<bool>,
    pub maintain: Option<CountMsg>,
    pub query: Option<CountMsg>,
}

impl Payload for ProtoMsg {
    fn bit_parts(&self, out: &mut Vec<(&'static str, u64)>) {
        out.push(("maintain.membership", 1));
        if self.dropped.is_some() {
            out.push(("maintain.dropped", 1));
        }
        if let Some(c) = &self.maintain {
            c.bit_parts(out);
        }
        if let Some(c) = &self.query {
            c.bit_parts(out);
        }
    }

    fn digest(&self) -> u64 {
        let mut h = Fnv64::default();
        h.write_u64(self.member as u64);
        h.write_u64(self.dropped.map_or(2, |d| d as u64));
        h.write_u64(self.maintain.as_ref().map_or(0, |c| c.digest()));
        h.write_u64(self.query.as_ref().map_or(0, |c| c.digest()));
        h.finish()
    }
}

/// Scalars of one level `V_j` plus this node's membership bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub n: f64,
    pub m: f64,
    /// `m / n`, computed locally from the agreed scalars (0 when `n = 0`).
    pub ratio: f64,
    pub member: bool,
    /// Round in which this level's membership took effect.
    pub computed_at: u64,
    /// Round in which the edge count of this level started.
    pub edges_started_at: u64,
    /// Round in which the edge count finished.
    pub completed_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseReason {
    /// The next level was estimated empty.
    Empty,
    /// No node dropped out, so the next level equals the last one.
    FixedPoint,
    /// `p_cap` levels were recorded.
    DepthCap,
}

/// A completed family `V_0 ⊇ V_1 ⊇ …` as held by one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub pass: u64,
    pub levels: Vec<LevelRecord>,
    /// Round in which the edge count of `V_0` started.
    pub started_at: u64,
    /// Round in which the pass was closed and the family served.
    pub closed_at: u64,
    pub reason: CloseReason,
}

impl Family {
    /// Rounds from the start of the pass to its closure.
    pub fn pass_length(&self) -> u64 {
        self.closed_at - self.started_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub id: u64,
    pub k: usize,
    pub issued_at: u64,
}

/// Outcome of the padding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaddingInfo {
    pub deficit: f64,
    pub window: AcceptanceWindow,
    pub coin_probability: f64,
    pub attempts: u32,
    /// Zero-based index of the returned attempt.
    pub chosen: u32,
    /// Estimated size `Δ'` of the padding set of the returned attempt.
    pub estimate: f64,
    /// False if the cap was reached and the closest attempt was returned.
    pub accepted: bool,
    /// This node's coin in the returned attempt.
    pub coin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum QueryOutcome {
    NoCompleteFamily,
    Answered {
        pass: u64,
        level: usize,
        member: bool,
        n_i: f64,
        m_i: f64,
        /// `m_i / max(k, n_i)`.
        score: f64,
        computed_at: u64,
        edges_started_at: u64,
        family_closed_at: u64,
        padding: Option<PaddingInfo>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalAnswer {
    pub request: QueryRequest,
    pub started_at: u64,
    pub answered_at: u64,
    pub outcome: QueryOutcome,
}

/// Events a node reports to the harness. Scalars must agree network-wide.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeEvent {
    LevelRecorded { pass: u64, level: usize, n: f64, m: f64, round: u64 },
    PassClosed { pass: u64, levels: usize, reason: CloseReason, round: u64 },
    QueryAnswered { query: u64, round: u64, level: Option<usize>, attempts: u32, estimate: f64 },
}

#[derive(Debug, Clone)]
enum Phase {
    Init,
    NodeCount(Counter),
    EdgeCount { counter: Counter, n: f64, started: u64 },
    Threshold(f64),
}

#[derive(Debug, Clone)]
struct Attempt {
    distance: f64,
    estimate: f64,
    coin: bool,
    index: u32,
}

#[derive(Debug, Clone)]
struct ActiveQuery {
    request: QueryRequest,
    started_at: u64,
    pass: u64,
    closed_at: u64,
    level: usize,
    record: LevelRecord,
    score: f64,
    deficit: f64,
    window: AcceptanceWindow,
    p: f64,
    attempt: u32,
    coin: bool,
    counter: Counter,
    best: Option<Attempt>,
}

/// Protocol state of one node.
#[derive(Debug, Clone)]
pub struct NodeState {
    params: ProtocolParams,
    pass: u64,
    level: usize,
    member: bool,
    member_since: u64,
    pass_started: u64,
    n0: Option<f64>,
    building: Vec<LevelRecord>,
    phase: Phase,
    dropped: bool,
    /// Drop bits are sent in rounds `[start, end)` and merged in `(start, end]`.
    dropped_window: Option<(u64, u64)>,
    served: Option<Family>,
    queue: VecDeque<QueryRequest>,
    active: Option<ActiveQuery>,
    answers: BTreeMap<u64, LocalAnswer>,
    events: Vec<NodeEvent>,
}

impl NodeState {
    pub fn new(params: ProtocolParams) -> Self {
        Self {
            params,
            pass: 0,
            level: 0,
            member: true,
            member_since: 0,
            pass_started: 0,
            n0: None,
            building: Vec::new(),
            phase: Phase::Init,
            dropped: false,
            dropped_window: None,
            served: None,
            queue: VecDeque::new(),
            active: None,
            answers: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    /// Index of the pass under construction.
    pub fn pass(&self) -> u64 {
        self.pass
    }

    /// Index `j` of the level under construction.
    pub fn level(&self) -> usize {
        self.level
    }

    /// Membership in the level under construction.
    pub fn member(&self) -> bool {
        self.member
    }

    /// Levels recorded so far in the pass under construction.
    pub fn building(&self) -> &[LevelRecord] {
        &self.building
    }

    /// The most recent complete family.
    pub fn served(&self) -> Option<&Family> {
        self.served.as_ref()
    }

    pub fn enqueue_query(&mut self, request: QueryRequest) {
        self.queue.push_back(request);
    }

    pub fn pending_queries(&self) -> usize {
        self.queue.len() + self.active.is_some() as usize
    }

    pub fn answers(&self) -> &BTreeMap<u64, LocalAnswer> {
        &self.answers
    }

    pub fn answer(&self, query: u64) -> Option<&LocalAnswer> {
        self.answers.get(&query)
    }

    /// Whether this node belongs to the answer of query `query`.
    pub fn membership_query(&self, query: u64) -> Result<bool, ProtocolError> {
        match self.answers.get(&query).map(|a| &a.outcome) {
            None => Err(ProtocolError::UnknownSnapshot(query)),
            Some(QueryOutcome::NoCompleteFamily) => Err(ProtocolError::NoCompleteFamily),
            Some(QueryOutcome::Answered { member, .. }) => Ok(*member),
        }
    }

    pub fn drain_events(&mut self) -> Vec<NodeEvent> {
        std::mem::take(&mut self.events)
    }

    fn d(&self) -> u64 {
        self.params.d as u64
    }

    fn start_node_count(&mut self, id: NodeId, t: u64, dropped: bool) {
        self.dropped = dropped;
        self.dropped_window = (self.level >= 1).then(|| (t, t + self.d()));
        let counter = Counter::new(
            id,
            CountKind::Nodes,
            self.member as u64,
            self.params.counting,
            Plan::Full,
            NODES_DOMAIN,
            t,
            "maintain.count",
        );
        self.phase = Phase::NodeCount(counter);
    }

    fn maintain(&mut self, id: NodeId, t: u64, inbox: &Inbox<'_, ProtoMsg>, env: &mut CountEnv) -> Option<CountMsg> {
        match self.phase {
            Phase::Init => {
                self.member = true;
                self.member_since = t;
                self.start_node_count(id, t, false);
            }
            Phase::Threshold(thr) => {
                let degree = inbox.iter().filter(|(_, m)| m.member).count() as f64;
                let next = self.member && degree >= thr;
                let dropped = self.member && !next;
                self.member = next;
                self.member_since = t;
                self.level += 1;
                self.start_node_count(id, t, dropped);
            }
            _ => {}
        }
        let counts = || inbox.iter().filter_map(|(_, m)| m.maintain.as_ref());
        match &mut self.phase {
            Phase::NodeCount(counter) => {
                let step = counter.step(counts(), env);
                match step.done {
                    Some(n) => self.after_node_count(id, t, n, inbox, env),
                    None => step.msg,
                }
            }
            Phase::EdgeCount { counter, n, started } => {
                let (n, started) = (*n, *started);
                let step = counter.step(counts(), env);
                match step.done {
                    Some(m) => {
                        self.record_level(t, n, m, started);
                        None
                    }
                    None => step.msg,
                }
            }
            _ => None,
        }
    }

    fn after_node_count(
        &mut self,
        id: NodeId,
        t: u64,
        n: f64,
        inbox: &Inbox<'_, ProtoMsg>,
        env: &mut CountEnv,
    ) -> Option<CountMsg> {
        if self.n0.is_none() {
            self.n0 = Some(n);
        }
        let reason = if n == 0.0 {
            Some(CloseReason::Empty)
        } else if self.level >= 1 && !self.dropped {
            Some(CloseReason::FixedPoint)
        } else if self.level >= self.params.p_cap {
            Some(CloseReason::DepthCap)
        } else {
            None
        };
        let (n, weight) = match reason {
            Some(reason) => {
                self.close_pass(t, reason);
                self.pass += 1;
                self.level = 0;
                self.member = true;
                self.member_since = t;
                (self.n0.expect("set above"), inbox.len() as u64)
            }
            None if self.member => (n, inbox.iter().filter(|(_, m)| m.member).count() as u64),
            None => (n, 0),
        };
        if self.level == 0 {
            // V_0 = V is (re)established when its edge count starts.
            self.pass_started = t;
            self.member_since = t;
        }
        self.dropped_window = None;
        let mut counter = Counter::new(
            id,
            CountKind::Edges,
            weight,
            self.params.counting,
            Plan::Full,
            EDGES_DOMAIN,
            t,
            "maintain.count",
        );
        let step = counter.step(std::iter::empty(), env);
        self.phase = Phase::EdgeCount { counter, n, started: t };
        step.msg
    }

    fn record_level(&mut self, t: u64, n: f64, m: f64, started: u64) {
        let ratio = if n > 0.0 { m / n } else { 0.0 };
        self.building.push(LevelRecord {
            n,
            m,
            ratio,
            member: self.member,
            computed_at: self.member_since,
            edges_started_at: started,
            completed_at: t,
        });
        self.events.push(NodeEvent::LevelRecorded { pass: self.pass, level: self.level, n, m, round: t });
        self.phase = Phase::Threshold(peel_threshold(m, n, self.params.peel_factor()));
    }

    fn close_pass(&mut self, t: u64, reason: CloseReason) {
        let levels = std::mem::take(&mut self.building);
        self.events.push(NodeEvent::PassClosed { pass: self.pass, levels: levels.len(), reason, round: t });
        if !levels.is_empty() {
            self.served = Some(Family { pass: self.pass, levels, started_at: self.pass_started, closed_at: t, reason });
        }
    }

    fn query_counter(&self, id: NodeId, q: u64, attempt: u32, coin: bool, t: u64) -> Counter {
        let domain = QUERY_DOMAIN ^ mix64(q.wrapping_mul(0x1_0000_0001) ^ attempt as u64);
        Counter::new(id, CountKind::Nodes, coin as u64, self.params.counting, Plan::Full, domain, t, "query.padding")
    }

    fn finish_query(&mut self, t: u64, a: ActiveQuery, padding: Option<PaddingInfo>) {
        let member = a.record.member || padding.as_ref().is_some_and(|p| p.coin);
        self.events.push(NodeEvent::QueryAnswered {
            query: a.request.id,
            round: t,
            level: Some(a.level),
            attempts: padding.as_ref().map_or(0, |p| p.attempts),
            estimate: padding.as_ref().map_or(0.0, |p| p.estimate),
        });
        let outcome = QueryOutcome::Answered {
            pass: a.pass,
            level: a.level,
            member,
            n_i: a.record.n,
            m_i: a.record.m,
            score: a.score,
            computed_at: a.record.computed_at,
            edges_started_at: a.record.edges_started_at,
            family_closed_at: a.closed_at,
            padding,
        };
        self.answers.insert(
            a.request.id,
            LocalAnswer { request: a.request, started_at: a.started_at, answered_at: t, outcome },
        );
    }

    /// Starts the next queued query. Returns the padding message if a
    /// padding count began, or `None` if the query was answered at once.
    fn start_query(
        &mut self,
        id: NodeId,
        t: u64,
        request: QueryRequest,
        rng: &mut SimRng,
        env: &mut CountEnv,
    ) -> Option<CountMsg> {
        let Some(family) = &self.served else {
            self.events.push(NodeEvent::QueryAnswered {
                query: request.id,
                round: t,
                level: None,
                attempts: 0,
                estimate: 0.0,
            });
            self.answers.insert(
                request.id,
                LocalAnswer { request, started_at: t, answered_at: t, outcome: QueryOutcome::NoCompleteFamily },
            );
            return None;
        };
        let pairs: Vec<(f64, f64)> = family.levels.iter().map(|r| (r.m, r.n)).collect();
        let level = select_level(&pairs, request.k).expect("served families are non-empty");
        let record = family.levels[level].clone();
        let n0 = family.levels[0].n;
        let score = record.m / (request.k as f64).max(record.n);
        let deficit = padding_deficit(request.k, record.n, self.params.delta);
        let window = acceptance_window(deficit.unwrap_or(0.0), self.params.delta, self.params.counting.is_exact());
        let p = coin_probability(&window, n0, record.n);
        let coin = deficit.is_some() && !record.member && rng.gen_bool(p);
        let mut a = ActiveQuery {
            request,
            started_at: t,
            pass: family.pass,
            closed_at: family.closed_at,
            level,
            record,
            score,
            deficit: deficit.unwrap_or(0.0),
            window,
            p,
            attempt: 0,
            coin,
            counter: self.query_counter(id, request.id, 0, coin, t),
            best: None,
        };
        if deficit.is_none() {
            self.finish_query(t, a, None);
            return None;
        }
        let msg = a.counter.step(std::iter::empty(), env).msg;
        self.active = Some(a);
        msg
    }

    fn serve_queries(
        &mut self,
        id: NodeId,
        t: u64,
        inbox: &Inbox<'_, ProtoMsg>,
        rng: &mut SimRng,
        env: &mut CountEnv,
    ) -> Option<CountMsg> {
        if let Some(mut a) = self.active.take() {
            let step = a.counter.step(inbox.iter().filter_map(|(_, m)| m.query.as_ref()), env);
            let Some(estimate) = step.done else {
                self.active = Some(a);
                return step.msg;
            };
            let distance = (estimate - a.window.center()).abs();
            if a.best.as_ref().is_none_or(|b| distance < b.distance) {
                a.best = Some(Attempt { distance, estimate, coin: a.coin, index: a.attempt });
            }
            let accepted = a.window.contains(estimate);
            if accepted || a.attempt + 1 >= self.params.padding_cap {
                let best = a.best.clone().expect("at least one attempt");
                let (estimate, coin, chosen) =
                    if accepted { (estimate, a.coin, a.attempt) } else { (best.estimate, best.coin, best.index) };
                let info = PaddingInfo {
                    deficit: a.deficit,
                    window: a.window,
                    coin_probability: a.p,
                    attempts: a.attempt + 1,
                    chosen,
                    estimate,
                    accepted,
                    coin,
                };
                self.finish_query(t, a, Some(info));
            } else {
                a.attempt += 1;
                a.coin = !a.record.member && rng.gen_bool(a.p);
                a.counter = self.query_counter(id, a.request.id, a.attempt, a.coin, t);
                let msg = a.counter.step(std::iter::empty(), env).msg;
                self.active = Some(a);
                return msg;
            }
        }
        while let Some(request) = self.queue.pop_front() {
            if let Some(msg) = self.start_query(id, t, request, rng, env) {
                return Some(msg);
            }
            if self.active.is_some() {
                return None;
            }
        }
        None
    }
}

impl NodeProgram for NodeState {
    type Msg = ProtoMsg;
    type Env = CountEnv;

    fn step(&mut self, ctx: StepCtx<'_, ProtoMsg>, env: &mut CountEnv) -> Option<ProtoMsg> {
        let t = ctx.round;
        env.set_round(t);
        if let Some((start, end)) = self.dropped_window {
            if t > start && t <= end {
                self.dropped |= ctx.inbox.iter().any(|(_, m)| m.dropped == Some(true));
            }
        }
        let maintain = self.maintain(ctx.id, t, &ctx.inbox, env);
        let query = self.serve_queries(ctx.id, t, &ctx.inbox, ctx.rng, env);
        let dropped = self.dropped_window.and_then(|(start, end)| (t >= start && t < end).then_some(self.dropped));
        Some(ProtoMsg { member: self.member, dropped, maintain, query })
    }
}
