//! Scenario execution and per-query scoring.

use std::collections::BTreeMap;

use num_rational::Ratio;
use sha2::{Digest, Sha256};

use super::config::{LogMode, ScenarioConfig};
use super::report::{
    check_round_budget, BandwidthSummary, Checks, LevelTiming, PassRecord, QueryRecord, QueryStatus, RunReport,
    TagSummary,
};
use super::HarnessError;
use crate::counting::CountEnv;
use crate::graph::{static_diameter, DynamicGraph, Edit, EditOp, NodeId};
use crate::nodeset::NodeSet;
use crate::oracle::{at_least_k_bound, exact_densest, ratio_f64, OracleCache, OracleMethod};
use crate::protocol::{NodeEvent, NodeState, ProtocolError, ProtocolParams, QueryOutcome, QueryRequest};
use crate::rng::derive_seed;
use crate::sim::{EventLog, EventRecord, Network};

/// Derives the protocol parameters of a scenario on `G_0`.
pub fn protocol_params(cfg: &ScenarioConfig, g: &DynamicGraph) -> Result<ProtocolParams, HarnessError> {
    let spec = &cfg.protocol;
    let n = g.node_count();
    let d = match spec.diameter {
        Some(d) => d,
        None => static_diameter(g)
            .finite()
            .ok_or_else(|| HarnessError::Config("G_0 is disconnected; set protocol.diameter explicitly".into()))?,
    };
    let mut p = ProtocolParams::new(spec.epsilon, d, n)?
        .with_k(spec.k)
        .with_exact_counting(spec.exact_counting)
        .with_strict_congest(spec.strict_congest)
        .with_threshold_factor(spec.threshold_factor)?;
    if let Some(e) = spec.estimator_epsilon {
        p = p.with_estimator_epsilon(e)?;
    }
    if let Some(cap) = spec.p_cap {
        p = p.with_p_cap(cap, n)?;
    }
    Ok(p)
}

/// Online flood monitor: starts a flood from every node at regular rounds
/// and records how long each takes on the evolving topology.
struct FloodMonitor {
    stride: u64,
    active: Vec<(u64, Vec<NodeSet>)>,
    worst: u32,
    unfinished: bool,
}

impl FloodMonitor {
    fn new(stride: u64) -> Self {
        Self { stride: stride.max(1), active: Vec::new(), worst: 0, unfinished: false }
    }

    /// Advances every active flood by one round over `g` (the topology of
    /// round `t`).
    fn step(&mut self, t: u64, g: &DynamicGraph) {
        let n = g.node_count();
        if t.is_multiple_of(self.stride) {
            self.active.push((t, (0..n).map(|v| NodeSet::singleton(n, v)).collect()));
        }
        let mut done = Vec::new();
        for (i, (start, reach)) in self.active.iter_mut().enumerate() {
            let prev = reach.clone();
            for (v, set) in reach.iter_mut().enumerate() {
                for &u in g.neighbors(v as NodeId) {
                    set.union_with(&prev[u as usize]);
                }
            }
            if reach.iter().all(|s| s.len() == n) {
                self.worst = self.worst.max((t + 1 - *start) as u32);
                done.push(i);
            }
        }
        for i in done.into_iter().rev() {
            self.active.swap_remove(i);
        }
    }

    fn finish(&mut self) -> Option<u32> {
        self.unfinished |= !self.active.is_empty();
        (!self.unfinished).then_some(self.worst)
    }
}

/// Set of nodes answering `true` to query `q`.
fn answer_set(nodes: &[NodeState], q: u64) -> Result<NodeSet, ProtocolError> {
    let n = nodes.len();
    let mut s = NodeSet::new(n);
    for (v, node) in nodes.iter().enumerate() {
        if node.membership_query(q)? {
            s.insert(v);
        }
    }
    Ok(s)
}

fn set_hash(s: &NodeSet) -> String {
    let mut h = Sha256::new();
    for v in s.iter() {
        h.update((v as u32).to_le_bytes());
    }
    let d = h.finalize();
    d[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn rational(r: Ratio<u64>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// `G_t` from `G_{t+1}` and the churn batch applied after round `t`.
fn undo_batch(g: &DynamicGraph, batch: &[Edit]) -> Result<DynamicGraph, HarnessError> {
    let mut prev = g.clone();
    let inverse: Vec<Edit> = batch
        .iter()
        .rev()
        .map(|e| match e.op {
            EditOp::Add => Edit::remove(e.u, e.v),
            EditOp::Remove => Edit::add(e.u, e.v),
        })
        .collect();
    prev.apply_churn(&inverse)?;
    Ok(prev)
}

struct Pending {
    request: QueryRequest,
}

/// Everything needed to score one answered query.
struct Scorer<'a> {
    cfg: &'a ScenarioConfig,
    params: &'a ProtocolParams,
    cache: Option<OracleCache>,
    densest: BTreeMap<String, (Ratio<u64>, OracleMethod)>,
}

impl Scorer<'_> {
    fn densest(&mut self, g: &DynamicGraph) -> Result<(Ratio<u64>, OracleMethod), HarnessError> {
        let key = g.content_hash();
        if let Some(hit) = self.densest.get(&key) {
            return Ok(*hit);
        }
        let r = match &self.cache {
            Some(c) => c.densest(g)?,
            None => exact_densest(g),
        };
        let v = (r.density, r.method);
        self.densest.insert(key, v);
        Ok(v)
    }

    fn score(
        &mut self,
        g_t: &DynamicGraph,
        nodes: &[NodeState],
        request: QueryRequest,
        incomplete: u64,
    ) -> Result<QueryRecord, HarnessError> {
        let eps = self.params.epsilon;
        let delta = self.params.delta;
        let r = self.cfg.adversary.rate as f64;
        let k = request.k;
        let answer = nodes[0].answer(request.id).expect("answered by every node");
        let mut rec = QueryRecord {
            id: request.id,
            k,
            issued_at: request.issued_at,
            status: QueryStatus::NoCompleteFamily,
            answered_at: Some(answer.answered_at),
            level: None,
            pass: None,
            t_prime: None,
            t_second: None,
            t_span: None,
            pass_length: None,
            answer_size: 0,
            answer_hash: String::new(),
            answer_edges: 0,
            answer_density: "0/1".into(),
            answer_density_f64: 0.0,
            oracle_density: "0/1".into(),
            oracle_density_f64: 0.0,
            oracle_method: String::new(),
            oracle_exact: true,
            ratio: None,
            ratio_f64: None,
            bound: if k == 0 { 2.0 + eps } else { 3.0 + eps },
            precondition_lhs: 0.0,
            precondition_rhs: 0.0,
            conditioned: false,
            padded: false,
            padding_attempts: 0,
            padding_accepted: None,
            size_bound: None,
            size_bound_ok: None,
            incomplete_floods: incomplete,
            guarantee_ok: None,
        };
        let QueryOutcome::Answered { pass, level, n_i, computed_at, edges_started_at, padding, .. } = &answer.outcome
        else {
            return Ok(rec);
        };
        let t = answer.answered_at;
        rec.status = QueryStatus::Answered;
        rec.level = Some(*level);
        rec.pass = Some(*pass);
        rec.t_prime = Some(*computed_at);
        rec.t_second = Some(*edges_started_at);
        rec.t_span = Some(t - computed_at);
        rec.pass_length = nodes[0].served().filter(|f| f.pass == *pass).map(|f| f.pass_length());
        rec.padded = padding.is_some();
        rec.padding_attempts = padding.as_ref().map_or(0, |p| p.attempts);
        rec.padding_accepted = padding.as_ref().map(|p| p.accepted);

        let members = answer_set(nodes, request.id)?;
        rec.answer_size = members.len();
        rec.answer_hash = set_hash(&members);
        let answer_density = if members.is_empty() {
            Ratio::from_integer(0)
        } else {
            let d = g_t.induced_density(&members)?;
            rec.answer_edges = d.edge_count;
            d.density
        };
        rec.answer_density = rational(answer_density);
        rec.answer_density_f64 = ratio_f64(answer_density);

        let (oracle_upper, oracle_lower) = if k == 0 {
            let (rho, method) = self.densest(g_t)?;
            rec.oracle_method = format!("{method:?}").to_lowercase();
            (rho, rho)
        } else {
            let b = at_least_k_bound(g_t, k)?;
            rec.oracle_exact = b.exact;
            rec.oracle_method = format!("{:?}", b.method).to_lowercase();
            (b.upper, b.lower)
        };
        rec.oracle_density = rational(oracle_upper);
        rec.oracle_density_f64 = ratio_f64(oracle_upper);
        if answer_density > Ratio::from_integer(0) {
            let ratio = oracle_upper / answer_density;
            rec.ratio = Some(rational(ratio));
            rec.ratio_f64 = Some(ratio_f64(ratio));
        }

        let t_span = rec.t_span.expect("set above") as f64;
        rec.precondition_rhs = 24.0 * t_span * r / eps;
        rec.precondition_lhs = k.max(1) as f64 * ratio_f64(oracle_lower);
        rec.conditioned = rec.precondition_lhs >= rec.precondition_rhs;

        let size_bound = match padding {
            None => n_i / (1.0 - delta),
            Some(_) => k as f64 * (1.0 + 2.0 * delta) * (1.0 + delta) / (1.0 - delta) + 1.0,
        };
        rec.size_bound = Some(size_bound);
        rec.size_bound_ok = Some(members.len() as f64 <= size_bound);

        if rec.conditioned {
            let ok_density = |oracle: Ratio<u64>| ratio_f64(answer_density) * rec.bound >= ratio_f64(oracle);
            let size_ok = members.len() >= k && !members.is_empty();
            rec.guarantee_ok = if !size_ok || !ok_density(oracle_lower) {
                Some(false)
            } else if ok_density(oracle_upper) {
                Some(true)
            } else {
                // Only a bracket is known and the answer falls inside it.
                None
            };
        }
        Ok(rec)
    }
}

/// Runs a scenario to completion and scores every query.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let g0 = cfg.build_graph()?;
    let params = protocol_params(cfg, &g0)?;
    let n = g0.node_count();
    let seed = cfg.seed;
    let adversary = cfg.adversary.build(&g0, seed)?;
    let log = match cfg.output.event_log {
        LogMode::Off => EventLog::off(),
        LogMode::Digest => EventLog::digest_only(),
        LogMode::File => {
            let dir = cfg
                .output
                .dir
                .as_ref()
                .ok_or_else(|| HarnessError::Config("event_log = file needs output.dir".into()))?;
            std::fs::create_dir_all(dir)?;
            EventLog::file(&dir.join("events.jsonl"))?
        }
    };
    let nodes = (0..n).map(|_| NodeState::new(params)).collect();
    let mut net = Network::new(g0.clone(), adversary, nodes, derive_seed(seed, "nodes", 0), log);
    net.log_mut().header(&cfg.to_json());
    net.record_trace();
    let mut env = CountEnv::new(derive_seed(seed, "pools", 0), n);
    let gc_idle = 4 * params.level_round_cost() + 8;
    let mut monitor = cfg.monitor_diameter.then(|| FloodMonitor::new(params.d as u64));
    let mut scorer = Scorer {
        cfg,
        params: &params,
        cache: match &cfg.output.oracle_cache {
            Some(dir) => Some(OracleCache::new(dir)?),
            None => None,
        },
        densest: BTreeMap::new(),
    };

    let ks: Vec<usize> = if cfg.queries.k.is_empty() { vec![params.k] } else { cfg.queries.k.clone() };
    let mut scheduled: BTreeMap<u64, usize> = BTreeMap::new();
    for &r in &cfg.queries.at_rounds {
        *scheduled.entry(r).or_default() += 1;
    }
    let mut next_query = 0u64;
    let mut pending: BTreeMap<u64, Pending> = BTreeMap::new();
    let mut answered_by: BTreeMap<u64, usize> = BTreeMap::new();
    let mut queries: Vec<QueryRecord> = Vec::new();
    let mut passes: Vec<PassRecord> = Vec::new();
    let mut levels: Vec<LevelTiming> = Vec::new();
    let mut pass_trigger = false;
    let mut drain_deadline: Option<u64> = None;

    let max_rounds = cfg.duration.rounds.unwrap_or(u64::MAX);
    let target_passes = cfg.duration.passes.unwrap_or(u64::MAX);
    // Safety net for pass-bounded runs that never close a pass.
    let hard_limit = cfg.duration.passes.map_or(u64::MAX, |p| {
        let per_pass = params.p_cap as u64 * params.level_round_cost() * if params.counting.strict { 4096 } else { 1 };
        (p + 2) * per_pass + 4 * params.level_round_cost()
    });

    loop {
        let t = net.round();
        let done_duration = t >= max_rounds || passes.len() as u64 >= target_passes;
        if done_duration && pending.is_empty() {
            break;
        }
        if done_duration {
            // Let queued queries finish, with every padding attempt allowed.
            let per_query = (params.padding_cap as u64 + 1) * (2 * params.d as u64 + 2);
            let strict = if params.counting.strict { 4096 } else { 1 };
            let deadline = *drain_deadline.get_or_insert(t + (pending.len() as u64 + 1) * per_query * strict);
            if t >= deadline {
                break;
            }
        }
        if t >= hard_limit {
            return Err(HarnessError::Runtime {
                round: t,
                seed,
                message: format!("no progress after {t} rounds ({} passes served)", passes.len()),
            });
        }
        let mut inject = if done_duration { 0 } else { scheduled.remove(&t).unwrap_or(0) };
        if pass_trigger && !done_duration {
            inject += 1;
        }
        pass_trigger = false;
        for _ in 0..inject {
            for &k in &ks {
                let request = QueryRequest { id: next_query, k, issued_at: t };
                next_query += 1;
                for v in net.nodes_mut() {
                    v.enqueue_query(request);
                }
                pending.insert(request.id, Pending { request });
                net.log_mut().record(&EventRecord::new(t, None, "query_issued", request.id, 0));
            }
        }
        if let Some(m) = &mut monitor {
            m.step(t, net.graph());
        }
        net.run_round(&mut env).map_err(|e| HarnessError::Runtime { round: t, seed, message: e.to_string() })?;
        env.collect_garbage(gc_idle);

        let mut events = Vec::new();
        for v in net.nodes_mut() {
            events.push(v.drain_events());
        }
        let mut level_groups: BTreeMap<(u64, usize), Vec<(u64, u64)>> = BTreeMap::new();
        let mut closed: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut answers: BTreeMap<u64, Vec<(Option<usize>, u32, u64)>> = BTreeMap::new();
        for evs in &events {
            for e in evs {
                match e {
                    NodeEvent::LevelRecorded { pass, level, n, m, .. } => {
                        level_groups.entry((*pass, *level)).or_default().push((n.to_bits(), m.to_bits()));
                    }
                    NodeEvent::PassClosed { pass, levels, .. } => closed.entry(*pass).or_default().push(*levels),
                    NodeEvent::QueryAnswered { query, level, attempts, estimate, .. } => {
                        answers.entry(*query).or_default().push((*level, *attempts, estimate.to_bits()));
                    }
                }
            }
        }
        let desync = |detail: String| HarnessError::Desync { round: t, seed, detail };
        for ((pass, level), vals) in &level_groups {
            if vals.len() != n || vals.iter().any(|v| v != &vals[0]) {
                return Err(desync(format!(
                    "level ({pass}, {level}) recorded by {} nodes with differing scalars",
                    vals.len()
                )));
            }
            let nodes = net.nodes();
            let members =
                NodeSet::from_ids(n, (0..n).filter(|&v| nodes[v].building().last().is_some_and(|l| l.member)));
            let rec = nodes[0].building().last().expect("just recorded");
            // Counts refer to the round-start topology of this round.
            let g_t = undo_batch(net.graph(), net.trace_batches().and_then(|b| b.last()).map_or(&[][..], |b| b))?;
            levels.push(LevelTiming {
                pass: *pass,
                level: *level,
                computed_at: rec.computed_at,
                edges_started_at: rec.edges_started_at,
                completed_at: rec.completed_at,
                n_estimate: rec.n,
                m_estimate: rec.m,
                n_true: members.len() as u64,
                m_true: g_t.induced_edge_count(&members),
            });
        }
        for (pass, lens) in &closed {
            if lens.len() != n || lens.iter().any(|l| *l != lens[0]) {
                return Err(desync(format!("pass {pass} closed inconsistently")));
            }
            if let Some(f) = net.nodes()[0].served().filter(|f| f.pass == *pass).cloned() {
                passes.push(PassRecord {
                    pass: f.pass,
                    levels: f.levels.len(),
                    started_at: f.started_at,
                    closed_at: f.closed_at,
                    length: f.pass_length(),
                    reason: f.reason,
                });
                net.log_mut().record(&EventRecord::new(t, None, "pass_closed", f.pass, 0));
                if cfg.queries.every_pass {
                    pass_trigger = true;
                }
            }
        }
        for (q, vals) in answers {
            if vals.iter().any(|v| v != &vals[0]) {
                return Err(desync(format!("query {q} answered inconsistently")));
            }
            let count = answered_by.entry(q).or_default();
            *count += vals.len();
            if *count < n {
                continue;
            }
            let p = pending.remove(&q).expect("answered queries were pending");
            net.log_mut().record(&EventRecord::new(t, None, "query_answered", q, 0));
            let g_t = undo_batch(net.graph(), net.trace_batches().and_then(|b| b.last()).map_or(&[][..], |b| b))?;
            let rec = scorer.score(&g_t, net.nodes(), p.request, env.stats().incomplete)?;
            queries.push(rec);
        }
    }
    for (_, p) in pending {
        queries.push(unanswered(p.request));
    }
    queries.sort_by_key(|q| q.id);

    let rounds = net.round();
    let ledger = net.ledger();
    let bandwidth = BandwidthSummary {
        global_max_bits: ledger.global_max_bits(),
        total_bits: ledger.total_bits(),
        tags: ledger
            .tags()
            .iter()
            .map(|(tag, s)| TagSummary {
                tag: tag.to_string(),
                max_bits: s.max_bits,
                max_round: s.max_at.map_or(0, |at| at.0),
                total_bits: s.total_bits,
                deliveries: s.deliveries,
            })
            .collect(),
    };
    let round_budget = check_round_budget(&params, &passes, &queries);
    let all_queries_answered = queries.iter().all(|q| q.status != QueryStatus::Unanswered);
    let (conditioned, met) = {
        let scored: Vec<bool> = queries.iter().filter_map(|q| q.guarantee_ok).collect();
        (scored.len(), scored.iter().filter(|&&b| b).count())
    };
    let failed_guarantees = conditioned - met;
    let ok = round_budget.ok && all_queries_answered && failed_guarantees == 0;
    let pool = env.stats().clone();
    let measured_flood_time = monitor.as_mut().and_then(|m| m.finish());
    let mut log = net.into_log();
    log.finish()?;
    Ok(RunReport {
        config: cfg.clone(),
        seed,
        n,
        initial_edges: g0.edge_count(),
        params,
        rounds,
        measured_flood_time,
        passes,
        levels,
        queries,
        bandwidth,
        pool,
        event_log_digest: log.digest_hex(),
        event_log_lines: log.line_count(),
        checks: Checks { round_budget, all_queries_answered, conditioned_queries: conditioned, failed_guarantees, ok },
        passed: ok,
    })
}

fn unanswered(request: QueryRequest) -> QueryRecord {
    QueryRecord {
        id: request.id,
        k: request.k,
        issued_at: request.issued_at,
        status: QueryStatus::Unanswered,
        answered_at: None,
        level: None,
        pass: None,
        t_prime: None,
        t_second: None,
        t_span: None,
        pass_length: None,
        answer_size: 0,
        answer_hash: String::new(),
        answer_edges: 0,
        answer_density: "0/1".into(),
        answer_density_f64: 0.0,
        oracle_density: "0/1".into(),
        oracle_density_f64: 0.0,
        oracle_method: String::new(),
        oracle_exact: false,
        ratio: None,
        ratio_f64: None,
        bound: 0.0,
        precondition_lhs: 0.0,
        precondition_rhs: 0.0,
        conditioned: false,
        padded: false,
        padding_attempts: 0,
        padding_accepted: None,
        size_bound: None,
        size_bound_ok: None,
        incomplete_floods: 0,
        guarantee_ok: None,
    }
}
