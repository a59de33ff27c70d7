//! Per-node state machine of one counting task.

use super::pool::{CountEnv, PoolKey, PoolKind};
use super::{id_bits, CountConfig, CountKind, CountMode};
use crate::graph::NodeId;
use crate::nodeset::NodeSet;
use crate::rng::Fnv64;
use crate::sim::Payload;

/// Which stages a task runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Plan {
    /// Coarse stage, then the fine stage with `N = 2 · coarse`.
    Full,
    /// Coarse stage only.
    CoarseOnly,
    /// Fine stage only, with the given upper bound `N`.
    FineOnly { n_bound: f64 },
}

/// One flooded tuple (or tuple coordinate in strict mode), represented by its
/// provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMsg {
    pub key: PoolKey,
    pub kind: PoolKind,
    /// Coordinate carried, in strict mode.
    pub index: Option<u32>,
    pub prov: NodeSet,
    /// Largest toss count in a geometric tuple (sets the field width).
    pub max_x: u8,
    pub tag: &'static str,
}

fn bit_length(x: u8) -> u64 {
    (8 - x.leading_zeros()) as u64
}

impl CountMsg {
    pub fn bits(&self) -> u64 {
        let l = self.key.l as u64;
        match (self.kind, self.index) {
            // 7-bit width header, then l fields of that width.
            (PoolKind::Geometric, None) => 7 + l * bit_length(self.max_x).max(1),
            (PoolKind::Geometric, Some(_)) => 7,
            (PoolKind::Exponential, None) => 64 * l,
            (PoolKind::Exponential, Some(_)) => 64,
            (PoolKind::Exact, _) => (self.prov.len() as u64 * 2 * id_bits(self.prov.capacity()) as u64).max(1),
        }
    }
}

impl Payload for CountMsg {
    fn bit_parts(&self, out: &mut Vec<(&'static str, u64)>) {
        out.push((self.tag, self.bits()));
    }

    fn digest(&self) -> u64 {
        let mut h = Fnv64::default();
        h.write_u64(self.key.domain);
        h.write_u64(self.key.start);
        h.write_u64(self.key.stage as u64);
        h.write_u64(self.key.l as u64);
        h.write_u64(self.index.map_or(u64::MAX, |i| i as u64));
        h.write_u64(self.max_x as u64);
        for &w in self.prov.words() {
            h.write_u64(w);
        }
        h.finish()
    }
}

#[derive(Debug, Clone)]
struct Flood {
    key: PoolKey,
    kind: PoolKind,
    prov: NodeSet,
    max_x: u8,
    chunk: u32,
    chunks: u32,
    began: u64,
    coords: Vec<u8>,
    sum: f64,
}

#[derive(Debug, Clone)]
enum Stage {
    Coarse(Flood),
    Fine(Flood),
    Exact(Flood),
    Idle { until: u64, value: f64 },
    Done,
}

const COARSE: u32 = 0;
const FINE: u32 = 1;
const EXACT: u32 = 2;

/// Output of one [`Counter::step`].
#[derive(Debug, Clone, Default)]
pub struct CounterStep {
    pub msg: Option<CountMsg>,
    /// Final estimate, reported exactly once.
    pub done: Option<f64>,
}

/// Counting task as seen by one node. Call [`Counter::step`] once per round,
/// starting in the round the task begins, passing the counting messages of
/// the inbox.
#[derive(Debug, Clone)]
pub struct Counter {
    id: NodeId,
    kind: CountKind,
    cfg: CountConfig,
    plan: Plan,
    domain: u64,
    start: u64,
    tag: &'static str,
    weight: u64,
    local: u64,
    stage: Stage,
    coarse: Option<f64>,
    l_exp: Option<usize>,
    result: Option<f64>,
    rounds: Option<u64>,
}

impl Counter {
    /// `weight` is the membership bit for node counts and the member-degree
    /// `d_u` for edge counts. `domain` and `start` must agree network-wide.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: NodeId,
        kind: CountKind,
        weight: u64,
        cfg: CountConfig,
        plan: Plan,
        domain: u64,
        start: u64,
        tag: &'static str,
    ) -> Self {
        if kind == CountKind::Nodes {
            assert!(weight <= 1, "node counts take a membership bit");
        }
        Self {
            id,
            kind,
            cfg,
            plan,
            domain,
            start,
            tag,
            weight,
            local: 0,
            stage: Stage::Done,
            coarse: None,
            l_exp: None,
            result: None,
            rounds: None,
        }
    }

    pub fn result(&self) -> Option<f64> {
        self.result
    }

    pub fn is_done(&self) -> bool {
        self.result.is_some()
    }

    /// Coarse estimate of the simulated multiset (degree sum for edges).
    pub fn coarse(&self) -> Option<f64> {
        self.coarse
    }

    pub fn l_geo(&self) -> usize {
        self.cfg.params.l_geo()
    }

    pub fn l_exp(&self) -> Option<usize> {
        self.l_exp
    }

    /// Rounds from the start round to the round the result became known.
    pub fn rounds_used(&self) -> Option<u64> {
        self.rounds
    }

    fn d(&self) -> u64 {
        self.cfg.params.d as u64
    }

    fn begin(&self, stage: u32, kind: PoolKind, l: usize, chunks: u32, env: &mut CountEnv) -> Flood {
        let key = PoolKey { domain: self.domain, start: self.start, stage, l: l as u32 };
        env.register(key, kind, self.id, self.weight);
        let n = env.node_count();
        let origin = self.weight > 0;
        Flood {
            key,
            kind,
            prov: if origin { NodeSet::singleton(n, self.id as usize) } else { NodeSet::new(n) },
            max_x: if kind == PoolKind::Geometric { env.node_max(&key, self.id) } else { 0 },
            chunk: 0,
            chunks,
            began: self.local,
            coords: Vec::new(),
            sum: 0.0,
        }
    }

    fn begin_coarse(&mut self, env: &mut CountEnv) {
        let l = self.l_geo();
        let chunks = if self.cfg.strict { l as u32 } else { 1 };
        self.stage = Stage::Coarse(self.begin(COARSE, PoolKind::Geometric, l, chunks, env));
    }

    fn begin_fine(&mut self, n_bound: f64, env: &mut CountEnv) {
        let l = self.cfg.params.l_exp(n_bound);
        self.l_exp = Some(l);
        let chunks = if self.cfg.strict { l as u32 } else { 1 };
        self.stage = Stage::Fine(self.begin(FINE, PoolKind::Exponential, l, chunks, env));
    }

    fn finish(&mut self, raw: f64) -> Option<f64> {
        let value = match self.kind {
            CountKind::Nodes => raw,
            CountKind::Edges => raw / 2.0,
        };
        self.stage = Stage::Done;
        self.result = Some(value);
        self.rounds = Some(self.local);
        Some(value)
    }

    pub fn step<'a>(&mut self, inbox: impl Iterator<Item = &'a CountMsg>, env: &mut CountEnv) -> CounterStep {
        if self.result.is_some() {
            return CounterStep::default();
        }
        let mut out = CounterStep::default();
        if self.local == 0 {
            match (self.cfg.mode, self.plan) {
                (CountMode::Exact, _) => {
                    self.stage = Stage::Exact(self.begin(EXACT, PoolKind::Exact, 1, 1, env));
                }
                (CountMode::Estimate, Plan::FineOnly { n_bound }) => self.begin_fine(n_bound, env),
                (CountMode::Estimate, _) => self.begin_coarse(env),
            }
        } else {
            self.absorb(inbox, env);
            out.done = self.advance(env);
        }
        out.msg = self.message();
        self.local += 1;
        out
    }

    fn absorb<'a>(&mut self, inbox: impl Iterator<Item = &'a CountMsg>, env: &mut CountEnv) {
        let flood = match &mut self.stage {
            Stage::Coarse(f) | Stage::Fine(f) | Stage::Exact(f) => f,
            _ => return,
        };
        let index = (self.cfg.strict && flood.kind != PoolKind::Exact).then_some(flood.chunk);
        env.touch(&flood.key);
        let total = env.origin_count(&flood.key);
        for m in inbox {
            if m.key != flood.key || m.index != index {
                continue;
            }
            flood.max_x = flood.max_x.max(m.max_x);
            if flood.prov.len() < total {
                flood.prov.union_with(&m.prov);
            }
        }
    }

    /// Handles stage boundaries at the current local round.
    fn advance(&mut self, env: &mut CountEnv) -> Option<f64> {
        let d = self.d();
        let local = self.local;
        match &mut self.stage {
            Stage::Idle { until, value } => {
                if local == *until {
                    let v = *value;
                    return self.finish_raw(v);
                }
                None
            }
            Stage::Done => None,
            Stage::Coarse(f) | Stage::Fine(f) | Stage::Exact(f) => {
                if local != f.began + d {
                    return None;
                }
                let strict = self.cfg.strict && f.kind != PoolKind::Exact;
                if strict {
                    let i = f.chunk;
                    match f.kind {
                        PoolKind::Geometric => f.coords.push(env.geo_coord(&f.key, i, &f.prov).unwrap_or(0)),
                        PoolKind::Exponential => f.sum += env.exp_coord(&f.key, i, &f.prov),
                        PoolKind::Exact => unreachable!(),
                    }
                    f.chunk += 1;
                    if f.chunk < f.chunks {
                        let origin = self.weight > 0;
                        f.prov = if origin {
                            NodeSet::singleton(f.prov.capacity(), self.id as usize)
                        } else {
                            NodeSet::new(f.prov.capacity())
                        };
                        f.began = local;
                        return None;
                    }
                }
                let f = f.clone();
                self.end_stage(f, strict, env)
            }
        }
    }

    fn finish_raw(&mut self, raw: f64) -> Option<f64> {
        // `raw` is already on the output scale when coming from `Idle`.
        self.stage = Stage::Done;
        self.result = Some(raw);
        self.rounds = Some(self.local);
        Some(raw)
    }

    fn end_stage(&mut self, f: Flood, strict: bool, env: &mut CountEnv) -> Option<f64> {
        let d = self.d();
        match self.stage {
            Stage::Coarse(_) => {
                let c = if strict { super::coarse_from_tuple(&f.coords) } else { env.geo_estimate(&f.key, &f.prov) };
                self.coarse = Some(c);
                if self.plan == Plan::CoarseOnly {
                    return self.finish(c);
                }
                if c == 0.0 {
                    if strict {
                        return self.finish(0.0);
                    }
                    self.stage = Stage::Idle { until: self.local + d, value: 0.0 };
                    return None;
                }
                self.begin_fine(2.0 * c, env);
                None
            }
            Stage::Fine(_) => {
                let v = if strict {
                    if f.sum.is_infinite() {
                        0.0
                    } else {
                        f.chunks as f64 / f.sum
                    }
                } else {
                    env.exp_estimate(&f.key, &f.prov)
                };
                self.finish(v)
            }
            Stage::Exact(_) => {
                let (count, weight) = env.exact_totals(&f.key, &f.prov);
                let value = match self.kind {
                    CountKind::Nodes => count as f64,
                    CountKind::Edges => weight as f64 / 2.0,
                };
                if self.plan == Plan::Full {
                    self.stage = Stage::Idle { until: self.local + d, value };
                    None
                } else {
                    self.finish_raw(value)
                }
            }
            _ => None,
        }
    }

    fn message(&self) -> Option<CountMsg> {
        let f = match &self.stage {
            Stage::Coarse(f) | Stage::Fine(f) | Stage::Exact(f) => f,
            _ => return None,
        };
        let strict = self.cfg.strict && f.kind != PoolKind::Exact;
        Some(CountMsg {
            key: f.key,
            kind: f.kind,
            index: strict.then_some(f.chunk),
            prov: f.prov.clone(),
            max_x: f.max_x,
            tag: self.tag,
        })
    }
}
