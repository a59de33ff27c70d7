//! Simulation-side storage of origin tuples.
//!
//! Floods carry *provenance*: the set of origins whose tuples have been
//! merged into a node's current tuple. Because min/max merging is
//! idempotent, commutative and associative, the merged tuple is a function of
//! the provenance alone, so it is materialized only when a node needs its
//! estimate. Origin values are drawn from counter-based streams keyed by
//! `(seed, stage, node, coordinate)`, which makes them independent of the
//! order in which nodes are evaluated.
//!
//! Exponential coordinates are realized as an exponential race: the minimum
//! over a provenance set is the first arrival among its members, with arrival
//! gaps `Exp(remaining weight)` and winners drawn proportionally to weight.
//! This is exactly the joint law of independent `Exp(w_u)` draws per origin,
//! but a complete flood only ever touches the first arrival, so the cost is
//! `O(l)` instead of `O(n·l)`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::graph::NodeId;
use crate::nodeset::NodeSet;
use crate::rng::{derive_seed, mix64};

/// Identifies one flooding stage of one counting task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PoolKey {
    /// Task family, e.g. a hash of the algorithm tag.
    pub domain: u64,
    /// Round in which the task started.
    pub start: u64,
    /// Stage within the task.
    pub stage: u32,
    /// Tuple length (part of the key so disagreeing nodes never share a pool).
    pub l: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    /// Maxima of geometric toss counts.
    Geometric,
    /// Minima of exponential variables.
    Exponential,
    /// Exact `(id, weight)` aggregation.
    Exact,
}

/// Aggregate statistics over all pools of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolStats {
    pub stages: u64,
    /// Geometric draws that hit the 64-toss cap.
    pub truncations: u64,
    /// Materializations whose provenance missed at least one origin.
    pub incomplete: u64,
}

fn counter_hash(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    mix64(mix64(mix64(seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15)) ^ b) ^ c)
}

/// Uniform in (0, 1].
fn unit(h: u64) -> f64 {
    ((h >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn exp_draw(h: u64) -> f64 {
    -unit(h).ln()
}

/// Maximum of `w` independent geometric(1/2) toss counts (support 1, 2, …),
/// capped at 64. Returns the value and whether the cap was hit.
fn geometric_max(h: u64, w: u64) -> (u8, bool) {
    if w == 1 {
        let x = h.trailing_zeros() + 1;
        return if x > 64 { (64, true) } else { (x as u8, false) };
    }
    let u = unit(h);
    let cdf = |k: i32| (w as f64 * (-(2f64.powi(-k))).ln_1p()).exp();
    let tail = -(u.ln() / w as f64).exp_m1();
    let mut k = (-tail.log2()).ceil().clamp(1.0, 65.0) as i32;
    while k > 1 && cdf(k - 1) >= u {
        k -= 1;
    }
    while k <= 64 && cdf(k) < u {
        k += 1;
    }
    if k > 64 {
        (64, true)
    } else {
        (k as u8, false)
    }
}

#[derive(Debug, Clone, Default)]
struct Arrivals {
    times: Vec<f64>,
    winners: Vec<NodeId>,
    arrived: Vec<bool>,
    remaining: u64,
}

#[derive(Debug)]
struct Pool {
    kind: PoolKind,
    seed: u64,
    l: usize,
    weights: Vec<u64>,
    origins: NodeSet,
    total_weight: u64,
    geo: Vec<u8>,
    node_max: Vec<u8>,
    cumulative: Vec<u64>,
    races: HashMap<u32, Arrivals>,
    memo: HashMap<NodeSet, f64>,
    last_used: u64,
}

impl Pool {
    fn new(kind: PoolKind, seed: u64, n: usize, l: usize) -> Self {
        Self {
            kind,
            seed,
            l,
            weights: vec![0; n],
            origins: NodeSet::new(n),
            total_weight: 0,
            geo: Vec::new(),
            node_max: vec![0; n],
            cumulative: Vec::new(),
            races: HashMap::new(),
            memo: HashMap::new(),
            last_used: 0,
        }
    }

    fn geo_row(&self, u: usize) -> &[u8] {
        &self.geo[u * self.l..(u + 1) * self.l]
    }

    fn ensure_cumulative(&mut self) {
        if self.cumulative.len() == self.weights.len() {
            return;
        }
        let mut acc = 0;
        self.cumulative = self
            .weights
            .iter()
            .map(|&w| {
                acc += w;
                acc
            })
            .collect();
    }

    fn first_arrival(&self, i: u32) -> f64 {
        exp_draw(counter_hash(self.seed, i as u64, 0, 0)) / self.total_weight as f64
    }

    /// Extends the race of coordinate `i` by one arrival.
    fn extend(&mut self, i: u32) {
        self.ensure_cumulative();
        let n = self.weights.len();
        let total = self.total_weight;
        let seed = self.seed;
        let t0 = self.first_arrival(i);
        let race = self.races.entry(i).or_insert_with(|| Arrivals {
            times: vec![t0],
            winners: Vec::new(),
            arrived: vec![false; n],
            remaining: total,
        });
        let k = race.winners.len() as u64;
        if race.times.len() == race.winners.len() {
            let gap = exp_draw(counter_hash(seed, i as u64, k, 0)) / race.remaining as f64;
            let prev = *race.times.last().expect("race has a first arrival");
            race.times.push(prev + gap);
        }
        // Winner of arrival `k`, proportional to weight among the remaining.
        let mut winner = None;
        for attempt in 0..64u64 {
            let x = counter_hash(seed, i as u64, k, 1 + attempt) % total;
            let v = self.cumulative.partition_point(|&c| c <= x);
            if !race.arrived[v] {
                winner = Some(v);
                break;
            }
        }
        let v = winner.unwrap_or_else(|| {
            let mut x = counter_hash(seed, i as u64, k, u64::MAX) % race.remaining;
            (0..n)
                .find(|&v| {
                    let w = if race.arrived[v] { 0 } else { self.weights[v] };
                    if x < w {
                        true
                    } else {
                        x -= w;
                        false
                    }
                })
                .expect("remaining weight is positive")
        });
        race.arrived[v] = true;
        race.remaining -= self.weights[v];
        race.winners.push(v as NodeId);
    }

    /// Minimum over `prov` of coordinate `i`, or `+∞` for no origin.
    fn exp_min(&mut self, i: u32, prov: &NodeSet, covers_all: bool) -> f64 {
        if covers_all {
            return self.first_arrival(i);
        }
        let mut k = 0;
        loop {
            let known = self.races.get(&i).map_or(0, |r| r.winners.len());
            if k == known {
                self.extend(i);
            }
            let race = &self.races[&i];
            if prov.contains(race.winners[k] as usize) {
                return race.times[k];
            }
            k += 1;
        }
    }

    /// Value of origin `u` at coordinate `i` (the time `u` arrives).
    fn exp_value(&mut self, i: u32, u: usize) -> f64 {
        let mut k = 0;
        loop {
            let known = self.races.get(&i).map_or(0, |r| r.winners.len());
            if k == known {
                self.extend(i);
            }
            let race = &self.races[&i];
            if race.winners[k] as usize == u {
                return race.times[k];
            }
            k += 1;
        }
    }
}

/// Estimator pools of one simulation run.
#[derive(Debug)]
pub struct CountEnv {
    seed: u64,
    n: usize,
    pools: BTreeMap<PoolKey, Pool>,
    stats: PoolStats,
    now: u64,
}

impl CountEnv {
    pub fn new(seed: u64, n: usize) -> Self {
        Self { seed, n, pools: BTreeMap::new(), stats: PoolStats::default(), now: 0 }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn stats(&self) -> &PoolStats {
        &self.stats
    }

    /// Informs the pools of the current round (used for garbage collection).
    pub fn set_round(&mut self, round: u64) {
        self.now = round;
    }

    /// Drops pools untouched for more than `idle` rounds.
    pub fn collect_garbage(&mut self, idle: u64) {
        let now = self.now;
        self.pools.retain(|_, p| p.last_used + idle >= now);
    }

    pub fn live_pools(&self) -> usize {
        self.pools.len()
    }

    fn pool(&mut self, key: &PoolKey) -> &mut Pool {
        let now = self.now;
        let p = self.pools.get_mut(key).expect("pool registered before use");
        p.last_used = now;
        p
    }

    /// Declares node `u` an origin of the stage with weight `w` (0 for
    /// non-members) and draws its tuple.
    pub fn register(&mut self, key: PoolKey, kind: PoolKind, u: NodeId, w: u64) {
        let (seed, n, now) = (self.seed, self.n, self.now);
        let stats = &mut self.stats;
        let pool = self.pools.entry(key).or_insert_with(|| {
            stats.stages += 1;
            let s = derive_seed(seed, "pool", mix64(key.domain ^ mix64(key.start ^ mix64(key.stage as u64))));
            Pool::new(kind, s, n, key.l as usize)
        });
        pool.last_used = now;
        assert_eq!(pool.kind, kind, "pool kind mismatch for {key:?}");
        let u = u as usize;
        if w == 0 || pool.origins.contains(u) {
            return;
        }
        pool.weights[u] = w;
        pool.origins.insert(u);
        pool.total_weight += w;
        pool.cumulative.clear();
        if kind == PoolKind::Geometric {
            if pool.geo.is_empty() {
                pool.geo = vec![0; n * pool.l];
            }
            let mut max = 0;
            for i in 0..pool.l {
                let (x, cut) = geometric_max(counter_hash(pool.seed, u as u64, i as u64, 2), w);
                stats.truncations += cut as u64;
                pool.geo[u * pool.l + i] = x;
                max = max.max(x);
            }
            pool.node_max[u] = max;
        }
    }

    /// Marks a pool as in use this round.
    pub fn touch(&mut self, key: &PoolKey) {
        let now = self.now;
        if let Some(p) = self.pools.get_mut(key) {
            p.last_used = now;
        }
    }

    pub fn origin_count(&self, key: &PoolKey) -> usize {
        self.pools.get(key).map_or(0, |p| p.origins.len())
    }

    pub fn is_origin(&self, key: &PoolKey, u: NodeId) -> bool {
        self.pools.get(key).is_some_and(|p| p.origins.contains(u as usize))
    }

    /// Largest toss count in origin `u`'s geometric tuple.
    pub fn node_max(&self, key: &PoolKey, u: NodeId) -> u8 {
        self.pools.get(key).map_or(0, |p| p.node_max[u as usize])
    }

    fn coverage(&mut self, key: &PoolKey, prov: &NodeSet) -> (bool, bool) {
        let p = self.pool(key);
        let all = p.origins.is_subset(prov);
        let any = !p.origins.is_empty() && {
            let mut both = p.origins.clone();
            both.intersect_with(prov);
            !both.is_empty()
        };
        if !all {
            self.stats.incomplete += 1;
        }
        (all, any)
    }

    /// Lower median of `2^{X_i}` over the merged geometric tuple; 0 without origins.
    pub fn geo_estimate(&mut self, key: &PoolKey, prov: &NodeSet) -> f64 {
        let (_, any) = self.coverage(key, prov);
        if !any {
            return 0.0;
        }
        let p = self.pool(key);
        if let Some(&v) = p.memo.get(prov) {
            return v;
        }
        let v = super::coarse_from_tuple(&merged_geo(p, prov));
        p.memo.insert(prov.clone(), v);
        v
    }

    /// `l / Σ_i Z_i` over the merged exponential tuple; 0 without origins.
    pub fn exp_estimate(&mut self, key: &PoolKey, prov: &NodeSet) -> f64 {
        let (all, any) = self.coverage(key, prov);
        if !any {
            return 0.0;
        }
        let p = self.pool(key);
        if let Some(&v) = p.memo.get(prov) {
            return v;
        }
        let zs: Vec<f64> = (0..p.l as u32).map(|i| p.exp_min(i, prov, all)).collect();
        let v = super::fine_from_tuple(&zs);
        p.memo.insert(prov.clone(), v);
        v
    }

    /// `(number of origins, total weight)` within `prov`.
    pub fn exact_totals(&mut self, key: &PoolKey, prov: &NodeSet) -> (u64, u64) {
        self.coverage(key, prov);
        let p = self.pool(key);
        prov.iter().filter(|&u| p.origins.contains(u)).fold((0, 0), |(c, w), u| (c + 1, w + p.weights[u]))
    }

    /// Coordinate `i` of the merged geometric tuple (`None` without origins).
    pub fn geo_coord(&mut self, key: &PoolKey, i: u32, prov: &NodeSet) -> Option<u8> {
        let (_, any) = self.coverage(key, prov);
        if !any {
            return None;
        }
        let p = self.pool(key);
        prov.iter().filter(|&u| p.origins.contains(u)).map(|u| p.geo_row(u)[i as usize]).max()
    }

    /// Coordinate `i` of the merged exponential tuple (`+∞` without origins).
    pub fn exp_coord(&mut self, key: &PoolKey, i: u32, prov: &NodeSet) -> f64 {
        let (all, any) = self.coverage(key, prov);
        if !any {
            return f64::INFINITY;
        }
        self.pool(key).exp_min(i, prov, all)
    }

    /// Full geometric tuple of origin `u` (all zeros for non-origins).
    pub fn origin_geo(&mut self, key: &PoolKey, u: NodeId) -> Vec<u8> {
        let p = self.pool(key);
        if !p.origins.contains(u as usize) {
            return vec![0; p.l];
        }
        p.geo_row(u as usize).to_vec()
    }

    /// Full exponential tuple of origin `u` (all `+∞` for non-origins).
    pub fn origin_exp(&mut self, key: &PoolKey, u: NodeId) -> Vec<f64> {
        let p = self.pool(key);
        if !p.origins.contains(u as usize) {
            return vec![f64::INFINITY; p.l];
        }
        (0..p.l as u32).map(|i| p.exp_value(i, u as usize)).collect()
    }

    /// Merged tuples, for equivalence checks against explicit merging.
    pub fn merged_geo(&mut self, key: &PoolKey, prov: &NodeSet) -> Vec<u8> {
        merged_geo(self.pool(key), prov)
    }

    pub fn merged_exp(&mut self, key: &PoolKey, prov: &NodeSet) -> Vec<f64> {
        let p = self.pool(key);
        let mut inter = p.origins.clone();
        inter.intersect_with(prov);
        if inter.is_empty() {
            return vec![f64::INFINITY; p.l];
        }
        let all = p.origins.is_subset(prov);
        (0..p.l as u32).map(|i| p.exp_min(i, &inter, all)).collect()
    }
}

fn merged_geo(p: &Pool, prov: &NodeSet) -> Vec<u8> {
    let mut merged = vec![0u8; p.l];
    for u in prov.iter().filter(|&u| p.origins.contains(u)) {
        for (m, &x) in merged.iter_mut().zip(p.geo_row(u)) {
            *m = (*m).max(x);
        }
    }
    merged
}
