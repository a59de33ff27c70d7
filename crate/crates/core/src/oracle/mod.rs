//! Ground-truth solvers evaluated on graph snapshots outside the simulator.

mod cache;
mod flow;

pub use cache::OracleCache;
pub use flow::FlowNetwork;

use std::time::Instant;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DynamicGraph, NodeId};
use crate::nodeset::NodeSet;
use crate::protocol::peel_threshold;

/// Largest graph the exhaustive at-least-k oracle accepts by default.
pub const ENUMERATION_LIMIT: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("graph with {n} nodes exceeds the enumeration limit of {limit}")]
    TooLargeForEnumeration { n: usize, limit: usize },
    #[error("k = {k} exceeds the node count {n}")]
    KTooLarge { k: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Maxflow,
    Enumeration,
    PeelingReference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub members: NodeSet,
    pub density: Ratio<u64>,
    pub method: OracleMethod,
    pub runtime_secs: f64,
}

fn density_of(g: &DynamicGraph, s: &NodeSet) -> Ratio<u64> {
    g.induced_density(s).map(|d| d.density).unwrap_or_else(|_| Ratio::zero())
}

/// Min-degree peeling: removal order, core numbers and the densest suffix.
struct PeelOrder {
    core: Vec<u32>,
    best: NodeSet,
    best_density: Ratio<u64>,
}

fn min_degree_peel(g: &DynamicGraph) -> PeelOrder {
    let n = g.node_count();
    let mut deg: Vec<usize> = (0..n).map(|v| g.degree(v as NodeId)).collect();
    let max_deg = deg.iter().copied().max().unwrap_or(0);
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); max_deg + 1];
    for (v, &d) in deg.iter().enumerate() {
        buckets[d].push(v as u32);
    }
    let mut removed = vec![false; n];
    let mut core = vec![0u32; n];
    let mut order = Vec::with_capacity(n);
    let mut edges = g.edge_count() as u64;
    let mut best_density = Ratio::new(edges, n as u64);
    let mut best_cut = 0;
    let mut k = 0usize;
    let mut cursor = 0usize;
    while order.len() < n {
        cursor = cursor.min(max_deg);
        while buckets[cursor].is_empty() {
            cursor += 1;
        }
        let v = buckets[cursor].pop().expect("bucket non-empty") as usize;
        if removed[v] || deg[v] != cursor {
            continue;
        }
        k = k.max(cursor);
        core[v] = k as u32;
        removed[v] = true;
        order.push(v);
        edges -= deg[v] as u64;
        for &w in g.neighbors(v as NodeId) {
            let w = w as usize;
            if !removed[w] {
                deg[w] -= 1;
                buckets[deg[w]].push(w as u32);
                cursor = cursor.min(deg[w]);
            }
        }
        let left = (n - order.len()) as u64;
        if left > 0 {
            let d = Ratio::new(edges, left);
            if d > best_density {
                best_density = d;
                best_cut = order.len();
            }
        }
    }
    let best = NodeSet::from_ids(n, order[best_cut..].iter().copied());
    PeelOrder { core, best, best_density }
}

/// Smallest-denominator rational in the closed interval `[lo, hi]`.
fn simplest_between(lo: Ratio<i128>, hi: Ratio<i128>) -> Ratio<i128> {
    let fl = lo.floor();
    if lo == fl {
        return lo;
    }
    if fl + Ratio::from_integer(1) <= hi {
        return fl + Ratio::from_integer(1);
    }
    let inner = simplest_between((hi - fl).recip(), (lo - fl).recip());
    fl + inner.recip()
}

struct Subgraph {
    ids: Vec<usize>,
    edges: Vec<(usize, usize)>,
    degree: Vec<i64>,
}

/// Source side of the Goldberg cut for guess `a/b`: a non-empty set with
/// density strictly above the guess, if one exists. With `maximal`, instead
/// returns the largest maximizer of `b|E(S)| - a|S|`.
fn goldberg_cut(h: &Subgraph, guess: Ratio<i128>, maximal: bool) -> Vec<bool> {
    let n = h.ids.len();
    let (a, b) = (*guess.numer() as i64, *guess.denom() as i64);
    let dmax = h.degree.iter().copied().max().unwrap_or(0);
    let big = b * dmax.max(1);
    let (s, t) = (n, n + 1);
    let mut net = FlowNetwork::new(n + 2);
    for v in 0..n {
        net.add_edge(s, v, big, 0);
        net.add_edge(v, t, big + 2 * a - b * h.degree[v], 0);
    }
    for &(u, v) in &h.edges {
        net.add_edge(u, v, b, b);
    }
    net.max_flow(s, t);
    if maximal {
        let sink = net.sink_side(t);
        (0..n).map(|v| !sink[v]).collect()
    } else {
        let src = net.source_side(s);
        src[..n].to_vec()
    }
}

/// Exact maximum-density subgraph by binary search over density guesses with
/// a min-cut test per guess. Reports the maximal optimal set (the union of
/// all densest subgraphs).
pub fn exact_densest(g: &DynamicGraph) -> OracleResult {
    let start = Instant::now();
    let n = g.node_count();
    if g.edge_count() == 0 {
        return OracleResult {
            members: g.all_nodes(),
            density: Ratio::zero(),
            method: OracleMethod::Maxflow,
            runtime_secs: start.elapsed().as_secs_f64(),
        };
    }
    let peel = min_degree_peel(g);
    let to_i = |r: Ratio<u64>| Ratio::new(*r.numer() as i128, *r.denom() as i128);
    let mut lo = to_i(peel.best_density);
    let mut best = peel.best.clone();

    // Every densest subgraph has minimum degree ≥ ρ*, so it lives inside the
    // ⌈lo⌉-core.
    let floor_core = lo.ceil().to_integer() as u32;
    let ids: Vec<usize> = (0..n).filter(|&v| peel.core[v] >= floor_core).collect();
    let mut local = vec![usize::MAX; n];
    for (i, &v) in ids.iter().enumerate() {
        local[v] = i;
    }
    let mut edges = Vec::new();
    let mut degree = vec![0i64; ids.len()];
    for (i, &u) in ids.iter().enumerate() {
        for &w in g.neighbors(u as NodeId) {
            let j = local[w as usize];
            if j != usize::MAX {
                degree[i] += 1;
                if i < j {
                    edges.push((i, j));
                }
            }
        }
    }
    let h = Subgraph { ids, edges, degree };
    let kmax = peel.core.iter().copied().max().unwrap_or(0) as i128;
    let nn = n.max(2) as i128;
    let mut hi = Ratio::from_integer(kmax).min(Ratio::new(nn - 1, 2)).max(lo);
    let gap = Ratio::new(1, nn * (nn - 1));

    while hi - lo >= gap {
        let w = hi - lo;
        let quarter = w / Ratio::from_integer(4);
        let guess = simplest_between(lo + quarter, hi - quarter);
        let side = goldberg_cut(&h, guess, false);
        let found = NodeSet::from_ids(n, (0..h.ids.len()).filter(|&i| side[i]).map(|i| h.ids[i]));
        if found.is_empty() {
            hi = guess;
        } else {
            let d = to_i(density_of(g, &found));
            debug_assert!(d > guess);
            if d > lo {
                lo = d;
                best = found;
            }
        }
    }
    // `lo` is optimal; recover the maximal optimum at exactly that density.
    if !h.ids.is_empty() {
        let side = goldberg_cut(&h, lo, true);
        let maximal = NodeSet::from_ids(n, (0..h.ids.len()).filter(|&i| side[i]).map(|i| h.ids[i]));
        if !maximal.is_empty() && to_i(density_of(g, &maximal)) == lo {
            best = maximal;
        }
    }
    OracleResult {
        density: density_of(g, &best),
        members: best,
        method: OracleMethod::Maxflow,
        runtime_secs: start.elapsed().as_secs_f64(),
    }
}

/// Lexicographic order on sorted member lists.
fn lex_less(a: u32, b: u32) -> bool {
    let diff = a ^ b;
    if diff == 0 {
        return false;
    }
    let low = diff.trailing_zeros();
    // The set holding the lowest differing id comes first, unless the other
    // set has run out of elements by then (prefix rule).
    let a_has = a >> low & 1 == 1;
    let above = !((1u32 << low) | ((1u32 << low) - 1));
    if a_has {
        // b lacks `low`; b is smaller only if it has no elements past it.
        b & above != 0 || b & ((1u32 << low) - 1) != a & ((1u32 << low) - 1)
    } else {
        a & above == 0
    }
}

/// Exhaustive optimum over all subsets of size ≥ k (k = 0 behaves as k = 1).
/// Ties resolve to the lexicographically smallest member list.
pub fn exact_at_least_k_with_limit(g: &DynamicGraph, k: usize, limit: usize) -> Result<OracleResult, OracleError> {
    let start = Instant::now();
    let n = g.node_count();
    if n > limit.min(30) {
        return Err(OracleError::TooLargeForEnumeration { n, limit });
    }
    if k > n {
        return Err(OracleError::KTooLarge { k, n });
    }
    let k = k.max(1);
    let adj: Vec<u32> = (0..n).map(|v| g.neighbors(v as NodeId).iter().fold(0u32, |m, &w| m | 1 << w)).collect();
    let total = 1usize << n;
    let mut edges = vec![0u16; total];
    let mut best_mask = 0u32;
    let (mut best_e, mut best_s) = (0u64, 1u64);
    for mask in 1..total {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        edges[mask] = edges[rest] + (adj[low] & rest as u32).count_ones() as u16;
        let size = mask.count_ones() as u64;
        if (size as usize) < k {
            continue;
        }
        let e = edges[mask] as u64;
        let lhs = e * best_s;
        let rhs = best_e * size;
        let mask = mask as u32;
        if best_mask == 0 || lhs > rhs || (lhs == rhs && lex_less(mask, best_mask)) {
            best_mask = mask;
            best_e = e;
            best_s = size;
        }
    }
    let members = NodeSet::from_ids(n, (0..n).filter(|i| best_mask >> i & 1 == 1));
    Ok(OracleResult {
        members,
        density: Ratio::new(best_e, best_s),
        method: OracleMethod::Enumeration,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn exact_at_least_k(g: &DynamicGraph, k: usize) -> Result<OracleResult, OracleError> {
    exact_at_least_k_with_limit(g, k, ENUMERATION_LIMIT)
}

/// Bracket for the at-least-k optimum on graphs too large to enumerate.
#[derive(Debug, Clone, PartialEq)]
pub struct AtLeastKBound {
    pub lower: Ratio<u64>,
    pub upper: Ratio<u64>,
    pub exact: bool,
    pub method: OracleMethod,
}

/// Exact by enumeration when small; exact via max-flow when the maximal
/// densest set already has ≥ k nodes; otherwise a `[peeling, ρ*]` bracket.
pub fn at_least_k_bound(g: &DynamicGraph, k: usize) -> Result<AtLeastKBound, OracleError> {
    if g.node_count() <= ENUMERATION_LIMIT {
        let r = exact_at_least_k(g, k)?;
        return Ok(AtLeastKBound { lower: r.density, upper: r.density, exact: true, method: r.method });
    }
    if k > g.node_count() {
        return Err(OracleError::KTooLarge { k, n: g.node_count() });
    }
    let d = exact_densest(g);
    if d.members.len() >= k {
        return Ok(AtLeastKBound { lower: d.density, upper: d.density, exact: true, method: d.method });
    }
    let lower = densest_suffix_of_size(g, k);
    Ok(AtLeastKBound { lower, upper: d.density, exact: false, method: OracleMethod::PeelingReference })
}

/// Best density over min-degree peeling suffixes with at least `k` nodes.
fn densest_suffix_of_size(g: &DynamicGraph, k: usize) -> Ratio<u64> {
    let n = g.node_count();
    let mut deg: Vec<usize> = (0..n).map(|v| g.degree(v as NodeId)).collect();
    let mut alive = vec![true; n];
    let mut edges = g.edge_count() as u64;
    let mut best = Ratio::new(edges, n as u64);
    for left in (k..n).rev() {
        let v = (0..n).filter(|&v| alive[v]).min_by_key(|&v| deg[v]).expect("alive node");
        alive[v] = false;
        edges -= deg[v] as u64;
        for &w in g.neighbors(v as NodeId) {
            if alive[w as usize] {
                deg[w as usize] -= 1;
            }
        }
        best = best.max(Ratio::new(edges, left as u64));
    }
    best
}

/// One level of the centralized peeling replay.
#[derive(Debug, Clone, PartialEq)]
pub struct PeelLevel {
    pub members: NodeSet,
    pub edges: u64,
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeelTrace {
    pub levels: Vec<PeelLevel>,
    pub best: OracleResult,
}

/// Centralized replay of the level recursion with exact counts:
/// `V_{j+1} = { v ∈ V_j : deg_{V_j}(v) ≥ factor · m_j / n_j }`, stopping on
/// an empty set, a fixed point or `max_levels` levels. The predicate is
/// evaluated exactly as the distributed protocol evaluates it.
pub fn peel_reference(g: &DynamicGraph, factor: f64, max_levels: usize) -> PeelTrace {
    let start = Instant::now();
    let n = g.node_count();
    let mut levels: Vec<PeelLevel> = Vec::new();
    let mut current = g.all_nodes();
    while levels.len() < max_levels.max(1) {
        let nodes = current.len() as u64;
        if nodes == 0 {
            break;
        }
        if let Some(prev) = levels.last() {
            if prev.members == current {
                break;
            }
        }
        let edges = g.induced_edge_count(&current);
        let thr = peel_threshold(edges as f64, nodes as f64, factor);
        let next =
            NodeSet::from_ids(n, current.iter().filter(|&v| g.induced_degree(v as NodeId, &current) as f64 >= thr));
        levels.push(PeelLevel { members: current, edges, nodes });
        current = next;
    }
    let mut best_idx = 0;
    for (i, l) in levels.iter().enumerate() {
        let b = &levels[best_idx];
        if Ratio::new(l.edges, l.nodes) > Ratio::new(b.edges, b.nodes) {
            best_idx = i;
        }
    }
    let b = &levels[best_idx];
    let best = OracleResult {
        members: b.members.clone(),
        density: Ratio::new(b.edges, b.nodes),
        method: OracleMethod::PeelingReference,
        runtime_secs: start.elapsed().as_secs_f64(),
    };
    PeelTrace { levels, best }
}

/// Convenience for reports.
pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
