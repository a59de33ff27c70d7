//! Seeded random graph families used by scenarios and tests.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use super::{DynamicGraph, NodeId};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum GeneratorError {
    #[error("invalid generator parameters: {0}")]
    Params(String),
    #[error("no simple {d}-regular graph on {n} nodes found after {attempts} attempts")]
    RegularFailed { n: usize, d: usize, attempts: usize },
}

fn check_prob(p: f64) -> Result<(), GeneratorError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GeneratorError::Params(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

fn build(n: usize, edges: Vec<(NodeId, NodeId)>) -> DynamicGraph {
    DynamicGraph::from_edges(n, edges, 0).expect("generator produced a valid edge list")
}

/// Erdős–Rényi `G(n, p)`.
pub fn gnp(n: usize, p: f64, seed: u64) -> Result<DynamicGraph, GeneratorError> {
    check_prob(p)?;
    if n == 0 {
        return Err(GeneratorError::Params("n must be positive".into()));
    }
    let mut rng = rng::stream(seed, "gnp", n as u64);
    let mut edges = Vec::new();
    for u in 0..n as NodeId {
        for v in u + 1..n as NodeId {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Ok(build(n, edges))
}

/// `G(n, p_noise)` with a clique on nodes `0..q` laid over it.
pub fn planted_clique(n: usize, q: usize, p_noise: f64, seed: u64) -> Result<DynamicGraph, GeneratorError> {
    if q > n {
        return Err(GeneratorError::Params(format!("clique size {q} exceeds n = {n}")));
    }
    let base = gnp(n, p_noise, seed)?;
    let mut edges: Vec<_> = base.edges().collect();
    for u in 0..q as NodeId {
        for v in u + 1..q as NodeId {
            edges.push((u, v));
        }
    }
    Ok(build(n, edges))
}

/// A clique on `0..q` plus `satellites` extra nodes, each adjacent to
/// `attach` distinct random clique nodes. With `attach > q / 2` any two
/// satellites share a clique neighbor, so the hop diameter is at most 2.
pub fn clique_plus_satellites(
    q: usize,
    satellites: usize,
    attach: usize,
    seed: u64,
) -> Result<DynamicGraph, GeneratorError> {
    if q == 0 || attach > q {
        return Err(GeneratorError::Params(format!("need 0 < attach ({attach}) <= q ({q})")));
    }
    let mut rng = rng::stream(seed, "satellites", q as u64);
    let mut edges = Vec::with_capacity(q * (q - 1) / 2 + satellites * attach);
    for u in 0..q as NodeId {
        for v in u + 1..q as NodeId {
            edges.push((u, v));
        }
    }
    let core: Vec<NodeId> = (0..q as NodeId).collect();
    for s in 0..satellites {
        let id = (q + s) as NodeId;
        for &c in core.choose_multiple(&mut rng, attach) {
            edges.push((c, id));
        }
    }
    Ok(build(q + satellites, edges))
}

/// Uniform-ish simple `d`-regular graph via the pairing model with restarts.
pub fn random_regular(n: usize, d: usize, seed: u64) -> Result<DynamicGraph, GeneratorError> {
    if d >= n || (n * d) % 2 == 1 {
        return Err(GeneratorError::Params(format!("no {d}-regular graph on {n} nodes")));
    }
    let mut rng = rng::stream(seed, "regular", (n * 1000 + d) as u64);
    const ATTEMPTS: usize = 2000;
    'attempt: for _ in 0..ATTEMPTS {
        let mut stubs: Vec<NodeId> = (0..n as NodeId).flat_map(|v| std::iter::repeat_n(v, d)).collect();
        stubs.shuffle(&mut rng);
        let mut edges = Vec::with_capacity(n * d / 2);
        for pair in stubs.chunks(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v || edges.contains(&(u.min(v), u.max(v))) {
                continue 'attempt;
            }
            edges.push((u.min(v), u.max(v)));
        }
        return Ok(build(n, edges));
    }
    Err(GeneratorError::RegularFailed { n, d, attempts: ATTEMPTS })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gnp_is_reproducible() {
        let a = gnp(30, 0.2, 9).unwrap();
        let b = gnp(30, 0.2, 9).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), gnp(30, 0.2, 10).unwrap().content_hash());
    }

    #[test]
    fn planted_clique_contains_clique() {
        let g = planted_clique(40, 10, 0.05, 3).unwrap();
        for u in 0..10 {
            for v in u + 1..10 {
                assert!(g.has_edge(u, v));
            }
        }
    }

    #[test]
    fn satellites_attach_exactly() {
        let g = clique_plus_satellites(12, 5, 7, 1).unwrap();
        assert_eq!(g.node_count(), 17);
        for s in 12..17 {
            assert_eq!(g.degree(s), 7);
        }
        assert_eq!(g.edge_count(), 66 + 35);
    }

    #[test]
    fn regular_degrees() {
        let g = random_regular(20, 3, 4).unwrap();
        assert!((0..20).all(|v| g.degree(v) == 3));
        assert!(random_regular(5, 3, 1).is_err());
    }
}
