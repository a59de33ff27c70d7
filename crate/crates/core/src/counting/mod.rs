//! Distributed cardinality estimators: a (2, δ) node count from geometric
//! maxima, a (1 ± ε) node count from exponential minima, and a (1 ± ε) edge
//! count in which each node simulates one origin per incident member edge.

mod counter;
mod pool;
mod runner;
mod trace;

pub use counter::{CountMsg, Counter, CounterStep, Plan};
pub use pool::{CountEnv, PoolKey, PoolKind, PoolStats};
pub use runner::{
    count_edges, count_nodes, count_nodes_coarse, count_nodes_fine, run_count, CountNode, CountOutcome, CountWire,
    STANDALONE_DOMAIN,
};
pub use trace::{write_trace_csv, TraceRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CountingError {
    #[error("epsilon must lie in (0, 1], got {0}")]
    Epsilon(f64),
    #[error("failure probability must lie in (0, 1), got {0}")]
    DeltaFail(f64),
    #[error("constant c must be positive, got {0}")]
    Constant(f64),
    #[error("diameter bound must be at least 1")]
    Diameter,
    #[error("tuples must have at least one coordinate")]
    EmptyTuple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountKind {
    Nodes,
    Edges,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Randomized estimators.
    Estimate,
    /// Flood-and-aggregate exact counting of `(id, weight)` pairs.
    Exact,
}

/// Parameters shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    /// Target relative error of the fine stage.
    pub epsilon: f64,
    /// Failure probability of the coarse stage.
    pub delta_fail: f64,
    /// Constant in the fine-stage tuple length.
    pub c: f64,
    /// Rounds per flooding stage (the dynamic diameter or an upper bound).
    pub d: u32,
}

impl EstimatorParams {
    pub fn new(epsilon: f64, delta_fail: f64, c: f64, d: u32) -> Result<Self, CountingError> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(CountingError::Epsilon(epsilon));
        }
        if !(delta_fail > 0.0 && delta_fail < 1.0) {
            return Err(CountingError::DeltaFail(delta_fail));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(CountingError::Constant(c));
        }
        if d == 0 {
            return Err(CountingError::Diameter);
        }
        Ok(Self { epsilon, delta_fail, c, d })
    }

    /// `⌈65 ln(1/δ)⌉`, at least 1.
    pub fn l_geo(&self) -> usize {
        ((65.0 * (1.0 / self.delta_fail).ln()).ceil() as usize).max(1)
    }

    /// `⌈27(2 + 2c) ln N / ε²⌉`, at least 1.
    pub fn l_exp(&self, n_bound: f64) -> usize {
        let raw = 27.0 * (2.0 + 2.0 * self.c) * n_bound.max(1.0).ln() / (self.epsilon * self.epsilon);
        (raw.ceil() as usize).max(1)
    }
}

/// How a counting task is executed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountConfig {
    pub mode: CountMode,
    /// Serialize one tuple coordinate per flooding window.
    pub strict: bool,
    pub params: EstimatorParams,
}

impl CountConfig {
    pub fn estimate(params: EstimatorParams) -> Self {
        Self { mode: CountMode::Estimate, strict: false, params }
    }

    pub fn exact(params: EstimatorParams) -> Self {
        Self { mode: CountMode::Exact, strict: false, params }
    }
}

/// Tuple of exponential draws, merged by componentwise minimum. The all-∞
/// tuple is the merge identity (a non-member's contribution).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpTuple {
    pub values: Vec<f64>,
}

impl ExpTuple {
    pub fn new(values: Vec<f64>) -> Result<Self, CountingError> {
        if values.is_empty() {
            return Err(CountingError::EmptyTuple);
        }
        Ok(Self { values })
    }

    pub fn identity(l: usize) -> Self {
        Self { values: vec![f64::INFINITY; l.max(1)] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn merge(&mut self, other: &ExpTuple) {
        assert_eq!(self.len(), other.len(), "tuple lengths differ");
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a = a.min(b);
        }
    }

    pub fn estimate(&self) -> f64 {
        fine_from_tuple(&self.values)
    }
}

/// Tuple of geometric toss counts, merged by componentwise maximum. Zero
/// entries mark "no toss seen" and are the merge identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeoTuple {
    pub values: Vec<u8>,
}

impl GeoTuple {
    pub fn new(values: Vec<u8>) -> Result<Self, CountingError> {
        if values.is_empty() {
            return Err(CountingError::EmptyTuple);
        }
        Ok(Self { values })
    }

    pub fn identity(l: usize) -> Self {
        Self { values: vec![0; l.max(1)] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn merge(&mut self, other: &GeoTuple) {
        assert_eq!(self.len(), other.len(), "tuple lengths differ");
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a = (*a).max(b);
        }
    }

    pub fn estimate(&self) -> f64 {
        coarse_from_tuple(&self.values)
    }
}

/// Coarse output from a merged geometric tuple: the lower median of
/// `2^{X_i}`, or 0 for the empty tuple.
pub fn coarse_from_tuple(xs: &[u8]) -> f64 {
    if xs.is_empty() || xs.iter().all(|&x| x == 0) {
        return 0.0;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_unstable();
    2f64.powi(sorted[(sorted.len() - 1) / 2] as i32)
}

/// Fine output from a merged exponential tuple: `l / Σ Z_i`, or 0 for the
/// all-∞ tuple.
pub fn fine_from_tuple(zs: &[f64]) -> f64 {
    let sum: f64 = zs.iter().sum();
    if zs.is_empty() || sum.is_infinite() {
        return 0.0;
    }
    zs.len() as f64 / sum
}

/// Bits needed for a node identifier among `n` nodes.
pub fn id_bits(n: usize) -> u32 {
    (usize::BITS - (n.max(2) - 1).leading_zeros()).max(1)
}
