//! Continuous maintenance of the nested candidate family (one level every
//! `4D + 1` rounds) and query-time extraction with optional padding to at
//! least `k` nodes.

mod node;
mod query;

pub use node::{
    CloseReason, Family, LevelRecord, LocalAnswer, NodeEvent, NodeState, PaddingInfo, ProtoEnv, ProtoMsg, QueryOutcome,
    QueryRequest,
};
pub use query::{acceptance_window, coin_probability, padding_deficit, select_level, AcceptanceWindow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counting::{CountConfig, CountMode, CountingError, EstimatorParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("epsilon must lie in (0, 1], got {0}")]
    Epsilon(f64),
    #[error("p_cap = {p_cap} is below the required {min}")]
    PCapTooSmall { p_cap: usize, min: usize },
    #[error("threshold factor must be positive, got {0}")]
    ThresholdFactor(f64),
    #[error(transparent)]
    Counting(#[from] CountingError),
    #[error("no complete family has been computed yet")]
    NoCompleteFamily,
    #[error("unknown query snapshot {0}")]
    UnknownSnapshot(u64),
    #[error("level records diverged in round {round} (pass {pass}, level {level})")]
    DesyncDetected { round: u64, pass: u64, level: usize },
}

/// Peeling threshold `factor · (m / n)` in binary64, where `factor` already
/// includes `(1 + δ)`. The protocol and the centralized reference both call
/// this, so they compare degrees against identical bits.
pub fn peel_threshold(m: f64, n: f64, factor: f64) -> f64 {
    factor * (m / n)
}

/// Rounds per level: `2D` node count, `2D` edge count, one threshold round.
pub fn level_round_cost(d: u32) -> u64 {
    4 * d as u64 + 1
}

/// Smallest admissible family depth `⌈log_{1+δ} n⌉ + 1`.
pub fn min_p_cap(n: usize, delta: f64) -> usize {
    ((n.max(1) as f64).ln() / delta.ln_1p()).ceil() as usize + 1
}

/// Padding attempt cap `⌈8 ln n⌉`.
pub fn padding_cap(n: usize) -> u32 {
    ((8.0 * (n.max(2) as f64).ln()).ceil() as u32).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub epsilon: f64,
    /// Always `epsilon / 24`.
    pub delta: f64,
    /// Default `k` for queries that do not specify one (0 = unconstrained).
    pub k: usize,
    /// Dynamic diameter, or an upper bound, known to every node.
    pub d: u32,
    pub p_cap: usize,
    /// Multiplier `φ` on the `(1 + δ)·m/n` threshold (1 = as published).
    pub threshold_factor: f64,
    pub padding_cap: u32,
    pub counting: CountConfig,
}

impl ProtocolParams {
    /// Parameters for a network of `n` nodes with diameter bound `d`,
    /// randomized counting at error `δ`, `p_cap` and the padding cap at their
    /// minimum values.
    pub fn new(epsilon: f64, d: u32, n: usize) -> Result<Self, ProtocolError> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(ProtocolError::Epsilon(epsilon));
        }
        let delta = epsilon / 24.0;
        let est = EstimatorParams::new(delta, delta, 1.0, d)?;
        Ok(Self {
            epsilon,
            delta,
            k: 0,
            d,
            p_cap: min_p_cap(n, delta),
            threshold_factor: 1.0,
            padding_cap: padding_cap(n),
            counting: CountConfig::estimate(est),
        })
    }

    pub fn with_exact_counting(mut self, exact: bool) -> Self {
        self.counting.mode = if exact { CountMode::Exact } else { CountMode::Estimate };
        self
    }

    pub fn with_strict_congest(mut self, strict: bool) -> Self {
        self.counting.strict = strict;
        self
    }

    pub fn with_threshold_factor(mut self, factor: f64) -> Result<Self, ProtocolError> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(ProtocolError::ThresholdFactor(factor));
        }
        self.threshold_factor = factor;
        Ok(self)
    }

    /// Overrides the relative error of the fine counting stage (default δ).
    pub fn with_estimator_epsilon(mut self, e: f64) -> Result<Self, ProtocolError> {
        self.counting.params =
            EstimatorParams::new(e, self.counting.params.delta_fail, self.counting.params.c, self.d)?;
        Ok(self)
    }

    pub fn with_p_cap(mut self, p_cap: usize, n: usize) -> Result<Self, ProtocolError> {
        let min = min_p_cap(n, self.delta);
        if p_cap < min {
            return Err(ProtocolError::PCapTooSmall { p_cap, min });
        }
        self.p_cap = p_cap;
        Ok(self)
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    /// `φ · (1 + δ)`, the factor passed to [`peel_threshold`].
    pub fn peel_factor(&self) -> f64 {
        self.threshold_factor * (1.0 + self.delta)
    }

    pub fn level_round_cost(&self) -> u64 {
        level_round_cost(self.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_costs() {
        assert_eq!(level_round_cost(3), 13);
        assert_eq!(level_round_cost(1), 5);
    }

    #[test]
    fn params_invariants() {
        let p = ProtocolParams::new(0.48, 2, 100).unwrap();
        assert_eq!(p.delta, 0.48 / 24.0);
        assert!(p.p_cap > ((100f64).ln() / (1.0 + p.delta).ln()).ceil() as usize);
        assert_eq!(p.padding_cap, (8.0 * 100f64.ln()).ceil() as u32);
        assert_eq!(p.counting.params.epsilon, p.delta);
        assert!(matches!(p.with_p_cap(3, 100), Err(ProtocolError::PCapTooSmall { .. })));
        assert!(ProtocolParams::new(1.5, 1, 10).is_err());
        assert_eq!(p.peel_factor(), 1.0 + p.delta);
        assert_eq!(p.with_threshold_factor(2.0).unwrap().peel_factor(), 2.0 * (1.0 + p.delta));
    }

    #[test]
    fn threshold_examples() {
        // Triangle plus pendant: 4 edges on 4 nodes, δ = 0.01.
        assert_eq!(peel_threshold(4.0, 4.0, 1.01), 1.01);
        // Star K_{1,5}.
        assert!((peel_threshold(5.0, 6.0, 1.01) - 0.841_666).abs() < 1e-6);
    }
}
