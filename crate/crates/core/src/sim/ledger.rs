//! Per-edge, per-round bandwidth accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::NodeId;

/// Aggregate usage of one accounting tag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagStats {
    /// Largest component size sent across a single edge in one round.
    pub max_bits: u64,
    /// `(round, sender)` of the first message attaining `max_bits`.
    pub max_at: Option<(u64, NodeId)>,
    /// Sum of bits over all edge deliveries.
    pub total_bits: u64,
    pub deliveries: u64,
    /// Per-round maxima `(round, sender, bits)`, one entry per round in which
    /// the tag crossed an edge.
    pub per_round_max: Vec<(u64, NodeId, u64)>,
}

/// One directed delivery, recorded only in detailed mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub round: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub bits: u64,
}

#[derive(Debug, Clone, Default)]
pub struct BandwidthLedger {
    tags: BTreeMap<&'static str, TagStats>,
    global_max_bits: u64,
    total_bits: u64,
    total_deliveries: u64,
    rounds: u64,
    detail: Option<Vec<EdgeEntry>>,
}

impl BandwidthLedger {
    /// Also keep every individual delivery (memory heavy; for tests).
    pub fn enable_detail(&mut self) {
        self.detail.get_or_insert_with(Vec::new);
    }

    pub(crate) fn begin_round(&mut self, _round: u64) {
        self.rounds += 1;
    }

    pub(crate) fn record(&mut self, round: u64, from: NodeId, receivers: &[NodeId], parts: &[(&'static str, u64)]) {
        if receivers.is_empty() {
            return;
        }
        let fanout = receivers.len() as u64;
        let bits: u64 = parts.iter().map(|p| p.1).sum();
        self.global_max_bits = self.global_max_bits.max(bits);
        self.total_bits += bits * fanout;
        self.total_deliveries += fanout;
        for &(tag, b) in parts {
            let s = self.tags.entry(tag).or_default();
            if b > s.max_bits || s.max_at.is_none() {
                s.max_at = Some((round, from));
                s.max_bits = b;
            }
            s.total_bits += b * fanout;
            s.deliveries += fanout;
            match s.per_round_max.last_mut() {
                Some(last) if last.0 == round => {
                    if b > last.2 {
                        *last = (round, from, b);
                    }
                }
                _ => s.per_round_max.push((round, from, b)),
            }
        }
        if let Some(detail) = &mut self.detail {
            detail.extend(receivers.iter().map(|&to| EdgeEntry { round, from, to, bits }));
        }
    }

    pub fn tags(&self) -> &BTreeMap<&'static str, TagStats> {
        &self.tags
    }

    pub fn global_max_bits(&self) -> u64 {
        self.global_max_bits
    }

    pub fn total_bits(&self) -> u64 {
        self.total_bits
    }

    pub fn total_deliveries(&self) -> u64 {
        self.total_deliveries
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn detail(&self) -> Option<&[EdgeEntry]> {
        self.detail.as_deref()
    }

    /// Maximum bits per undirected `(round, u, v)` with `u < v` (detailed mode).
    pub fn edge_round_max(&self) -> Option<BTreeMap<(u64, NodeId, NodeId), u64>> {
        let detail = self.detail.as_ref()?;
        let mut out = BTreeMap::new();
        for e in detail {
            let key = (e.round, e.from.min(e.to), e.from.max(e.to));
            let slot = out.entry(key).or_insert(0);
            *slot = e.bits.max(*slot);
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagRow {
    pub tag: String,
    pub max_bits: u64,
    pub bound: Option<u64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub tag: String,
    pub round: u64,
    pub node: NodeId,
    pub bits: u64,
    pub bound: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub global_max_bits: u64,
    pub rows: Vec<TagRow>,
    pub violations: Vec<Violation>,
    pub pass: bool,
}

/// Checks every tag against its bound. Tags without a bound are listed but
/// always pass; every round that exceeded a bound is reported.
pub fn assert_bandwidth(ledger: &BandwidthLedger, bounds: &BTreeMap<String, u64>) -> BandwidthReport {
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (tag, stats) in ledger.tags() {
        let bound = bounds.get(*tag).copied();
        if let Some(b) = bound {
            violations.extend(stats.per_round_max.iter().filter(|e| e.2 > b).map(|&(round, node, bits)| Violation {
                tag: tag.to_string(),
                round,
                node,
                bits,
                bound: b,
            }));
        }
        rows.push(TagRow {
            tag: tag.to_string(),
            max_bits: stats.max_bits,
            bound,
            pass: bound.is_none_or(|b| stats.max_bits <= b),
        });
    }
    BandwidthReport { global_max_bits: ledger.global_max_bits(), pass: rows.iter().all(|r| r.pass), rows, violations }
}
