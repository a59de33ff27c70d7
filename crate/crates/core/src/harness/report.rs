//! Run reports, round-budget checks and report files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::HarnessError;
use crate::counting::PoolStats;
use crate::protocol::{CloseReason, ProtocolParams};

/// One served family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass: u64,
    pub levels: usize,
    pub started_at: u64,
    pub closed_at: u64,
    pub length: u64,
    pub reason: CloseReason,
}

/// One recorded level, with the true values of the flagged set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTiming {
    pub pass: u64,
    pub level: usize,
    pub computed_at: u64,
    pub edges_started_at: u64,
    pub completed_at: u64,
    pub n_estimate: f64,
    pub m_estimate: f64,
    pub n_true: u64,
    pub m_true: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    Answered,
    NoCompleteFamily,
    Unanswered,
}

/// One query, scored against the oracle on the snapshot `G_t` of the answer
/// round `t`. Rationals are written as `"a/b"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: u64,
    pub k: usize,
    pub issued_at: u64,
    pub status: QueryStatus,
    /// Answer round `t`.
    pub answered_at: Option<u64>,
    pub level: Option<usize>,
    pub pass: Option<u64>,
    /// Round `t'` in which the chosen level's membership took effect.
    pub t_prime: Option<u64>,
    /// Round `t''` in which the chosen level's edge count started.
    pub t_second: Option<u64>,
    /// `T = t − t'`, used in the precondition.
    pub t_span: Option<u64>,
    /// Length of the pass that produced the chosen level.
    pub pass_length: Option<u64>,
    pub answer_size: usize,
    pub answer_hash: String,
    pub answer_edges: u64,
    pub answer_density: String,
    pub answer_density_f64: f64,
    pub oracle_density: String,
    pub oracle_density_f64: f64,
    pub oracle_method: String,
    /// False when only a bracket of the at-least-k optimum is known; the
    /// upper end is then reported and used.
    pub oracle_exact: bool,
    /// Oracle density over answer density (`None` for an empty answer).
    pub ratio: Option<String>,
    pub ratio_f64: Option<f64>,
    /// `2 + ε` for `k = 0`, `3 + ε` otherwise.
    pub bound: f64,
    /// `ρ*` (or `k · ρ*_k`) against `24 T r / ε`.
    pub precondition_lhs: f64,
    pub precondition_rhs: f64,
    pub conditioned: bool,
    pub padded: bool,
    pub padding_attempts: u32,
    pub padding_accepted: Option<bool>,
    pub size_bound: Option<f64>,
    pub size_bound_ok: Option<bool>,
    /// Pool materializations that missed an origin so far in the run.
    pub incomplete_floods: u64,
    /// `Some` only for conditioned, answered queries.
    pub guarantee_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSummary {
    pub tag: String,
    pub max_bits: u64,
    /// First round in which the maximum was reached.
    pub max_round: u64,
    pub total_bits: u64,
    pub deliveries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSummary {
    pub global_max_bits: u64,
    pub total_bits: u64,
    pub tags: Vec<TagSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundBudget {
    pub level_round_cost: u64,
    pub budget: u64,
    pub max_pass_length: u64,
    /// Whether `pass length = levels · (4D+1)` could be asserted (not in
    /// strict mode, where chunked counting stretches levels).
    pub exact_identity_checked: bool,
    pub padding_cap: u32,
    pub max_padding_attempts: u32,
    pub violations: Vec<String>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    pub round_budget: RoundBudget,
    pub all_queries_answered: bool,
    pub conditioned_queries: usize,
    pub failed_guarantees: usize,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub n: usize,
    pub initial_edges: usize,
    pub params: ProtocolParams,
    pub rounds: u64,
    pub measured_flood_time: Option<u32>,
    pub passes: Vec<PassRecord>,
    pub levels: Vec<LevelTiming>,
    pub queries: Vec<QueryRecord>,
    pub bandwidth: BandwidthSummary,
    pub pool: PoolStats,
    pub event_log_digest: Option<String>,
    pub event_log_lines: u64,
    pub checks: Checks,
    pub passed: bool,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// Conditioned, answered queries and how many met their bound.
    pub fn guarantee_tally(&self) -> (usize, usize) {
        let scored: Vec<bool> = self.queries.iter().filter_map(|q| q.guarantee_ok).collect();
        (scored.len(), scored.iter().filter(|&&ok| ok).count())
    }
}

/// Checks every pass against `p_cap · (4D+1)` (and, outside strict mode,
/// the identity `length = levels · (4D+1)`) and every padding run against
/// the attempt cap.
pub fn check_round_budget(params: &ProtocolParams, passes: &[PassRecord], queries: &[QueryRecord]) -> RoundBudget {
    let cost = params.level_round_cost();
    let budget = params.p_cap as u64 * cost;
    let exact_identity_checked = !params.counting.strict || params.counting.is_exact();
    let mut violations = Vec::new();
    for p in passes {
        if exact_identity_checked && p.length > budget {
            violations.push(format!("pass {} took {} rounds > {budget}", p.pass, p.length));
        }
        if exact_identity_checked && p.length != p.levels as u64 * cost {
            violations.push(format!("pass {} took {} rounds for {} levels of {cost}", p.pass, p.length, p.levels));
        }
    }
    let max_padding_attempts = queries.iter().map(|q| q.padding_attempts).max().unwrap_or(0);
    for q in queries.iter().filter(|q| q.padding_attempts > params.padding_cap) {
        violations
            .push(format!("query {} used {} padding attempts > {}", q.id, q.padding_attempts, params.padding_cap));
    }
    RoundBudget {
        level_round_cost: cost,
        budget,
        max_pass_length: passes.iter().map(|p| p.length).max().unwrap_or(0),
        exact_identity_checked,
        padding_cap: params.padding_cap,
        max_padding_attempts,
        ok: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    id: u64,
    k: usize,
    issued_at: u64,
    status: QueryStatus,
    answered_at: Option<u64>,
    level: Option<usize>,
    t_prime: Option<u64>,
    t_second: Option<u64>,
    t_span: Option<u64>,
    answer_size: usize,
    answer_hash: &'a str,
    answer_density: &'a str,
    oracle_density: &'a str,
    ratio: Option<&'a str>,
    ratio_f64: Option<f64>,
    bound: f64,
    precondition_lhs: f64,
    precondition_rhs: f64,
    conditioned: bool,
    padded: bool,
    padding_attempts: u32,
    guarantee_ok: Option<bool>,
}

/// Output formats of [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub gnuplot: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Self { csv: true, json: true, gnuplot: false }
    }
}

pub fn write_query_csv(report: &RunReport, out: impl Write) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for q in &report.queries {
        w.serialize(CsvRow {
            id: q.id,
            k: q.k,
            issued_at: q.issued_at,
            status: q.status,
            answered_at: q.answered_at,
            level: q.level,
            t_prime: q.t_prime,
            t_second: q.t_second,
            t_span: q.t_span,
            answer_size: q.answer_size,
            answer_hash: &q.answer_hash,
            answer_density: &q.answer_density,
            oracle_density: &q.oracle_density,
            ratio: q.ratio.as_deref(),
            ratio_f64: q.ratio_f64,
            bound: q.bound,
            precondition_lhs: q.precondition_lhs,
            precondition_rhs: q.precondition_rhs,
            conditioned: q.conditioned,
            padded: q.padded,
            padding_attempts: q.padding_attempts,
            guarantee_ok: q.guarantee_ok,
        })
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json`, `queries.csv` and optionally `density.dat` into
/// `dir`. Returns the paths written.
pub fn emit_report(report: &RunReport, dir: &Path, formats: Formats) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if formats.json {
        let p = dir.join("report.json");
        fs::write(&p, report.to_json())?;
        written.push(p);
    }
    if formats.csv {
        let p = dir.join("queries.csv");
        write_query_csv(report, fs::File::create(&p)?)?;
        written.push(p);
    }
    if formats.gnuplot {
        let p = dir.join("density.dat");
        let mut f = fs::File::create(&p)?;
        writeln!(f, "# round answer_density oracle_density oracle_over_bound")?;
        for q in report.queries.iter().filter(|q| q.status == QueryStatus::Answered) {
            writeln!(
                f,
                "{} {} {} {}",
                q.answered_at.unwrap_or(0),
                q.answer_density_f64,
                q.oracle_density_f64,
                q.oracle_density_f64 / q.bound
            )?;
        }
        written.push(p);
    }
    Ok(written)
}
