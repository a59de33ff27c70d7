//! Parameter sweeps and replays.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{GraphSource, ScenarioConfig};
use super::report::RunReport;
use super::run::run_scenario;
use super::HarnessError;
use crate::graph::AdversaryKind;

/// Grid over `ε`, churn rate and graph size; empty axes keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub rate: Vec<usize>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub rate: usize,
    pub n: usize,
    pub seed: u64,
    pub rounds: u64,
    pub passes: usize,
    pub max_pass_length: u64,
    pub queries: usize,
    pub conditioned: usize,
    pub met: usize,
    pub worst_ratio: Option<f64>,
    pub passed: bool,
    /// Set when the run aborted.
    pub error: Option<String>,
}

fn with_n(graph: &GraphSource, n: usize) -> Result<GraphSource, HarnessError> {
    let mut g = graph.clone();
    match &mut g {
        GraphSource::Gnp { n: m, .. }
        | GraphSource::PlantedDense { n: m, .. }
        | GraphSource::RandomRegular { n: m, .. } => *m = n,
        other => return Err(HarnessError::Config(format!("sweeping n is not supported for {other:?}"))),
    }
    Ok(g)
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Every configuration of the grid, in lexicographic order (ε, r, n, seed).
pub fn expand(base: &ScenarioConfig, grid: &SweepGrid) -> Result<Vec<ScenarioConfig>, HarnessError> {
    let mut out = Vec::new();
    let base_n = base.build_graph().map(|g| g.node_count()).unwrap_or(0);
    for e in axis(&grid.epsilon, base.protocol.epsilon) {
        for r in axis(&grid.rate, base.adversary.rate) {
            for n in axis(&grid.n, base_n) {
                for s in axis(&grid.seeds, base.seed) {
                    let mut c = base.clone();
                    c.protocol.epsilon = e;
                    c.adversary.rate = r;
                    if r > 0 && c.adversary.kind == AdversaryKind::None {
                        c.adversary.kind = AdversaryKind::RandomChurn;
                    }
                    if r == 0 {
                        c.adversary.kind = AdversaryKind::None;
                    }
                    if !grid.n.is_empty() {
                        c.graph = with_n(&c.graph, n)?;
                    }
                    c.seed = s;
                    c.name = format!("{}-eps{e}-r{r}-n{n}-s{s}", base.name);
                    c.validate()?;
                    out.push(c);
                }
            }
        }
    }
    Ok(out)
}

/// Runs the grid sequentially (each run is single-threaded and
/// deterministic, so the rows do not depend on scheduling).
pub fn run_sweep(base: &ScenarioConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>, HarnessError> {
    let mut rows = Vec::new();
    for c in expand(base, grid)? {
        let n = c.build_graph().map(|g| g.node_count()).unwrap_or(0);
        let mut row = SweepRow {
            epsilon: c.protocol.epsilon,
            rate: c.adversary.rate,
            n,
            seed: c.seed,
            rounds: 0,
            passes: 0,
            max_pass_length: 0,
            queries: 0,
            conditioned: 0,
            met: 0,
            worst_ratio: None,
            passed: false,
            error: None,
        };
        match run_scenario(&c) {
            Ok(r) => {
                let (conditioned, met) = r.guarantee_tally();
                row.rounds = r.rounds;
                row.passes = r.passes.len();
                row.max_pass_length = r.checks.round_budget.max_pass_length;
                row.queries = r.queries.len();
                row.conditioned = conditioned;
                row.met = met;
                row.worst_ratio = r.queries.iter().filter_map(|q| q.ratio_f64).reduce(f64::max);
                row.passed = r.passed;
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub report: RunReport,
    /// The re-run serializes to exactly the original bytes.
    pub identical_report: bool,
    pub identical_log: bool,
}

/// Re-runs the scenario embedded in a `report.json` and compares.
pub fn replay(original_json: &str) -> Result<ReplayOutcome, HarnessError> {
    let original: RunReport =
        serde_json::from_str(original_json).map_err(|e| HarnessError::Config(format!("not a run report: {e}")))?;
    let report = run_scenario(&original.config)?;
    Ok(ReplayOutcome {
        identical_report: report.to_json() == original_json,
        identical_log: report.event_log_digest == original.event_log_digest,
        report,
    })
}
