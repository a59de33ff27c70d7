use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dynadense::graph::read_edge_list;
use dynadense::harness::{
    emit_report, replay, run_scenario, run_sweep, write_sweep_csv, Formats, RunReport, ScenarioConfig, SweepGrid,
};
use dynadense::oracle::{exact_at_least_k, exact_densest, ratio_f64, OracleCache};

/// Simulator for continuously maintained approximate densest subgraphs in
/// dynamic networks, checked against exact oracles.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its report.
    Run(RunArgs),
    /// Re-run the scenario of a report.json and check byte-identical output.
    Replay {
        /// Path of a report.json written by `run`.
        report: PathBuf,
    },
    /// Exact densest (or at-least-k densest) subgraph of an edge-list file.
    Oracle {
        /// Edge list: one `u v` pair per line, 0-based ids, `#` comments.
        graph: PathBuf,
        /// Minimum subgraph size (enumeration; at most 20 nodes).
        #[arg(long, default_value_t = 0)]
        k: usize,
        /// Content-addressed cache directory for densest results.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Run a scenario over a grid of ε, churn rate, graph size and seeds.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// JSON grid: {"epsilon": [..], "rate": [..], "n": [..], "seeds": [..]}.
        #[arg(long)]
        grid: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Count nodes and edges exactly instead of estimating.
    #[arg(long)]
    exact_counting: bool,
    /// Send one tuple coordinate per message.
    #[arg(long)]
    strict_congest: bool,
    /// Multiplier φ on the peeling threshold φ(1+δ)m/n (default 1).
    #[arg(long)]
    threshold_factor: Option<f64>,
    /// Output directory (default: output.dir of the config, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write density.dat for gnuplot.
    #[arg(long)]
    gnuplot: bool,
}

impl RunArgs {
    fn load(&self) -> Result<(ScenarioConfig, PathBuf)> {
        let mut cfg =
            ScenarioConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.protocol.exact_counting |= self.exact_counting;
        cfg.protocol.strict_congest |= self.strict_congest;
        if let Some(f) = self.threshold_factor {
            cfg.protocol.threshold_factor = f;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = Some(out.clone());
        }
        cfg.output.gnuplot |= self.gnuplot;
        cfg.validate()?;
        let dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, dir))
    }
}

fn summarize(report: &RunReport) {
    let (conditioned, met) = report.guarantee_tally();
    println!(
        "{}: n = {}, D' = {}, {} rounds, {} passes (max length {} ≤ {}), {} queries, {met}/{conditioned} conditioned queries within bound",
        if report.config.name.is_empty() { "scenario" } else { &report.config.name },
        report.n,
        report.params.d,
        report.rounds,
        report.passes.len(),
        report.checks.round_budget.max_pass_length,
        report.checks.round_budget.budget,
        report.queries.len(),
    );
    for v in &report.checks.round_budget.violations {
        println!("  budget violation: {v}");
    }
    println!("{}", if report.passed { "PASS" } else { "FAIL" });
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let (cfg, dir) = args.load()?;
            let report = run_scenario(&cfg)?;
            let formats = Formats { gnuplot: cfg.output.gnuplot, ..Formats::default() };
            for p in emit_report(&report, &dir, formats)? {
                println!("wrote {}", p.display());
            }
            summarize(&report);
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Replay { report } => {
            let text = std::fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?;
            let outcome = replay(&text)?;
            println!("report identical: {}", outcome.identical_report);
            println!("event log identical: {}", outcome.identical_log);
            summarize(&outcome.report);
            let ok = outcome.identical_report && outcome.identical_log && outcome.report.passed;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Oracle { graph, k, cache } => {
            let g = read_edge_list(&graph, None).with_context(|| format!("reading {}", graph.display()))?;
            let result = if k > 1 {
                exact_at_least_k(&g, k)?
            } else if let Some(dir) = cache {
                OracleCache::new(dir)?.densest(&g)?
            } else {
                exact_densest(&g)
            };
            let members: Vec<usize> = result.members.iter().collect();
            let out = serde_json::json!({
                "nodes": g.node_count(),
                "edges": g.edge_count(),
                "k": k,
                "density": format!("{}/{}", result.density.numer(), result.density.denom()),
                "density_f64": ratio_f64(result.density),
                "method": format!("{:?}", result.method).to_lowercase(),
                "members": members,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { run, grid } => {
            let (cfg, dir) = run.load()?;
            let text = std::fs::read_to_string(&grid).with_context(|| format!("reading {}", grid.display()))?;
            let grid: SweepGrid = serde_json::from_str(&text).context("parsing sweep grid")?;
            let rows = run_sweep(&cfg, &grid)?;
            if rows.is_empty() {
                bail!("empty sweep grid");
            }
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("sweep.csv");
            write_sweep_csv(&rows, std::fs::File::create(&path)?)?;
            println!("wrote {}", path.display());
            let failed = rows.iter().filter(|r| !r.passed).count();
            for r in &rows {
                println!(
                    "eps {} r {} n {} seed {}: {}/{} conditioned within bound{}",
                    r.epsilon,
                    r.rate,
                    r.n,
                    r.seed,
                    r.met,
                    r.conditioned,
                    r.error.as_ref().map(|e| format!(" (error: {e})")).unwrap_or_default()
                );
            }
            println!("{} of {} runs passed", rows.len() - failed, rows.len());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
