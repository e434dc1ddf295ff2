//! Prepackaged experiments over the simulator.
//!
//! Four studies, each producing a deterministic CSV artifact plus a short
//! summary:
//!
//! * [`response_time`] — end-to-end task response times under different node
//!   selection strategies, fanned out over seeds.
//! * [`qos_trace`] — per-node QoS trajectory over a task sequence.
//! * [`selection_counts`] — how often each node was selected versus its final
//!   QoS.
//! * [`scalability`] — settlement success as the per-task membership grows,
//!   simulated and predicted by the closed-form model side by side.
//!
//! All runs are deterministic in `(scenario, seed)`; per-job seeds are
//! derived, so fan-out order never affects results.

use crate::analysis::{self, AnalysisError, LatencyModel, Window};
use crate::batch::{self, derive_seed};
use crate::contract::SelectionStrategy;
use crate::ids::{NodeId, SourceId};
use crate::netsim::{self, RunOptions, Scenario, ScenarioError};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;
use thiserror::Error;

/// Scenario files shipped with the crate, loadable by name.
pub mod configs {
    /// Heterogeneous 10-node fleet; the strategy-comparison workload.
    pub const HETEROGENEOUS: &str = include_str!("../../../configs/heterogeneous.cfg");
    /// Homogeneous fleet; selection strategy should barely matter.
    pub const UNIFORM: &str = include_str!("../../../configs/uniform.cfg");
    /// Homogeneous fleet against a fast-moving source; the membership sweep
    /// workload matched by the analytical success model.
    pub const MEMBERSHIP_SWEEP: &str = include_str!("../../../configs/membership_sweep.cfg");

    /// Look a shipped scenario up by its short name.
    pub fn by_name(name: &str) -> Option<&'static str> {
        match name {
            "heterogeneous" => Some(HETEROGENEOUS),
            "uniform" => Some(UNIFORM),
            "membership-sweep" => Some(MEMBERSHIP_SWEEP),
            _ => None,
        }
    }

    /// Short names accepted by [`by_name`].
    pub const NAMES: [&str; 3] = ["heterogeneous", "uniform", "membership-sweep"];
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("no seeds given")]
    NoSeeds,
    #[error("no selection strategies given")]
    NoStrategies,
    #[error("sweep {lo}..={hi} is invalid for threshold {threshold} and a pool of {pool} nodes")]
    BadSweep { lo: usize, hi: usize, threshold: usize, pool: usize },
    #[error("the analytical comparison needs one source and identical latency models, but {0}")]
    NotComparable(String),
}

fn prepared(scenario: &Scenario, task_count: Option<u64>) -> Scenario {
    let mut scenario = scenario.clone();
    if let Some(count) = task_count {
        scenario.tasks.count = count;
    }
    scenario
}

// ---------------------------------------------------------------------------
// Response-time comparison
// ---------------------------------------------------------------------------

/// Options for [`response_time`].
#[derive(Debug, Clone)]
pub struct ResponseTimeOptions {
    pub seeds: Vec<u64>,
    pub strategies: Vec<SelectionStrategy>,
    /// Override of the scenario's task count.
    pub task_count: Option<u64>,
}

impl Default for ResponseTimeOptions {
    fn default() -> Self {
        Self {
            seeds: (1..=10).collect(),
            strategies: vec![
                SelectionStrategy::Weighted,
                SelectionStrategy::Random,
                SelectionStrategy::WorstOnly,
            ],
            task_count: None,
        }
    }
}

/// Aggregate statistics for one strategy across all seeds.
#[derive(Debug, Clone)]
pub struct StrategySummary {
    pub strategy: SelectionStrategy,
    pub mean_response_ms: f64,
    pub settled: usize,
    pub timed_out: usize,
}

/// Output of [`response_time`].
#[derive(Debug, Clone)]
pub struct ResponseTimeReport {
    /// `seed,task,strategy,response_ms` — one row per settled subtask.
    pub rows_csv: String,
    pub summary: Vec<StrategySummary>,
    /// `(random - weighted) / random`, when both strategies were run.
    pub reduction_weighted_vs_random: Option<f64>,
}

impl ResponseTimeReport {
    pub fn mean_of(&self, strategy: SelectionStrategy) -> Option<f64> {
        self.summary.iter().find(|s| s.strategy == strategy).map(|s| s.mean_response_ms)
    }

    pub fn summary_text(&self) -> String {
        let mut text = String::new();
        for s in &self.summary {
            let _ = writeln!(
                text,
                "{:<11} mean response {:8.2} ms  settled {:5}  timed out {:3}",
                s.strategy.name(),
                s.mean_response_ms,
                s.settled,
                s.timed_out
            );
        }
        if let Some(reduction) = self.reduction_weighted_vs_random {
            let _ = writeln!(
                text,
                "weighted vs random: {:+.2}% mean response time",
                -100.0 * reduction
            );
        }
        text
    }
}

/// Runs every `(strategy, seed)` pair and compares mean response times.
pub fn response_time(
    scenario: &Scenario,
    options: &ResponseTimeOptions,
) -> Result<ResponseTimeReport, ExperimentError> {
    if options.seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    if options.strategies.is_empty() {
        return Err(ExperimentError::NoStrategies);
    }
    let base = prepared(scenario, options.task_count);
    base.validate()?;

    let jobs: Vec<(SelectionStrategy, u64)> = options
        .strategies
        .iter()
        .flat_map(|&strategy| options.seeds.iter().map(move |&seed| (strategy, seed)))
        .collect();
    let runs = batch::run_indexed(jobs.len(), |i| {
        let (strategy, seed) = jobs[i];
        let mut sc = base.clone();
        sc.selection = strategy;
        netsim::run(&sc, seed, &RunOptions { collect_trace: false, collect_qos_trajectory: false })
    });

    let mut rows_csv = String::from("seed,task,strategy,response_ms\n");
    let mut totals: BTreeMap<&'static str, (f64, usize, usize)> = BTreeMap::new();
    for ((strategy, seed), run) in jobs.iter().zip(runs) {
        let report = run?;
        let entry = totals.entry(strategy.name()).or_default();
        for outcome in &report.outcomes {
            match outcome.response_ms() {
                Some(response) => {
                    let _ = writeln!(
                        rows_csv,
                        "{seed},{},{},{response:.3}",
                        outcome.task_index,
                        strategy.name()
                    );
                    entry.0 += response;
                    entry.1 += 1;
                }
                None => entry.2 += 1,
            }
        }
    }

    let summary: Vec<StrategySummary> = options
        .strategies
        .iter()
        .map(|&strategy| {
            let (sum, settled, timed_out) =
                totals.get(strategy.name()).copied().unwrap_or_default();
            StrategySummary {
                strategy,
                mean_response_ms: if settled > 0 { sum / settled as f64 } else { f64::NAN },
                settled,
                timed_out,
            }
        })
        .collect();

    let weighted = summary
        .iter()
        .find(|s| s.strategy == SelectionStrategy::Weighted)
        .map(|s| s.mean_response_ms);
    let random = summary
        .iter()
        .find(|s| s.strategy == SelectionStrategy::Random)
        .map(|s| s.mean_response_ms);
    let reduction = match (weighted, random) {
        (Some(w), Some(r)) if r > 0.0 => Some((r - w) / r),
        _ => None,
    };

    Ok(ResponseTimeReport { rows_csv, summary, reduction_weighted_vs_random: reduction })
}

// ---------------------------------------------------------------------------
// QoS trajectory
// ---------------------------------------------------------------------------

/// Output of [`qos_trace`].
#[derive(Debug, Clone)]
pub struct QosTraceReport {
    /// `task,node,qos,aggregated` — `task` counts resolved tasks, so `task 0`
    /// rows hold the initial QoS.
    pub csv: String,
    pub final_qos: Vec<(NodeId, SourceId, f64)>,
}

/// Tracks every node's QoS after each resolved task under one seed.
pub fn qos_trace(
    scenario: &Scenario,
    seed: u64,
    task_count: Option<u64>,
) -> Result<QosTraceReport, ExperimentError> {
    let sc = prepared(scenario, task_count);
    let report = netsim::run(
        &sc,
        seed,
        &RunOptions { collect_trace: false, collect_qos_trajectory: true },
    )?;

    let mut csv = String::from("task,node,qos,aggregated\n");
    for node in report.contract.nodes() {
        let _ = writeln!(csv, "0,{},{:.6},false", node.0, sc.qos.initial);
    }
    for row in &report.qos_rows {
        let _ = writeln!(
            csv,
            "{},{},{:.6},{}",
            row.task_index + 1,
            row.node.0,
            row.qos,
            row.aggregated
        );
    }

    let mut final_qos = Vec::new();
    for node in report.contract.nodes() {
        for source in sc.task_sources() {
            final_qos.push((*node, source, report.contract.qos_value(*node, source)));
        }
    }
    Ok(QosTraceReport { csv, final_qos })
}

// ---------------------------------------------------------------------------
// Selection concentration
// ---------------------------------------------------------------------------

/// Output of [`selection_counts`].
#[derive(Debug, Clone)]
pub struct SelectionCountsReport {
    /// `node,final_qos,times_selected` — counts summed over sources, QoS
    /// averaged over sources (identical to per-source values when the
    /// scenario has one source).
    pub csv: String,
    pub counts: Vec<(NodeId, f64, u64)>,
}

/// Counts how often each node was selected over a full run.
pub fn selection_counts(
    scenario: &Scenario,
    seed: u64,
    task_count: Option<u64>,
) -> Result<SelectionCountsReport, ExperimentError> {
    let sc = prepared(scenario, task_count);
    let report = netsim::run(
        &sc,
        seed,
        &RunOptions { collect_trace: false, collect_qos_trajectory: false },
    )?;

    let sources = sc.task_sources();
    let mut csv = String::from("node,final_qos,times_selected\n");
    let mut counts = Vec::new();
    for node in report.contract.nodes() {
        let mut selected = 0u64;
        let mut qos_sum = 0.0;
        for source in &sources {
            selected += report
                .contract
                .qos_record(*node, *source)
                .map_or(0, |record| record.selected);
            qos_sum += report.contract.qos_value(*node, *source);
        }
        let qos = qos_sum / sources.len() as f64;
        let _ = writeln!(csv, "{},{qos:.6},{selected}", node.0);
        counts.push((*node, qos, selected));
    }
    Ok(SelectionCountsReport { csv, counts })
}

// ---------------------------------------------------------------------------
// Scalability sweep
// ---------------------------------------------------------------------------

/// One sweep point of [`scalability`].
#[derive(Debug, Clone, Copy)]
pub struct ScalabilityPoint {
    pub nodes_per_task: usize,
    /// Closed-form probability that at least `threshold` of the members fetch
    /// inside the best-aligned window.
    pub analytical: f64,
    /// Fraction of simulated tasks with at least `threshold` fetch
    /// completions inside that same window.
    pub simulated: f64,
    /// Fraction of tasks the full pipeline settled (union over periods, so
    /// at or above the single-window numbers).
    pub settled_fraction: f64,
}

/// Output of [`scalability`].
#[derive(Debug, Clone)]
pub struct ScalabilityReport {
    /// `n,analytical_success,simulated_success`.
    pub csv: String,
    pub points: Vec<ScalabilityPoint>,
    /// Window start used on both sides of the comparison.
    pub window_start: f64,
    pub single_trial_p: f64,
}

impl ScalabilityReport {
    pub fn summary_text(&self) -> String {
        let mut text = format!(
            "window start {:.3} ms, single-node window probability {:.4}\n",
            self.window_start, self.single_trial_p
        );
        for p in &self.points {
            let _ = writeln!(
                text,
                "n={:<3} analytical {:.4}  simulated {:.4}  settled {:.4}",
                p.nodes_per_task, p.analytical, p.simulated, p.settled_fraction
            );
        }
        text
    }
}

/// Sweeps the per-task membership and compares simulated window success with
/// the analytical model. The scenario must use one source and give every
/// node the same latency model, otherwise the closed form does not apply.
pub fn scalability(
    scenario: &Scenario,
    seed: u64,
    sweep: RangeInclusive<usize>,
    task_count: Option<u64>,
) -> Result<ScalabilityReport, ExperimentError> {
    let base = prepared(scenario, task_count);
    base.validate()?;

    let sources = base.task_sources();
    if sources.len() != 1 {
        return Err(ExperimentError::NotComparable(format!(
            "the task list names {} sources",
            sources.len()
        )));
    }
    let source = sources[0];
    let models: Vec<(f64, f64)> = base
        .node_ids()
        .iter()
        .map(|&node| base.latency(node, source).expect("validated"))
        .collect();
    let (mean, std) = models[0];
    if models.iter().any(|&m| m != (mean, std)) {
        return Err(ExperimentError::NotComparable(
            "nodes have differing latency models".into(),
        ));
    }

    let (lo, hi) = (*sweep.start(), *sweep.end());
    let pool = base.nodes.len();
    let threshold = base.tasks.threshold;
    if lo < threshold || lo > hi || hi > pool {
        return Err(ExperimentError::BadSweep { lo, hi, threshold, pool });
    }

    let model = LatencyModel::new(mean, std)?;
    let period = base.period_ms(source).expect("validated");
    let window_start = analysis::best_window_start(&model, period)?;
    let window = Window::new(window_start, period)?;
    let p = analysis::single_trial_p(&model, &window);

    let memberships: Vec<usize> = (lo..=hi).collect();
    let runs = batch::run_indexed(memberships.len(), |i| {
        let mut sc = base.clone();
        sc.tasks.nodes_per_task = memberships[i];
        netsim::run(
            &sc,
            derive_seed(seed, "sweep", memberships[i] as u64),
            &RunOptions { collect_trace: false, collect_qos_trajectory: false },
        )
    });

    let mut csv = String::from("n,analytical_success,simulated_success\n");
    let mut points = Vec::with_capacity(memberships.len());
    for (&n, run) in memberships.iter().zip(runs) {
        let report = run?;
        let total = report.outcomes.len();
        let hits = report
            .outcomes
            .iter()
            .filter(|outcome| {
                let in_window = outcome
                    .fetch_offsets
                    .iter()
                    .filter(|(_, offset)| *offset >= window_start && *offset <= window_start + period)
                    .count();
                in_window >= threshold
            })
            .count();
        let simulated = hits as f64 / total as f64;
        let analytical = analysis::agg_success_prob(n, threshold, p)?;
        let _ = writeln!(csv, "{n},{analytical:.6},{simulated:.6}");
        points.push(ScalabilityPoint {
            nodes_per_task: n,
            analytical,
            simulated,
            settled_fraction: report.settled_fraction(),
        });
    }

    Ok(ScalabilityReport { csv, points, window_start, single_trial_p: p })
}
