//! `oraclesim` — experiment runner and analysis CLI for the oracle
//! simulator.
//!
//! Two command families:
//!
//! * `run-experiment <name>` executes a packaged study on a scenario (a
//!   shipped name like `heterogeneous` or a JSON file path) and writes CSV
//!   artifacts.
//! * `analyze success-prob` evaluates the closed-form settlement model
//!   without simulating.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use oraclesim_core::analysis::{self, LatencyModel, Window};
use oraclesim_core::contract::SelectionStrategy;
use oraclesim_core::experiments::{self, configs, ResponseTimeOptions};
use oraclesim_core::netsim::Scenario;
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "oraclesim", version, about = "Oracle network simulator and analysis tool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a packaged experiment and emit CSV artifacts.
    #[command(subcommand)]
    RunExperiment(Experiment),
    /// Evaluate analytical models without simulating.
    #[command(subcommand)]
    Analyze(Analyze),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario: a shipped name (heterogeneous, uniform, membership-sweep) or a JSON file.
    #[arg(long)]
    config: String,
    /// Seed(s) to run; repeat the flag for several. Defaults to the
    /// scenario's own seed.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Override the scenario's task count.
    #[arg(long)]
    tasks: Option<u64>,
    /// Directory for CSV artifacts. Without it, CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Experiment {
    /// Compare end-to-end response times across selection strategies.
    ResponseTime {
        #[command(flatten)]
        common: CommonArgs,
        /// Strategies to compare (weighted, random, worst-only); repeat the
        /// flag. Defaults to all three.
        #[arg(long = "strategy")]
        strategies: Vec<String>,
    },
    /// Track every node's QoS after each task.
    QosTrace {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Count selections per node against final QoS.
    SelectionCounts {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep per-task membership; compare simulated and analytical success.
    Scalability {
        #[command(flatten)]
        common: CommonArgs,
        /// Membership sweep, e.g. `n=2..10` (inclusive).
        #[arg(long)]
        sweep: String,
    },
}

#[derive(Subcommand)]
enum Analyze {
    /// Probability that enough nodes answer inside one source period.
    SuccessProb {
        /// Mean fetch latency in ms.
        #[arg(long)]
        mean: f64,
        /// Latency standard deviation in ms.
        #[arg(long)]
        std: f64,
        /// Source update period in ms.
        #[arg(long)]
        period: f64,
        /// Window start offset in ms; computed for the best window if omitted.
        #[arg(long)]
        window_start: Option<f64>,
        /// Nodes fetching per task.
        #[arg(long)]
        nodes: usize,
        /// Agreeing responses required.
        #[arg(long)]
        threshold: usize,
        /// Also print every membership from `threshold` to this value.
        #[arg(long)]
        sweep_to: Option<usize>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::RunExperiment(experiment) => run_experiment(experiment),
        Command::Analyze(analyze) => run_analyze(analyze),
    }
}

fn load_scenario(config: &str) -> Result<Scenario> {
    let text = match configs::by_name(config) {
        Some(embedded) => embedded.to_string(),
        None => fs::read_to_string(config)
            .with_context(|| format!("cannot read scenario file `{config}`"))?,
    };
    Scenario::from_json(&text).with_context(|| format!("invalid scenario `{config}`"))
}

fn seeds_or_default(scenario: &Scenario, seeds: &[u64]) -> Vec<u64> {
    if seeds.is_empty() {
        vec![scenario.seed]
    } else {
        seeds.to_vec()
    }
}

fn emit(out: &Option<PathBuf>, file_name: &str, csv: &str, summary: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .with_context(|| format!("cannot create output directory {}", dir.display()))?;
            let path: PathBuf = dir.join(file_name);
            fs::write(&path, csv)
                .with_context(|| format!("cannot write {}", path.display()))?;
            println!("wrote {}", path.display());
            print!("{summary}");
        }
        None => {
            print!("{csv}");
            eprint!("{summary}");
        }
    }
    Ok(())
}

fn parse_strategies(names: &[String]) -> Result<Vec<SelectionStrategy>> {
    if names.is_empty() {
        return Ok(vec![
            SelectionStrategy::Weighted,
            SelectionStrategy::Random,
            SelectionStrategy::WorstOnly,
        ]);
    }
    names
        .iter()
        .map(|name| {
            name.parse::<SelectionStrategy>()
                .map_err(|_| anyhow::anyhow!("unknown strategy `{name}`"))
        })
        .collect()
}

/// Accepts `n=LO..HI` or `LO..HI`, both inclusive.
fn parse_sweep(text: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let range = text.strip_prefix("n=").unwrap_or(text);
    let (lo, hi) = range
        .split_once("..")
        .with_context(|| format!("sweep `{text}` is not of the form n=LO..HI"))?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let lo: usize = lo.parse().with_context(|| format!("bad sweep start in `{text}`"))?;
    let hi: usize = hi.parse().with_context(|| format!("bad sweep end in `{text}`"))?;
    Ok(lo..=hi)
}

fn run_experiment(experiment: Experiment) -> Result<()> {
    match experiment {
        Experiment::ResponseTime { common, strategies } => {
            let scenario = load_scenario(&common.config)?;
            let options = ResponseTimeOptions {
                seeds: seeds_or_default(&scenario, &common.seeds),
                strategies: parse_strategies(&strategies)?,
                task_count: common.tasks,
            };
            let report = experiments::response_time(&scenario, &options)?;
            emit(&common.out, "response_times.csv", &report.rows_csv, &report.summary_text())
        }
        Experiment::QosTrace { common } => {
            let scenario = load_scenario(&common.config)?;
            let seed = seeds_or_default(&scenario, &common.seeds)[0];
            let report = experiments::qos_trace(&scenario, seed, common.tasks)?;
            let mut summary = String::new();
            for (node, source, qos) in &report.final_qos {
                summary.push_str(&format!("final qos {node} on {source}: {qos:.4}\n"));
            }
            emit(&common.out, "qos_trace.csv", &report.csv, &summary)
        }
        Experiment::SelectionCounts { common } => {
            let scenario = load_scenario(&common.config)?;
            let seed = seeds_or_default(&scenario, &common.seeds)[0];
            let report = experiments::selection_counts(&scenario, seed, common.tasks)?;
            let mut summary = String::new();
            for (node, qos, selected) in &report.counts {
                summary.push_str(&format!(
                    "{node}: selected {selected} times, final qos {qos:.4}\n"
                ));
            }
            emit(&common.out, "selection_counts.csv", &report.csv, &summary)
        }
        Experiment::Scalability { common, sweep } => {
            let scenario = load_scenario(&common.config)?;
            let seed = seeds_or_default(&scenario, &common.seeds)[0];
            let sweep = parse_sweep(&sweep)?;
            let report = experiments::scalability(&scenario, seed, sweep, common.tasks)?;
            emit(&common.out, "scalability.csv", &report.csv, &report.summary_text())
        }
    }
}

fn run_analyze(analyze: Analyze) -> Result<()> {
    match analyze {
        Analyze::SuccessProb { mean, std, period, window_start, nodes, threshold, sweep_to } => {
            if threshold == 0 || threshold > nodes {
                bail!("threshold must be in 1..=nodes (got {threshold} of {nodes})");
            }
            let model = LatencyModel::new(mean, std)?;
            let start = match window_start {
                Some(start) => start,
                None => analysis::best_window_start(&model, period)?,
            };
            let window = Window::new(start, period)?;
            let total = analysis::total_mass(&model);
            let p = analysis::single_trial_p(&model, &window);
            println!("latency           N({mean}, {std}^2) ms, positive part");
            println!("positive mass     {total:.6}");
            println!("window            [{:.3}, {:.3}] ms", start, start + period);
            println!("single-node p     {p:.6}");
            let hi = sweep_to.unwrap_or(nodes).max(nodes);
            if sweep_to.is_some() {
                println!("{:>4} {:>12}", "n", "success");
                for n in threshold..=hi {
                    let success = analysis::agg_success_prob(n, threshold, p)?;
                    let marker = if n == nodes { "  <- requested" } else { "" };
                    println!("{n:>4} {success:>12.6}{marker}");
                }
            } else {
                let success = analysis::agg_success_prob(nodes, threshold, p)?;
                println!("success({nodes} nodes, threshold {threshold}) = {success:.6}");
            }
            Ok(())
        }
    }
}
