//! Scenario schema (version 1) and its validation.
//!
//! A scenario is a JSON document describing the node pool with per-source
//! latency models, the periodic data sources, the committee cluster, the QoS
//! parameters, the task schedule, and the selection strategy. Validation
//! reports the offending field by path; unknown fields are rejected so typos
//! fail loudly instead of silently applying defaults.

use crate::contract::{QosParams, SelectionStrategy};
use crate::ids::{NodeId, SourceId};
use crate::threshold::ParamsProfile;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Current schema version accepted by [`Scenario::from_json`].
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {found}; this build reads version {SCHEMA_VERSION}")]
    UnsupportedVersion { found: u32 },
    #[error("invalid scenario field {field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

/// Latency model of one node against one source: a normal distribution
/// truncated to positive values by re-drawing.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModelConfig {
    pub source: u32,
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// One oracle node: its latency model per source and optional down intervals.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: u32,
    pub latencies: Vec<LatencyModelConfig>,
    /// Half-open `[start, end)` windows during which the node is offline.
    #[serde(default)]
    pub down: Vec<(f64, f64)>,
}

/// One periodic data source; the fetched value is the epoch index
/// `floor(clock / period_ms)` at fetch completion.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub id: u32,
    pub period_ms: f64,
}

/// Down intervals for one committee replica.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicaDownConfig {
    pub replica: u32,
    pub intervals: Vec<(f64, f64)>,
}

/// Committee cluster sizing, timing, and fault schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitteeSection {
    #[serde(default = "default_committee_size")]
    pub size: usize,
    #[serde(default = "default_election_timeout")]
    pub election_timeout_ms: (f64, f64),
    #[serde(default = "default_heartbeat")]
    pub heartbeat_ms: f64,
    /// One-way latency of every message hop (node -> replica,
    /// replica -> replica, replica -> contract).
    #[serde(default = "default_link_latency")]
    pub link_latency_ms: f64,
    /// Oracle nodes re-broadcast their fragment at this period until their
    /// task resolves, so a fresh leader can still collect them.
    #[serde(default = "default_resubmit")]
    pub resubmit_ms: f64,
    #[serde(default)]
    pub down: Vec<ReplicaDownConfig>,
}

impl Default for CommitteeSection {
    fn default() -> Self {
        Self {
            size: default_committee_size(),
            election_timeout_ms: default_election_timeout(),
            heartbeat_ms: default_heartbeat(),
            link_latency_ms: default_link_latency(),
            resubmit_ms: default_resubmit(),
            down: Vec::new(),
        }
    }
}

fn default_committee_size() -> usize {
    5
}
fn default_election_timeout() -> (f64, f64) {
    (150.0, 300.0)
}
fn default_heartbeat() -> f64 {
    50.0
}
fn default_link_latency() -> f64 {
    1.0
}
fn default_resubmit() -> f64 {
    200.0
}

/// The task schedule: a fixed number of requests dispatched at a fixed
/// interval, each fanning out over the listed sources.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub count: u64,
    #[serde(default = "default_first_dispatch")]
    pub first_dispatch_ms: f64,
    #[serde(default = "default_interval")]
    pub interval_ms: f64,
    /// Nodes selected per source (`n`).
    pub nodes_per_task: usize,
    /// Fragments required to settle (`m`).
    pub threshold: usize,
    pub sources: Vec<u32>,
    /// Per-subtask deadline. Defaults to four times the average configured
    /// mean latency over the task's sources.
    #[serde(default)]
    pub deadline_ms: Option<f64>,
}

fn default_first_dispatch() -> f64 {
    1000.0
}
fn default_interval() -> f64 {
    1000.0
}

/// A full simulation scenario (schema version 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    /// Default seed; the run entry points accept an override.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_profile")]
    pub crypto: ParamsProfile,
    #[serde(default = "default_strategy")]
    pub selection: SelectionStrategy,
    #[serde(default = "default_qos")]
    pub qos: QosParams,
    pub nodes: Vec<NodeConfig>,
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub committee: CommitteeSection,
    pub tasks: TaskSection,
    /// Hard stop for the virtual clock; a safety net against stalled runs.
    #[serde(default = "default_max_sim")]
    pub max_sim_ms: f64,
}

fn default_profile() -> ParamsProfile {
    ParamsProfile::Default256
}
fn default_strategy() -> SelectionStrategy {
    SelectionStrategy::Weighted
}
fn default_qos() -> QosParams {
    QosParams::default()
}
fn default_max_sim() -> f64 {
    1e9
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Structural validation with field-path diagnostics.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.version != SCHEMA_VERSION {
            return Err(ScenarioError::UnsupportedVersion { found: self.version });
        }
        if self.nodes.is_empty() {
            return Err(invalid("nodes", "at least one node is required"));
        }
        if self.sources.is_empty() {
            return Err(invalid("sources", "at least one source is required"));
        }

        let mut source_ids = BTreeSet::new();
        for (i, source) in self.sources.iter().enumerate() {
            if !source_ids.insert(source.id) {
                return Err(invalid(format!("sources[{i}].id"), "duplicate source id"));
            }
            if !(source.period_ms > 0.0 && source.period_ms.is_finite()) {
                return Err(invalid(
                    format!("sources[{i}].period_ms"),
                    "period must be finite and positive",
                ));
            }
        }

        let mut node_ids = BTreeSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if !node_ids.insert(node.id) {
                return Err(invalid(format!("nodes[{i}].id"), "duplicate node id"));
            }
            let mut latency_sources = BTreeSet::new();
            for (j, lat) in node.latencies.iter().enumerate() {
                let field = format!("nodes[{i}].latencies[{j}]");
                if !latency_sources.insert(lat.source) {
                    return Err(invalid(field, "duplicate latency entry for this source"));
                }
                if !source_ids.contains(&lat.source) {
                    return Err(invalid(
                        format!("{field}.source"),
                        format!("source {} is not declared", lat.source),
                    ));
                }
                if !(lat.mean_ms >= 0.0 && lat.mean_ms.is_finite()) {
                    return Err(invalid(
                        format!("{field}.mean_ms"),
                        "mean must be finite and non-negative",
                    ));
                }
                if !(lat.std_ms > 0.0 && lat.std_ms.is_finite()) {
                    return Err(invalid(
                        format!("{field}.std_ms"),
                        "standard deviation must be finite and positive",
                    ));
                }
            }
            validate_intervals(&node.down, &format!("nodes[{i}].down"))?;
        }

        let c = &self.committee;
        if c.size == 0 {
            return Err(invalid("committee.size", "at least one replica is required"));
        }
        let (lo, hi) = c.election_timeout_ms;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(invalid(
                "committee.election_timeout_ms",
                "range must satisfy 0 < low < high",
            ));
        }
        if !(c.heartbeat_ms > 0.0 && c.heartbeat_ms < lo) {
            return Err(invalid(
                "committee.heartbeat_ms",
                "heartbeat must be positive and below the election timeout floor",
            ));
        }
        if !(c.link_latency_ms >= 0.0 && c.link_latency_ms.is_finite()) {
            return Err(invalid(
                "committee.link_latency_ms",
                "link latency must be finite and non-negative",
            ));
        }
        if !(c.resubmit_ms > 0.0 && c.resubmit_ms.is_finite()) {
            return Err(invalid(
                "committee.resubmit_ms",
                "resubmission period must be finite and positive",
            ));
        }
        for (i, down) in c.down.iter().enumerate() {
            if down.replica as usize >= c.size {
                return Err(invalid(
                    format!("committee.down[{i}].replica"),
                    format!("replica {} is outside 0..{}", down.replica, c.size),
                ));
            }
            validate_intervals(&down.intervals, &format!("committee.down[{i}].intervals"))?;
        }

        let t = &self.tasks;
        if t.threshold == 0 || t.threshold > t.nodes_per_task {
            return Err(invalid(
                "tasks.threshold",
                format!("threshold must be in 1..={}", t.nodes_per_task),
            ));
        }
        if t.nodes_per_task > self.nodes.len() {
            return Err(invalid(
                "tasks.nodes_per_task",
                format!("{} nodes requested but only {} declared", t.nodes_per_task, self.nodes.len()),
            ));
        }
        if t.sources.is_empty() {
            return Err(invalid("tasks.sources", "at least one source is required"));
        }
        let mut task_sources = BTreeSet::new();
        for (i, source) in t.sources.iter().enumerate() {
            if !task_sources.insert(*source) {
                return Err(invalid(format!("tasks.sources[{i}]"), "duplicate source"));
            }
            if !source_ids.contains(source) {
                return Err(invalid(
                    format!("tasks.sources[{i}]"),
                    format!("source {source} is not declared"),
                ));
            }
        }
        // Every node must carry a latency model for every source a task can
        // target, so fetches are always well-defined.
        for (i, node) in self.nodes.iter().enumerate() {
            for source in &t.sources {
                if !node.latencies.iter().any(|l| l.source == *source) {
                    return Err(invalid(
                        format!("nodes[{i}].latencies"),
                        format!("missing latency model for task source {source}"),
                    ));
                }
            }
        }
        if !(t.first_dispatch_ms >= 0.0 && t.first_dispatch_ms.is_finite()) {
            return Err(invalid("tasks.first_dispatch_ms", "must be finite and non-negative"));
        }
        if !(t.interval_ms > 0.0 && t.interval_ms.is_finite()) {
            return Err(invalid("tasks.interval_ms", "must be finite and positive"));
        }
        if let Some(deadline) = t.deadline_ms {
            if !(deadline > 0.0 && deadline.is_finite()) {
                return Err(invalid("tasks.deadline_ms", "must be finite and positive"));
            }
        }
        if !(self.qos.alpha >= 0.0 && self.qos.alpha <= 1.0) {
            return Err(invalid("qos.alpha", "must lie in [0, 1]"));
        }
        if !(self.qos.beta >= 1.0 && self.qos.beta.is_finite()) {
            return Err(invalid("qos.beta", "must be finite and at least 1"));
        }
        if !(self.qos.weight_floor > 0.0 && self.qos.weight_floor.is_finite()) {
            return Err(invalid("qos.weight_floor", "must be finite and positive"));
        }
        if !(self.max_sim_ms > t.first_dispatch_ms && self.max_sim_ms.is_finite()) {
            return Err(invalid(
                "max_sim_ms",
                "must be finite and exceed tasks.first_dispatch_ms",
            ));
        }
        Ok(())
    }

    /// Deadline for one subtask: the configured value, or four times the
    /// average mean latency over the task's sources.
    pub fn effective_deadline_ms(&self) -> f64 {
        if let Some(deadline) = self.tasks.deadline_ms {
            return deadline;
        }
        let mut total = 0.0;
        let mut count = 0u32;
        for node in &self.nodes {
            for lat in &node.latencies {
                if self.tasks.sources.contains(&lat.source) {
                    total += lat.mean_ms;
                    count += 1;
                }
            }
        }
        4.0 * total / f64::from(count.max(1))
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.iter().map(|n| NodeId(n.id)).collect()
    }

    pub fn task_sources(&self) -> Vec<SourceId> {
        self.tasks.sources.iter().map(|s| SourceId(*s)).collect()
    }

    /// Period of a source.
    pub fn period_ms(&self, source: SourceId) -> Option<f64> {
        self.sources.iter().find(|s| s.id == source.0).map(|s| s.period_ms)
    }

    /// Latency model of a node against a source.
    pub fn latency(&self, node: NodeId, source: SourceId) -> Option<(f64, f64)> {
        self.nodes.iter().find(|n| n.id == node.0).and_then(|n| {
            n.latencies.iter().find(|l| l.source == source.0).map(|l| (l.mean_ms, l.std_ms))
        })
    }

    /// True mean latencies for every (node, task source) pair, used by the
    /// worst-only baseline and by experiment rankings.
    pub fn latency_means(&self) -> std::collections::BTreeMap<(NodeId, SourceId), f64> {
        let mut means = std::collections::BTreeMap::new();
        for node in &self.nodes {
            for lat in &node.latencies {
                means.insert((NodeId(node.id), SourceId(lat.source)), lat.mean_ms);
            }
        }
        means
    }
}

fn validate_intervals(intervals: &[(f64, f64)], field: &str) -> Result<(), ScenarioError> {
    for (i, (start, end)) in intervals.iter().enumerate() {
        if !(start.is_finite() && end.is_finite() && *start >= 0.0 && start < end) {
            return Err(invalid(
                format!("{field}[{i}]"),
                "interval must satisfy 0 <= start < end, both finite",
            ));
        }
    }
    Ok(())
}
