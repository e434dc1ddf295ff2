//! On-chain oracle contract: node registry, task lifecycle, package
//! verification, and the QoS feedback loop that biases future selections.
//!
//! The contract is a single-writer state machine. A request fans out into one
//! subtask per data source; each subtask moves monotonically through
//! `Selecting -> Pending -> Settled | TimedOut`. Selection draws `n` nodes by
//! QoS-weighted sampling without replacement (or by the uniform / worst-case
//! baselines used in experiments), deals one-time threshold keys for exactly
//! those nodes, and hands the shares back to the caller for distribution.
//! Settlement verifies the committee leader's signature over the package and
//! the recombined group signature under the task's group key, then applies
//! the feedback rule:
//!
//! * `t_delay = beta * max(aggregated response times)` — the ceiling used to
//!   score timeliness,
//! * aggregated nodes: `T = 1 - t / t_delay` (clamped to `[0, 1]`) and an
//!   accuracy credit `h + 1`,
//! * selected-but-not-aggregated nodes: `T = 0` and no credit,
//! * everyone selected: `QoS = alpha * T + (1 - alpha) * (h / c)`.
//!
//! Nodes that have never been selected carry an optimistic initial QoS of 1,
//! and sampling weights are floored at a small epsilon so a zero-QoS node
//! remains reachable.

use crate::batch::derive_seed;
use crate::committee::CommitteePackage;
use crate::ids::{NodeId, RequestId, SourceId, SubtaskId};
use crate::sampling::{a_expj_sample, WeightedItem};
use crate::threshold::{self, GroupKey, KeySet, ParamsProfile, SchemeParams};
use crate::wire::{tag, Reader, WireError, Writer};
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;
use thiserror::Error;

/// Tunables of the QoS feedback rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct QosParams {
    /// Blend factor: weight of timeliness versus accuracy.
    pub alpha: f64,
    /// Delay-ceiling factor applied to the slowest aggregated time.
    pub beta: f64,
    /// Minimum sampling weight, so QoS = 0 nodes stay reachable.
    pub weight_floor: f64,
    /// QoS assumed for nodes that were never selected.
    pub initial: f64,
}

impl Default for QosParams {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 1.5, weight_floor: 1e-6, initial: 1.0 }
    }
}

impl QosParams {
    /// Ceiling `beta * max(times)` against which timeliness is scored.
    pub fn delay_ceiling(&self, times: &[f64]) -> f64 {
        self.beta * times.iter().copied().fold(0.0_f64, f64::max)
    }

    /// Timeliness score of one response time against the ceiling, in [0, 1].
    pub fn timeliness(&self, t: f64, t_delay: f64) -> f64 {
        if t_delay > 0.0 {
            (1.0 - t / t_delay).clamp(0.0, 1.0)
        } else {
            1.0
        }
    }

    /// The alpha-blend of timeliness and accuracy.
    pub fn blend(&self, timeliness: f64, accuracy: f64) -> f64 {
        self.alpha * timeliness + (1.0 - self.alpha) * accuracy
    }
}

/// How `select_nodes` picks the working set for a subtask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionStrategy {
    /// QoS-weighted sampling without replacement (the protocol's rule).
    Weighted,
    /// Uniform sampling without replacement (baseline).
    Random,
    /// Deterministically picks the nodes with the largest true mean latency
    /// (adversarial baseline; requires latency means to be registered).
    WorstOnly,
}

impl FromStr for SelectionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weighted" => Ok(Self::Weighted),
            "random" => Ok(Self::Random),
            "worst-only" => Ok(Self::WorstOnly),
            other => Err(format!(
                "unknown strategy {other:?}; expected weighted, random, or worst-only"
            )),
        }
    }
}

impl SelectionStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Weighted => "weighted",
            Self::Random => "random",
            Self::WorstOnly => "worst-only",
        }
    }
}

/// Per-(node, source) reputation bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QosRecord {
    /// Times selected (`c`).
    pub selected: u64,
    /// Times aggregated (`h`).
    pub aggregated: u64,
    /// Timeliness score from the most recent resolved task, if any.
    pub last_timeliness: Option<f64>,
    /// Current blended QoS.
    pub qos: f64,
}

/// Lifecycle state of one subtask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtaskState {
    Selecting,
    Pending,
    Settled,
    TimedOut,
}

/// Stored outcome of a settled subtask.
#[derive(Debug, Clone, PartialEq)]
pub struct Settlement {
    pub settle_ms: f64,
    /// Settlement time minus dispatch time.
    pub response_ms: f64,
    /// The agreed message bytes carried by the package.
    pub msg: Vec<u8>,
    /// Decoded observation, when the message uses the observation encoding.
    pub value: Option<u64>,
    /// Nodes whose fragments were aggregated, ascending.
    pub aggregated: Vec<NodeId>,
}

#[derive(Debug)]
struct Subtask {
    source: SourceId,
    state: SubtaskState,
    selected: Vec<NodeId>,
    group_key: Option<GroupKey>,
    params: Option<SchemeParams>,
    settlement: Option<Settlement>,
}

#[derive(Debug)]
struct Request {
    sources: Vec<SourceId>,
    nodes_per_source: usize,
    threshold: usize,
    entropy: u64,
    dispatch_ms: f64,
    deadline_ms: f64,
}

/// Everything the caller needs after node selection: the working set plus the
/// freshly dealt one-time key material to distribute.
pub struct SelectionOutcome {
    /// Selected nodes, ascending by id. Signer index `i + 1` belongs to
    /// `selected[i]`.
    pub selected: Vec<NodeId>,
    pub params: SchemeParams,
    pub keys: KeySet,
}

/// Result of delivering a package.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SettleOutcome {
    Settled { response_ms: f64 },
    /// The subtask was already settled or timed out; the package is ignored.
    AlreadyResolved,
}

/// Result of a deadline firing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeoutOutcome {
    TimedOut,
    AlreadyResolved,
}

/// How a multi-source request folds its settled subtask values into one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationStrategy {
    /// Lower median of the decoded numeric values.
    Median,
    /// Value backed by a strict majority of identical messages.
    Majority,
    /// Value of the earliest-settled subtask.
    FirstSettled,
}

#[derive(Debug, Error, PartialEq)]
pub enum ContractError {
    #[error("threshold {threshold} not in 1..={nodes_per_source}")]
    BadThreshold { threshold: usize, nodes_per_source: usize },
    #[error("requested {wanted} nodes but the registry holds {pool}")]
    NotEnoughNodes { pool: usize, wanted: usize },
    #[error("a request needs at least one source")]
    EmptySources,
    #[error("duplicate source {0} in request")]
    DuplicateSource(SourceId),
    #[error("unknown request {0}")]
    UnknownRequest(RequestId),
    #[error("unknown subtask {0}")]
    UnknownSubtask(SubtaskId),
    #[error("subtask {subtask} is {state:?}; operation needs {needed:?}")]
    WrongState { subtask: SubtaskId, state: SubtaskState, needed: SubtaskState },
    #[error("package leader {0} is not a registered committee member")]
    UnknownCommitteeMember(crate::ids::CommitteeId),
    #[error("leader signature check failed")]
    BadLeaderSignature,
    #[error("group signature check failed")]
    BadGroupSignature,
    #[error("package carries {got} signers; the task threshold is {want}")]
    WrongSignerCount { got: usize, want: usize },
    #[error("signer index {0} is not part of the selected set")]
    ForeignSigner(u32),
    #[error("no latency mean registered for {0}/{1}; worst-only needs one")]
    MissingLatencyMean(NodeId, SourceId),
    #[error("no subtask settled; nothing to aggregate")]
    NoSettledSubtasks,
    #[error("no value holds a strict majority of the settled subtasks")]
    NoConsensus,
    #[error("settled message is not an observation payload: {0}")]
    UndecodableValue(WireError),
    #[error("key generation failed: {0}")]
    KeyDealing(#[from] threshold::ThresholdError),
}

/// Static wiring of a contract instance.
pub struct ContractConfig {
    /// Registered oracle nodes.
    pub nodes: Vec<NodeId>,
    /// Public keys of the committee replicas allowed to sign packages.
    pub committee_keys: BTreeMap<crate::ids::CommitteeId, BigUint>,
    /// Group profile used when dealing task keys.
    pub profile: ParamsProfile,
    pub qos: QosParams,
    pub strategy: SelectionStrategy,
    /// True mean latencies, required by the worst-only baseline.
    pub latency_means: BTreeMap<(NodeId, SourceId), f64>,
}

/// The contract state machine. See the module docs for the lifecycle.
pub struct OracleContract {
    nodes: Vec<NodeId>,
    committee_keys: BTreeMap<crate::ids::CommitteeId, BigUint>,
    profile: ParamsProfile,
    qos_params: QosParams,
    strategy: SelectionStrategy,
    latency_means: BTreeMap<(NodeId, SourceId), f64>,
    qos: BTreeMap<(NodeId, SourceId), QosRecord>,
    requests: BTreeMap<RequestId, Request>,
    subtasks: BTreeMap<SubtaskId, Subtask>,
    next_request: u64,
}

impl OracleContract {
    pub fn new(config: ContractConfig) -> Self {
        let mut nodes = config.nodes;
        nodes.sort_unstable();
        nodes.dedup();
        Self {
            nodes,
            committee_keys: config.committee_keys,
            profile: config.profile,
            qos_params: config.qos,
            strategy: config.strategy,
            latency_means: config.latency_means,
            qos: BTreeMap::new(),
            requests: BTreeMap::new(),
            subtasks: BTreeMap::new(),
            next_request: 0,
        }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn qos_params(&self) -> QosParams {
        self.qos_params
    }

    pub fn strategy(&self) -> SelectionStrategy {
        self.strategy
    }

    /// Current QoS of a node for a source (initial value if never selected).
    pub fn qos_value(&self, node: NodeId, source: SourceId) -> f64 {
        self.qos.get(&(node, source)).map_or(self.qos_params.initial, |r| r.qos)
    }

    pub fn qos_record(&self, node: NodeId, source: SourceId) -> Option<&QosRecord> {
        self.qos.get(&(node, source))
    }

    pub fn subtask_state(&self, task: SubtaskId) -> Option<SubtaskState> {
        self.subtasks.get(&task).map(|s| s.state)
    }

    pub fn selected_nodes(&self, task: SubtaskId) -> Option<&[NodeId]> {
        self.subtasks.get(&task).map(|s| s.selected.as_slice())
    }

    pub fn settlement(&self, task: SubtaskId) -> Option<&Settlement> {
        self.subtasks.get(&task).and_then(|s| s.settlement.as_ref())
    }

    pub fn subtasks_of(&self, request: RequestId) -> Vec<SubtaskId> {
        self.requests.get(&request).map_or_else(Vec::new, |r| {
            (0..r.sources.len() as u32).map(|o| SubtaskId::new(request, o)).collect()
        })
    }

    /// Opens a request: one subtask per source, all in `Selecting` state.
    ///
    /// `entropy` seeds both node selection and key dealing for every subtask
    /// of this request.
    pub fn submit_request(
        &mut self,
        sources: &[SourceId],
        nodes_per_source: usize,
        threshold: usize,
        entropy: u64,
        dispatch_ms: f64,
        deadline_ms: f64,
    ) -> Result<RequestId, ContractError> {
        if sources.is_empty() {
            return Err(ContractError::EmptySources);
        }
        let mut seen = BTreeSet::new();
        for source in sources {
            if !seen.insert(*source) {
                return Err(ContractError::DuplicateSource(*source));
            }
        }
        if threshold == 0 || threshold > nodes_per_source {
            return Err(ContractError::BadThreshold { threshold, nodes_per_source });
        }
        if nodes_per_source > self.nodes.len() {
            return Err(ContractError::NotEnoughNodes {
                pool: self.nodes.len(),
                wanted: nodes_per_source,
            });
        }
        let id = RequestId(self.next_request);
        self.next_request += 1;
        self.requests.insert(
            id,
            Request {
                sources: sources.to_vec(),
                nodes_per_source,
                threshold,
                entropy,
                dispatch_ms,
                deadline_ms,
            },
        );
        for (ordinal, source) in sources.iter().enumerate() {
            self.subtasks.insert(
                SubtaskId::new(id, ordinal as u32),
                Subtask {
                    source: *source,
                    state: SubtaskState::Selecting,
                    selected: Vec::new(),
                    group_key: None,
                    params: None,
                    settlement: None,
                },
            );
        }
        Ok(id)
    }

    /// Draws the working set for one subtask and deals its one-time keys.
    ///
    /// Weighted selection uses weights `max(QoS, weight_floor)`; the uniform
    /// baseline uses equal weights; the worst-only baseline deterministically
    /// picks the largest registered true mean latencies. Every selected node
    /// is charged one selection (`c + 1`).
    pub fn select_nodes(&mut self, task: SubtaskId) -> Result<SelectionOutcome, ContractError> {
        let request =
            self.requests.get(&task.request).ok_or(ContractError::UnknownRequest(task.request))?;
        let (n, m, entropy) = (request.nodes_per_source, request.threshold, request.entropy);
        let subtask =
            self.subtasks.get(&task).ok_or(ContractError::UnknownSubtask(task))?;
        if subtask.state != SubtaskState::Selecting {
            return Err(ContractError::WrongState {
                subtask: task,
                state: subtask.state,
                needed: SubtaskState::Selecting,
            });
        }
        let source = subtask.source;

        let mut selected: Vec<NodeId> = match self.strategy {
            SelectionStrategy::Weighted | SelectionStrategy::Random => {
                let items: Vec<WeightedItem<NodeId>> = self
                    .nodes
                    .iter()
                    .map(|node| WeightedItem {
                        id: *node,
                        weight: match self.strategy {
                            SelectionStrategy::Weighted => self
                                .qos_value(*node, source)
                                .max(self.qos_params.weight_floor),
                            _ => 1.0,
                        },
                    })
                    .collect();
                let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(
                    entropy,
                    "select",
                    u64::from(task.ordinal),
                ));
                a_expj_sample(items, n, &mut rng).expect("positive weights by construction")
            }
            SelectionStrategy::WorstOnly => {
                let mut ranked: Vec<(f64, NodeId)> = Vec::with_capacity(self.nodes.len());
                for node in &self.nodes {
                    let mean = self
                        .latency_means
                        .get(&(*node, source))
                        .copied()
                        .ok_or(ContractError::MissingLatencyMean(*node, source))?;
                    ranked.push((mean, *node));
                }
                ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                ranked.truncate(n);
                ranked.into_iter().map(|(_, node)| node).collect()
            }
        };
        selected.sort_unstable();

        let params = self.profile.build(m, n)?;
        let keys = threshold::generate(
            &params,
            derive_seed(entropy, "dkg", u64::from(task.ordinal)),
        );

        for node in &selected {
            let record = self.qos.entry((*node, source)).or_insert(QosRecord {
                selected: 0,
                aggregated: 0,
                last_timeliness: None,
                qos: self.qos_params.initial,
            });
            record.selected += 1;
        }
        let subtask = self.subtasks.get_mut(&task).expect("checked above");
        subtask.selected = selected.clone();
        subtask.group_key = Some(keys.group_key.clone());
        subtask.params = Some(params.clone());
        subtask.state = SubtaskState::Pending;

        Ok(SelectionOutcome { selected, params, keys })
    }

    /// Verifies and applies a committee package.
    ///
    /// A package for an already-resolved subtask is ignored (leader changes
    /// can legitimately produce duplicates). Any verification failure leaves
    /// the subtask `Pending` and reports an error.
    pub fn settle(
        &mut self,
        package: &CommitteePackage,
        now: f64,
    ) -> Result<SettleOutcome, ContractError> {
        let task = package.task;
        let request =
            self.requests.get(&task.request).ok_or(ContractError::UnknownRequest(task.request))?;
        let (threshold, dispatch_ms) = (request.threshold, request.dispatch_ms);
        let subtask = self.subtasks.get(&task).ok_or(ContractError::UnknownSubtask(task))?;
        match subtask.state {
            SubtaskState::Settled | SubtaskState::TimedOut => {
                return Ok(SettleOutcome::AlreadyResolved)
            }
            SubtaskState::Selecting => {
                return Err(ContractError::WrongState {
                    subtask: task,
                    state: subtask.state,
                    needed: SubtaskState::Pending,
                })
            }
            SubtaskState::Pending => {}
        }
        let params = subtask.params.as_ref().expect("pending implies keys dealt");
        let group_key = subtask.group_key.as_ref().expect("pending implies keys dealt");

        let leader_key = self
            .committee_keys
            .get(&package.leader)
            .ok_or(ContractError::UnknownCommitteeMember(package.leader))?;
        if !threshold::leader_verify(&package.signing_bytes(), &package.leader_sig, leader_key, params)
        {
            return Err(ContractError::BadLeaderSignature);
        }
        if !threshold::verify(&package.msg, group_key, &package.group_sig, params) {
            return Err(ContractError::BadGroupSignature);
        }
        if package.response_times.len() != threshold {
            return Err(ContractError::WrongSignerCount {
                got: package.response_times.len(),
                want: threshold,
            });
        }
        let mut seen = BTreeSet::new();
        let mut aggregated: Vec<(NodeId, f64)> = Vec::with_capacity(threshold);
        for (signer, t) in &package.response_times {
            let index = *signer as usize;
            if index == 0 || index > subtask.selected.len() || !seen.insert(*signer) {
                return Err(ContractError::ForeignSigner(*signer));
            }
            aggregated.push((subtask.selected[index - 1], *t));
        }

        let source = subtask.source;
        let selected = subtask.selected.clone();
        let mut nodes: Vec<NodeId> = aggregated.iter().map(|(n, _)| *n).collect();
        nodes.sort_unstable();
        let settlement = Settlement {
            settle_ms: now,
            response_ms: now - dispatch_ms,
            msg: package.msg.clone(),
            value: decode_observation(&package.msg).ok().map(|(_, epoch)| epoch),
            aggregated: nodes,
        };
        let subtask = self.subtasks.get_mut(&task).expect("checked above");
        subtask.state = SubtaskState::Settled;
        subtask.settlement = Some(settlement);

        self.apply_feedback(source, &selected, &aggregated);
        Ok(SettleOutcome::Settled { response_ms: now - dispatch_ms })
    }

    /// Deadline handler: a still-pending subtask times out and every selected
    /// node is scored with zero timeliness and no accuracy credit.
    pub fn expire(&mut self, task: SubtaskId, _now: f64) -> Result<TimeoutOutcome, ContractError> {
        let subtask = self.subtasks.get_mut(&task).ok_or(ContractError::UnknownSubtask(task))?;
        match subtask.state {
            SubtaskState::Settled | SubtaskState::TimedOut => Ok(TimeoutOutcome::AlreadyResolved),
            SubtaskState::Selecting => {
                subtask.state = SubtaskState::TimedOut;
                Ok(TimeoutOutcome::TimedOut)
            }
            SubtaskState::Pending => {
                subtask.state = SubtaskState::TimedOut;
                let source = subtask.source;
                let selected = subtask.selected.clone();
                self.apply_feedback(source, &selected, &[]);
                Ok(TimeoutOutcome::TimedOut)
            }
        }
    }

    /// Recomputes QoS for every selected node of a resolved subtask.
    /// `aggregated` lists `(node, response time)` for the aggregated signers;
    /// an empty list models a timeout.
    fn apply_feedback(
        &mut self,
        source: SourceId,
        selected: &[NodeId],
        aggregated: &[(NodeId, f64)],
    ) {
        let times: Vec<f64> = aggregated.iter().map(|(_, t)| *t).collect();
        let t_delay = self.qos_params.delay_ceiling(&times);
        for node in selected {
            let timeliness = match aggregated.iter().find(|(n, _)| n == node) {
                Some((_, t)) => self.qos_params.timeliness(*t, t_delay),
                None => 0.0,
            };
            let record = self.qos.get_mut(&(*node, source)).expect("selected implies record");
            if aggregated.iter().any(|(n, _)| n == node) {
                record.aggregated += 1;
            }
            debug_assert!(record.aggregated <= record.selected);
            let accuracy = record.aggregated as f64 / record.selected as f64;
            record.last_timeliness = Some(timeliness);
            record.qos = self.qos_params.blend(timeliness, accuracy);
        }
    }

    /// Folds the settled subtask values of a request into one value.
    pub fn aggregate_multi_source(
        &self,
        request: RequestId,
        strategy: AggregationStrategy,
    ) -> Result<u64, ContractError> {
        self.requests.get(&request).ok_or(ContractError::UnknownRequest(request))?;
        let mut settled: Vec<(u32, &Settlement)> = Vec::new();
        for task in self.subtasks_of(request) {
            let subtask = &self.subtasks[&task];
            match subtask.state {
                SubtaskState::Settled => {
                    settled.push((task.ordinal, subtask.settlement.as_ref().expect("settled")));
                }
                SubtaskState::TimedOut => {}
                state => {
                    return Err(ContractError::WrongState {
                        subtask: task,
                        state,
                        needed: SubtaskState::Settled,
                    })
                }
            }
        }
        if settled.is_empty() {
            return Err(ContractError::NoSettledSubtasks);
        }
        let decode = |s: &Settlement| -> Result<u64, ContractError> {
            decode_observation(&s.msg).map(|(_, v)| v).map_err(ContractError::UndecodableValue)
        };
        match strategy {
            AggregationStrategy::Median => {
                let mut values = settled
                    .iter()
                    .map(|(_, s)| decode(s))
                    .collect::<Result<Vec<u64>, _>>()?;
                values.sort_unstable();
                Ok(values[(values.len() - 1) / 2])
            }
            AggregationStrategy::Majority => {
                let mut groups: BTreeMap<&[u8], usize> = BTreeMap::new();
                for (_, s) in &settled {
                    *groups.entry(s.msg.as_slice()).or_insert(0) += 1;
                }
                let (winner, count) =
                    groups.iter().max_by_key(|(_, c)| **c).expect("non-empty");
                if *count * 2 > settled.len() {
                    let settlement = settled
                        .iter()
                        .find(|(_, s)| s.msg.as_slice() == *winner)
                        .expect("winner present");
                    decode(settlement.1)
                } else {
                    Err(ContractError::NoConsensus)
                }
            }
            AggregationStrategy::FirstSettled => {
                let (_, first) = settled
                    .iter()
                    .min_by(|(oa, sa), (ob, sb)| {
                        sa.settle_ms.total_cmp(&sb.settle_ms).then(oa.cmp(ob))
                    })
                    .expect("non-empty");
                decode(first)
            }
        }
    }

    /// QoS table as CSV with one row per (node, source) that was ever
    /// selected, ordered by node then source.
    pub fn qos_csv(&self) -> String {
        let mut out = String::from("node,source,c,h,accuracy,last_t,qos\n");
        for ((node, source), record) in &self.qos {
            let accuracy = if record.selected > 0 {
                record.aggregated as f64 / record.selected as f64
            } else {
                0.0
            };
            let last = record.last_timeliness.map_or(String::from(""), |t| format!("{t:.6}"));
            out.push_str(&format!(
                "{},{},{},{},{:.6},{},{:.6}\n",
                node.0, source.0, record.selected, record.aggregated, accuracy, last, record.qos
            ));
        }
        out
    }

    /// Full contract state as pretty JSON (requests, subtasks, QoS table).
    pub fn state_json(&self) -> String {
        #[derive(Serialize)]
        struct SubtaskView {
            subtask: String,
            source: u32,
            state: SubtaskState,
            selected: Vec<u32>,
            response_ms: Option<f64>,
            value: Option<u64>,
            aggregated: Vec<u32>,
        }
        #[derive(Serialize)]
        struct RequestView {
            request: u64,
            nodes_per_source: usize,
            threshold: usize,
            dispatch_ms: f64,
            deadline_ms: f64,
            subtasks: Vec<SubtaskView>,
        }
        #[derive(Serialize)]
        struct QosView {
            node: u32,
            source: u32,
            c: u64,
            h: u64,
            last_t: Option<f64>,
            qos: f64,
        }
        #[derive(Serialize)]
        struct StateView {
            nodes: Vec<u32>,
            requests: Vec<RequestView>,
            qos: Vec<QosView>,
        }

        let requests = self
            .requests
            .iter()
            .map(|(id, request)| RequestView {
                request: id.0,
                nodes_per_source: request.nodes_per_source,
                threshold: request.threshold,
                dispatch_ms: request.dispatch_ms,
                deadline_ms: request.deadline_ms,
                subtasks: self
                    .subtasks_of(*id)
                    .into_iter()
                    .map(|task| {
                        let s = &self.subtasks[&task];
                        SubtaskView {
                            subtask: task.to_string(),
                            source: s.source.0,
                            state: s.state,
                            selected: s.selected.iter().map(|n| n.0).collect(),
                            response_ms: s.settlement.as_ref().map(|x| x.response_ms),
                            value: s.settlement.as_ref().and_then(|x| x.value),
                            aggregated: s
                                .settlement
                                .as_ref()
                                .map_or_else(Vec::new, |x| {
                                    x.aggregated.iter().map(|n| n.0).collect()
                                }),
                        }
                    })
                    .collect(),
            })
            .collect();
        let qos = self
            .qos
            .iter()
            .map(|((node, source), r)| QosView {
                node: node.0,
                source: source.0,
                c: r.selected,
                h: r.aggregated,
                last_t: r.last_timeliness,
                qos: r.qos,
            })
            .collect();
        let view = StateView {
            nodes: self.nodes.iter().map(|n| n.0).collect(),
            requests,
            qos,
        };
        serde_json::to_string_pretty(&view).expect("view serializes")
    }
}

/// Encodes a fetched observation: which source was read and the epoch value.
pub fn encode_observation(source: SourceId, epoch: u64) -> Vec<u8> {
    let mut inner = Writer::new();
    inner.put_uint(tag::UINT, u64::from(source.0));
    inner.put_uint(tag::UINT, epoch);
    let mut w = Writer::new();
    w.put_nested(tag::OBSERVATION, &inner.finish());
    w.finish()
}

/// Inverse of [`encode_observation`].
pub fn decode_observation(bytes: &[u8]) -> Result<(SourceId, u64), WireError> {
    let mut outer = Reader::new(bytes);
    let inner = outer.take(tag::OBSERVATION)?;
    outer.expect_end()?;
    let mut r = Reader::new(inner);
    let source = SourceId(r.take_uint(tag::UINT)? as u32);
    let epoch = r.take_uint(tag::UINT)?;
    r.expect_end()?;
    Ok((source, epoch))
}
