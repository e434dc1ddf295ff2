//! Deterministic discrete-event simulator for the full oracle pipeline.
//!
//! One run drives: task dispatch -> QoS-weighted node selection and one-time
//! key dealing -> per-node fetch latency draws (truncated normal) -> value
//! read at fetch completion -> partial signing -> fragment broadcast to the
//! committee -> replicated aggregation -> leader-signed package -> contract
//! settlement -> QoS feedback. Everything is driven by a single event queue
//! ordered by `(timestamp, insertion sequence)`, so identical `(scenario,
//! seed)` inputs produce byte-identical traces.
//!
//! Faithfulness notes:
//!
//! * Fetch latencies are normal draws re-drawn until positive, and the value
//!   read is the source epoch at the *completion* clock, which makes
//!   "agreeing fragments" exactly "fetches completing in one period".
//! * A node that is down at dispatch never fetches; a node that goes down
//!   before its fetch completes loses the response. Deadlines resolve such
//!   tasks.
//! * Oracle nodes re-broadcast their signed fragment periodically until the
//!   task resolves, so fragments survive committee leader changes.
//! * All message hops (node -> replica, replica -> replica, replica ->
//!   contract) traverse the wire encoding and share one configurable link
//!   latency.

pub mod config;

pub use config::{Scenario, ScenarioError};

use crate::batch::derive_seed;
use crate::committee::{
    CommitteeConfig, CommitteeNode, CommitteePackage, Effect, Message, TaskRegistration,
};
use crate::contract::{
    encode_observation, ContractConfig, OracleContract, SettleOutcome, SubtaskState,
    TimeoutOutcome,
};
use crate::ids::{CommitteeId, NodeId, SourceId, SubtaskId};
use crate::threshold::{self, KeyShare, PartialSignature, SchemeParams};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

/// What a run should collect beyond the per-task outcomes.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Record one JSON line per processed event (plus consequence lines).
    pub collect_trace: bool,
    /// Record the QoS of every node after each task resolution.
    pub collect_qos_trajectory: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { collect_trace: true, collect_qos_trajectory: false }
    }
}

/// How one subtask ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    Settled { settle_ms: f64, response_ms: f64, value: Option<u64>, aggregated: Vec<NodeId> },
    TimedOut,
    /// Only possible when the run hit the `max_sim_ms` guard.
    Unresolved,
}

/// Everything recorded about one subtask.
#[derive(Debug, Clone)]
pub struct SubtaskOutcome {
    pub task: SubtaskId,
    /// Dispatch-order index of the parent request.
    pub task_index: u64,
    pub source: SourceId,
    pub dispatch_ms: f64,
    pub resolution: Resolution,
    /// `(node, completion - dispatch)` for every fetch that completed, in
    /// completion order — including completions after resolution.
    pub fetch_offsets: Vec<(NodeId, f64)>,
}

impl SubtaskOutcome {
    pub fn settled(&self) -> bool {
        matches!(self.resolution, Resolution::Settled { .. })
    }

    pub fn response_ms(&self) -> Option<f64> {
        match &self.resolution {
            Resolution::Settled { response_ms, .. } => Some(*response_ms),
            _ => None,
        }
    }
}

/// QoS of one node right after a task resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosTraceRow {
    pub task_index: u64,
    pub node: NodeId,
    pub source: SourceId,
    pub qos: f64,
    /// Whether this node's fragment was aggregated in this task.
    pub aggregated: bool,
}

/// A leader election observed during the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectionRecord {
    pub at_ms: f64,
    pub term: u64,
    pub replica: CommitteeId,
}

/// Result of one simulation run.
pub struct RunReport {
    pub seed: u64,
    /// Per-subtask outcomes in dispatch order.
    pub outcomes: Vec<SubtaskOutcome>,
    pub qos_rows: Vec<QosTraceRow>,
    /// JSON lines, one per processed event (empty unless requested).
    pub trace: Vec<String>,
    pub elections: Vec<ElectionRecord>,
    /// Final contract state (QoS table, settlements, exports).
    pub contract: OracleContract,
    /// True when the virtual-clock guard stopped the run early.
    pub reached_time_guard: bool,
    pub final_clock_ms: f64,
}

impl RunReport {
    /// Election safety: at most one leader may ever win a given term.
    pub fn election_safety_ok(&self) -> bool {
        let mut winners: BTreeMap<u64, CommitteeId> = BTreeMap::new();
        for election in &self.elections {
            if let Some(previous) = winners.insert(election.term, election.replica) {
                if previous != election.replica {
                    return false;
                }
            }
        }
        true
    }

    pub fn settled_count(&self) -> usize {
        self.outcomes.iter().filter(|o| o.settled()).count()
    }

    pub fn settled_fraction(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.settled_count() as f64 / self.outcomes.len() as f64
    }

    /// The full trace as one newline-terminated string.
    pub fn trace_text(&self) -> String {
        let mut text = String::new();
        for line in &self.trace {
            text.push_str(line);
            text.push('\n');
        }
        text
    }
}

/// Validates the scenario and simulates it to quiescence (every subtask
/// resolved) or to the virtual-clock guard.
pub fn run(scenario: &Scenario, seed: u64, options: &RunOptions) -> Result<RunReport, ScenarioError> {
    scenario.validate()?;
    let mut sim = Simulation::new(scenario, seed, options.clone());
    sim.seed_initial_events();
    sim.run_loop();
    Ok(sim.into_report())
}

#[derive(Debug)]
enum Event {
    TaskDispatch { index: u64 },
    FetchComplete { task: SubtaskId, node: NodeId },
    /// Delivery of an oracle-node message (fragment or registration) to one replica.
    FragmentArrive { replica: CommitteeId, bytes: Vec<u8> },
    /// Delivery of a replica-to-replica protocol message.
    CommitteeMsg { replica: CommitteeId, bytes: Vec<u8> },
    CommitteeTimer { replica: CommitteeId, kind: TimerKind, generation: u64 },
    /// Delivery of an encoded package to the contract.
    PackageDeliver { bytes: Vec<u8> },
    Deadline { task: SubtaskId },
    /// Periodic re-broadcast check for one node's fragment.
    ResubmitCheck { task: SubtaskId, node: NodeId },
    NodeCrash { node: NodeId },
    NodeRecover { node: NodeId },
    ReplicaCrash { replica: CommitteeId },
    ReplicaRecover { replica: CommitteeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimerKind {
    Election,
    Heartbeat,
}

struct Queued {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.time.total_cmp(&other.time).is_eq() && self.seq == other.seq
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

struct ActiveTask {
    params: SchemeParams,
    shares: BTreeMap<NodeId, KeyShare>,
    /// Signed fragment per node, kept for resubmission.
    signed: BTreeMap<NodeId, (PartialSignature, Vec<u8>)>,
    source: SourceId,
    dispatch_ms: f64,
}

struct TaskMeta {
    index: u64,
    source: SourceId,
    dispatch_ms: f64,
    offsets: Vec<(NodeId, f64)>,
}

struct Simulation<'a> {
    scenario: &'a Scenario,
    options: RunOptions,
    seed: u64,
    clock: f64,
    seq: u64,
    queue: BinaryHeap<Reverse<Queued>>,
    contract: OracleContract,
    committee: Vec<CommitteeNode>,
    node_up: BTreeMap<NodeId, bool>,
    active: BTreeMap<SubtaskId, ActiveTask>,
    meta: BTreeMap<SubtaskId, TaskMeta>,
    latency_rng: ChaCha20Rng,
    dispatched: u64,
    resolved: u64,
    expected: u64,
    trace: Vec<String>,
    qos_rows: Vec<QosTraceRow>,
    elections: Vec<ElectionRecord>,
    reached_guard: bool,
}

impl<'a> Simulation<'a> {
    fn new(scenario: &'a Scenario, seed: u64, options: RunOptions) -> Self {
        let profile = scenario.crypto;
        let leader_params = profile.build(1, 1).expect("profile groups are valid");
        let committee_size = scenario.committee.size;
        let keypairs: Vec<_> = (0..committee_size)
            .map(|replica| {
                threshold::leader_keygen(
                    &leader_params,
                    derive_seed(seed, "committee-key", replica as u64),
                )
            })
            .collect();
        let committee_keys = keypairs
            .iter()
            .enumerate()
            .map(|(replica, kp)| (CommitteeId(replica as u32), kp.public.clone()))
            .collect();

        let contract = OracleContract::new(ContractConfig {
            nodes: scenario.node_ids(),
            committee_keys,
            profile,
            qos: scenario.qos,
            strategy: scenario.selection,
            latency_means: scenario.latency_means(),
        });

        let node_up = scenario.node_ids().into_iter().map(|n| (n, true)).collect();
        Self {
            scenario,
            options,
            seed,
            clock: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
            contract,
            committee: Vec::with_capacity(committee_size),
            node_up,
            active: BTreeMap::new(),
            meta: BTreeMap::new(),
            latency_rng: ChaCha20Rng::seed_from_u64(derive_seed(seed, "latency", 0)),
            dispatched: 0,
            resolved: 0,
            expected: scenario.tasks.count * scenario.tasks.sources.len() as u64,
            trace: Vec::new(),
            qos_rows: Vec::new(),
            elections: Vec::new(),
            reached_guard: false,
        }
        .with_committee(keypairs)
    }

    fn with_committee(mut self, keypairs: Vec<threshold::LeaderKeypair>) -> Self {
        let config = CommitteeConfig {
            size: self.scenario.committee.size,
            election_timeout_ms: self.scenario.committee.election_timeout_ms,
            heartbeat_ms: self.scenario.committee.heartbeat_ms,
        };
        for (replica, keypair) in keypairs.into_iter().enumerate() {
            let id = CommitteeId(replica as u32);
            let (node, effects) = CommitteeNode::new(
                id,
                config.clone(),
                self.scenario.crypto,
                keypair,
                derive_seed(self.seed, "committee-rng", replica as u64),
            );
            self.committee.push(node);
            self.apply_effects(id, effects);
        }
        self
    }

    fn schedule(&mut self, time: f64, event: Event) {
        debug_assert!(
            time >= self.clock,
            "event scheduled into the past: {time} < {}",
            self.clock
        );
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Queued { time, seq, event }));
    }

    fn seed_initial_events(&mut self) {
        let tasks = &self.scenario.tasks;
        for index in 0..tasks.count {
            let at = tasks.first_dispatch_ms + index as f64 * tasks.interval_ms;
            self.schedule(at, Event::TaskDispatch { index });
        }
        for node in &self.scenario.nodes {
            for (start, end) in &node.down {
                self.schedule(*start, Event::NodeCrash { node: NodeId(node.id) });
                self.schedule(*end, Event::NodeRecover { node: NodeId(node.id) });
            }
        }
        for down in &self.scenario.committee.down {
            for (start, end) in &down.intervals {
                self.schedule(*start, Event::ReplicaCrash { replica: CommitteeId(down.replica) });
                self.schedule(*end, Event::ReplicaRecover { replica: CommitteeId(down.replica) });
            }
        }
    }

    fn run_loop(&mut self) {
        loop {
            if self.dispatched == self.scenario.tasks.count && self.resolved == self.expected {
                break;
            }
            let Some(Reverse(queued)) = self.queue.pop() else { break };
            if queued.time > self.scenario.max_sim_ms {
                self.reached_guard = true;
                break;
            }
            debug_assert!(queued.time >= self.clock, "queue must be time-ordered");
            self.clock = queued.time;
            self.process(queued);
        }
    }

    fn process(&mut self, queued: Queued) {
        let now = queued.time;
        match queued.event {
            Event::TaskDispatch { index } => {
                self.trace_line(now, queued.seq, "task_dispatch", json!({ "task_index": index }));
                self.dispatch_task(now, index);
            }
            Event::FetchComplete { task, node } => {
                self.fetch_complete(now, queued.seq, task, node);
            }
            Event::FragmentArrive { replica, bytes } => {
                if self.options.collect_trace {
                    let kind = peek_kind(&bytes);
                    self.trace_line(
                        now,
                        queued.seq,
                        "fragment_arrive",
                        json!({ "replica": replica.0, "payload": kind }),
                    );
                }
                self.deliver_committee(now, replica, &bytes);
            }
            Event::CommitteeMsg { replica, bytes } => {
                if self.options.collect_trace {
                    let kind = peek_kind(&bytes);
                    self.trace_line(
                        now,
                        queued.seq,
                        "committee_msg",
                        json!({ "replica": replica.0, "payload": kind }),
                    );
                }
                self.deliver_committee(now, replica, &bytes);
            }
            Event::CommitteeTimer { replica, kind, generation } => {
                if self.options.collect_trace {
                    let name = match kind {
                        TimerKind::Election => "election_timer",
                        TimerKind::Heartbeat => "heartbeat_timer",
                    };
                    self.trace_line(
                        now,
                        queued.seq,
                        "committee_msg",
                        json!({ "replica": replica.0, "payload": name }),
                    );
                }
                let node = &mut self.committee[replica.0 as usize];
                let effects = match kind {
                    TimerKind::Election => node.on_election_timer(now, generation),
                    TimerKind::Heartbeat => node.on_heartbeat_timer(now, generation),
                };
                self.apply_effects(replica, effects);
            }
            Event::PackageDeliver { bytes } => {
                let package = CommitteePackage::decode(&bytes).expect("internal encoding");
                self.settle_package(now, queued.seq, package);
            }
            Event::Deadline { task } => {
                self.trace_line(now, queued.seq, "deadline", json!({ "task": task.to_string() }));
                match self.contract.expire(task, now) {
                    Ok(TimeoutOutcome::TimedOut) => {
                        self.resolved += 1;
                        self.trace_line(
                            now,
                            queued.seq,
                            "timed_out",
                            json!({ "task": task.to_string() }),
                        );
                        self.record_qos_rows(task);
                    }
                    Ok(TimeoutOutcome::AlreadyResolved) => {}
                    Err(error) => unreachable!("deadline on validated task: {error}"),
                }
            }
            Event::ResubmitCheck { task, node } => {
                self.resubmit_check(now, task, node);
            }
            Event::NodeCrash { node } => {
                self.trace_line(now, queued.seq, "node_crash", json!({ "node": node.0 }));
                self.node_up.insert(node, false);
            }
            Event::NodeRecover { node } => {
                self.trace_line(now, queued.seq, "node_recover", json!({ "node": node.0 }));
                self.node_up.insert(node, true);
            }
            Event::ReplicaCrash { replica } => {
                self.trace_line(now, queued.seq, "node_crash", json!({ "replica": replica.0 }));
                self.committee[replica.0 as usize].crash();
            }
            Event::ReplicaRecover { replica } => {
                self.trace_line(now, queued.seq, "node_recover", json!({ "replica": replica.0 }));
                let effects = self.committee[replica.0 as usize].recover();
                self.apply_effects(replica, effects);
            }
        }
    }

    fn dispatch_task(&mut self, now: f64, index: u64) {
        self.dispatched += 1;
        let scenario = self.scenario;
        let sources = scenario.task_sources();
        let entropy = derive_seed(self.seed, "task", index);
        let deadline = now + scenario.effective_deadline_ms();
        let request = self
            .contract
            .submit_request(
                &sources,
                scenario.tasks.nodes_per_task,
                scenario.tasks.threshold,
                entropy,
                now,
                deadline,
            )
            .expect("scenario validated");

        for (ordinal, source) in sources.iter().enumerate() {
            let task = SubtaskId::new(request, ordinal as u32);
            let outcome = self.contract.select_nodes(task).expect("scenario validated");
            self.meta.insert(
                task,
                TaskMeta { index, source: *source, dispatch_ms: now, offsets: Vec::new() },
            );

            let registration = TaskRegistration {
                task,
                profile: scenario.crypto,
                threshold: scenario.tasks.threshold,
                members: scenario.tasks.nodes_per_task,
                group_key: outcome.keys.group_key.clone(),
                share_publics: outcome.keys.share_publics(),
                dispatch_ms: now,
            };
            let bytes = Message::RegisterTask(registration).encode();
            let link = scenario.committee.link_latency_ms;
            for replica in 0..scenario.committee.size {
                self.schedule(
                    now + link,
                    Event::FragmentArrive { replica: CommitteeId(replica as u32), bytes: bytes.clone() },
                );
            }

            let mut shares = BTreeMap::new();
            for (position, node) in outcome.selected.iter().enumerate() {
                shares.insert(*node, outcome.keys.shares[position].clone());
                if self.node_up[node] {
                    let (mean, std) =
                        scenario.latency(*node, *source).expect("scenario validated");
                    let latency = draw_positive_normal(&mut self.latency_rng, mean, std);
                    self.schedule(now + latency, Event::FetchComplete { task, node: *node });
                }
            }
            self.active.insert(
                task,
                ActiveTask {
                    params: outcome.params,
                    shares,
                    signed: BTreeMap::new(),
                    source: *source,
                    dispatch_ms: now,
                },
            );
            self.schedule(deadline, Event::Deadline { task });
        }
    }

    fn fetch_complete(&mut self, now: f64, seq: u64, task: SubtaskId, node: NodeId) {
        if !self.node_up[&node] {
            self.trace_line(
                now,
                seq,
                "fetch_complete",
                json!({ "task": task.to_string(), "node": node.0, "lost": true }),
            );
            return;
        }
        let Some(active) = self.active.get_mut(&task) else { return };
        let offset = now - active.dispatch_ms;
        if let Some(meta) = self.meta.get_mut(&task) {
            meta.offsets.push((node, offset));
        }

        let period = self.scenario.period_ms(active.source).expect("scenario validated");
        let epoch = (now / period).floor() as u64;
        let msg = encode_observation(active.source, epoch);
        let share = active.shares.get(&node).expect("selected node holds a share");
        let partial = threshold::partial_sign(&msg, share, &active.params);
        active.signed.insert(node, (partial.clone(), msg.clone()));

        self.trace_line(
            now,
            seq,
            "fetch_complete",
            json!({
                "task": task.to_string(),
                "node": node.0,
                "offset_ms": offset,
                "epoch": epoch
            }),
        );

        if self.contract.subtask_state(task) == Some(SubtaskState::Pending) {
            self.broadcast_fragment(now, task, &partial, &msg);
            self.schedule(
                now + self.scenario.committee.resubmit_ms,
                Event::ResubmitCheck { task, node },
            );
        }
    }

    fn resubmit_check(&mut self, now: f64, task: SubtaskId, node: NodeId) {
        if self.contract.subtask_state(task) != Some(SubtaskState::Pending) {
            return;
        }
        if self.node_up[&node] {
            if let Some((partial, msg)) =
                self.active.get(&task).and_then(|a| a.signed.get(&node)).cloned()
            {
                self.broadcast_fragment(now, task, &partial, &msg);
            }
        }
        self.schedule(
            now + self.scenario.committee.resubmit_ms,
            Event::ResubmitCheck { task, node },
        );
    }

    fn broadcast_fragment(&mut self, now: f64, task: SubtaskId, partial: &PartialSignature, msg: &[u8]) {
        let bytes = Message::SubmitFragment {
            task,
            partial: partial.clone(),
            msg: msg.to_vec(),
        }
        .encode();
        let link = self.scenario.committee.link_latency_ms;
        for replica in 0..self.scenario.committee.size {
            self.schedule(
                now + link,
                Event::FragmentArrive { replica: CommitteeId(replica as u32), bytes: bytes.clone() },
            );
        }
    }

    fn deliver_committee(&mut self, now: f64, replica: CommitteeId, bytes: &[u8]) {
        let msg = Message::decode(bytes).expect("internal encoding");
        let effects = self.committee[replica.0 as usize].on_message(now, msg);
        self.apply_effects(replica, effects);
    }

    fn apply_effects(&mut self, from: CommitteeId, effects: Vec<Effect>) {
        let now = self.clock;
        let link = self.scenario.committee.link_latency_ms;
        for effect in effects {
            match effect {
                Effect::Send { to, msg } => {
                    let bytes = msg.encode();
                    self.schedule(now + link, Event::CommitteeMsg { replica: to, bytes });
                }
                Effect::Broadcast { msg } => {
                    let bytes = msg.encode();
                    for replica in 0..self.scenario.committee.size as u32 {
                        if replica != from.0 {
                            self.schedule(
                                now + link,
                                Event::CommitteeMsg {
                                    replica: CommitteeId(replica),
                                    bytes: bytes.clone(),
                                },
                            );
                        }
                    }
                }
                Effect::ScheduleElection { after_ms, generation } => {
                    self.schedule(
                        now + after_ms,
                        Event::CommitteeTimer {
                            replica: from,
                            kind: TimerKind::Election,
                            generation,
                        },
                    );
                }
                Effect::ScheduleHeartbeat { after_ms, generation } => {
                    self.schedule(
                        now + after_ms,
                        Event::CommitteeTimer {
                            replica: from,
                            kind: TimerKind::Heartbeat,
                            generation,
                        },
                    );
                }
                Effect::EmitPackage(package) => {
                    self.schedule(now + link, Event::PackageDeliver { bytes: package.encode() });
                }
                Effect::LeaderElected { term } => {
                    self.elections.push(ElectionRecord { at_ms: now, term, replica: from });
                    self.trace_line(
                        now,
                        self.seq,
                        "leader_elected",
                        json!({ "replica": from.0, "term": term }),
                    );
                }
            }
        }
    }

    fn settle_package(&mut self, now: f64, seq: u64, package: CommitteePackage) {
        let task = package.task;
        match self.contract.settle(&package, now) {
            Ok(SettleOutcome::Settled { response_ms }) => {
                self.resolved += 1;
                self.trace_line(
                    now,
                    seq,
                    "settle",
                    json!({
                        "task": task.to_string(),
                        "response_ms": response_ms,
                        "leader": package.leader.0,
                        "signers": package.response_times.iter().map(|(s, _)| *s).collect::<Vec<_>>()
                    }),
                );
                self.record_qos_rows(task);
            }
            Ok(SettleOutcome::AlreadyResolved) => {
                self.trace_line(
                    now,
                    seq,
                    "settle_duplicate",
                    json!({ "task": task.to_string(), "leader": package.leader.0 }),
                );
            }
            Err(error) => {
                self.trace_line(
                    now,
                    seq,
                    "settle_rejected",
                    json!({ "task": task.to_string(), "reason": error.to_string() }),
                );
            }
        }
    }

    fn record_qos_rows(&mut self, task: SubtaskId) {
        if !self.options.collect_qos_trajectory {
            return;
        }
        let Some(meta) = self.meta.get(&task) else { return };
        let aggregated: Vec<NodeId> = self
            .contract
            .settlement(task)
            .map_or_else(Vec::new, |s| s.aggregated.clone());
        for node in self.contract.nodes().to_vec() {
            self.qos_rows.push(QosTraceRow {
                task_index: meta.index,
                node,
                source: meta.source,
                qos: self.contract.qos_value(node, meta.source),
                aggregated: aggregated.contains(&node),
            });
        }
    }

    fn trace_line(&mut self, now: f64, seq: u64, kind: &str, mut payload: serde_json::Value) {
        if !self.options.collect_trace {
            return;
        }
        let object = payload.as_object_mut().expect("trace payloads are objects");
        object.insert("t".into(), json!(now));
        object.insert("seq".into(), json!(seq));
        object.insert("kind".into(), json!(kind));
        self.trace.push(payload.to_string());
    }

    fn into_report(self) -> RunReport {
        let mut outcomes = Vec::with_capacity(self.meta.len());
        for (task, meta) in self.meta {
            let resolution = match self.contract.subtask_state(task) {
                Some(SubtaskState::Settled) => {
                    let s = self.contract.settlement(task).expect("settled");
                    Resolution::Settled {
                        settle_ms: s.settle_ms,
                        response_ms: s.response_ms,
                        value: s.value,
                        aggregated: s.aggregated.clone(),
                    }
                }
                Some(SubtaskState::TimedOut) => Resolution::TimedOut,
                _ => Resolution::Unresolved,
            };
            outcomes.push(SubtaskOutcome {
                task,
                task_index: meta.index,
                source: meta.source,
                dispatch_ms: meta.dispatch_ms,
                resolution,
                fetch_offsets: meta.offsets,
            });
        }
        outcomes.sort_by_key(|o| o.task);
        RunReport {
            seed: self.seed,
            outcomes,
            qos_rows: self.qos_rows,
            trace: self.trace,
            elections: self.elections,
            contract: self.contract,
            reached_time_guard: self.reached_guard,
            final_clock_ms: self.clock,
        }
    }
}

/// One positive draw from N(mean, std^2), re-drawing on non-positive values
/// (truncation without an atom at zero).
fn draw_positive_normal(rng: &mut ChaCha20Rng, mean: f64, std: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let x = mean + std * z;
        if x > 0.0 {
            return x;
        }
    }
}

/// Human-readable payload kind for trace lines, without full decoding.
fn peek_kind(bytes: &[u8]) -> &'static str {
    use crate::wire::tag;
    match bytes.first().copied() {
        Some(tag::VOTE_REQUEST) => "vote_request",
        Some(tag::VOTE_RESPONSE) => "vote_response",
        Some(tag::APPEND_ENTRIES) => "append_entries",
        Some(tag::APPEND_RESPONSE) => "append_response",
        Some(tag::FRAGMENT_SUBMIT) => "fragment_submit",
        Some(tag::TASK_REGISTER) => "task_register",
        Some(tag::PACKAGE) => "package",
        _ => "unknown",
    }
}
