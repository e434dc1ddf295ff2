//! Replicated aggregation committee.
//!
//! A small cluster of hardened replicas receives signature fragments from
//! oracle nodes, orders them through a leader-based replicated log, and, once
//! a threshold of matching fragments is committed, recombines them into a
//! single group signature that the on-chain contract verifies cheaply.
//!
//! Replication is a compact leader/follower consensus: randomized election
//! timeouts, one vote per term, a log up-to-dateness check at election time,
//! append consistency checks with conflict truncation, and majority commit
//! restricted to the leader's current term (unlocked by a no-op entry appended
//! on election). Replicas are driven entirely by explicit inputs — messages
//! and timer expirations — and return [`Effect`]s instead of performing I/O,
//! which keeps every run deterministic and directly testable.
//!
//! Fragment handling specifics on top of the log machinery:
//!
//! * Task metadata ([`TaskRegistration`]) is delivered to every replica and
//!   stored locally, so followers can re-verify fragment entries before
//!   acknowledging them: a replicated verdict is therefore backed by a
//!   majority of independent verifications, not by trust in the leader.
//! * Committed valid fragments are grouped by message digest. When a group
//!   reaches the task's threshold, the leader aggregates the fragments with
//!   the lowest signer indices, signs the package with its own key, and emits
//!   it for on-chain settlement. Each replica emits a given task's package at
//!   most once; duplicate packages after a leader change are possible by
//!   design and are deduplicated at the contract.
//! * A crashed replica ignores all inputs. On recovery it rejoins as a
//!   follower with its log and term intact.

use crate::ids::{CommitteeId, SubtaskId};
use crate::threshold::{
    self, GroupKey, GroupSignature, LeaderKeypair, LeaderSignature, ParamsProfile,
    PartialSignature, SchemeParams, SharePublic,
};
use crate::wire::{tag, Reader, WireError, Writer};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Most log entries shipped in one append message; lagging peers are served
/// follow-up batches as they acknowledge.
const MAX_APPEND_BATCH: usize = 64;

/// Sizing and timing knobs for one committee cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitteeConfig {
    /// Number of replicas; a majority of them must be up for progress.
    pub size: usize,
    /// Election timeouts are drawn uniformly from this half-open range (ms).
    pub election_timeout_ms: (f64, f64),
    /// Leader heartbeat period (ms); must sit well below the election range.
    pub heartbeat_ms: f64,
}

impl Default for CommitteeConfig {
    fn default() -> Self {
        Self { size: 5, election_timeout_ms: (150.0, 300.0), heartbeat_ms: 50.0 }
    }
}

/// Consensus role of a replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Follower,
    Candidate,
    Leader,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Role::Follower => "follower",
            Role::Candidate => "candidate",
            Role::Leader => "leader",
        };
        f.write_str(name)
    }
}

/// Everything a replica needs to verify and aggregate fragments for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRegistration {
    pub task: SubtaskId,
    /// Group profile the task's keys were dealt in.
    pub profile: ParamsProfile,
    /// Fragments required for recombination.
    pub threshold: usize,
    /// Number of dealt shares (selected nodes).
    pub members: usize,
    pub group_key: GroupKey,
    /// Per-signer verification keys, indexed 1..=members.
    pub share_publics: Vec<SharePublic>,
    /// Simulation time the task was dispatched; fragment receipt offsets are
    /// measured from this instant.
    pub dispatch_ms: f64,
}

/// One fragment as recorded in the replicated log.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentRecord {
    pub task: SubtaskId,
    pub partial: PartialSignature,
    /// The exact message bytes the fragment signs.
    pub msg: Vec<u8>,
    /// Receipt time at the leader, as an offset from the task's dispatch.
    pub receipt_offset_ms: f64,
    /// Leader's verification verdict; followers re-check it before acking.
    pub valid: bool,
}

/// Payload of one replicated log slot.
#[derive(Debug, Clone, PartialEq)]
pub enum LogOp {
    /// Barrier entry appended by a fresh leader so the commit rule can make
    /// progress in its own term.
    Noop,
    Fragment(FragmentRecord),
}

/// One replicated log slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub term: u64,
    pub op: LogOp,
}

/// Protocol messages exchanged between replicas (and, for the last two
/// variants, sent to replicas by the outside world).
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    RequestVote { term: u64, candidate: CommitteeId, last_log_index: u64, last_log_term: u64 },
    VoteReply { term: u64, from: CommitteeId, granted: bool },
    AppendEntries {
        term: u64,
        leader: CommitteeId,
        prev_index: u64,
        prev_term: u64,
        entries: Vec<LogEntry>,
        commit_index: u64,
    },
    AppendReply { term: u64, from: CommitteeId, success: bool, match_index: u64 },
    /// Fragment submission from an oracle node. Oracle nodes broadcast to the
    /// whole committee; only the current leader acts on it.
    SubmitFragment { task: SubtaskId, partial: PartialSignature, msg: Vec<u8> },
    /// Task metadata pushed to every replica when a task is dispatched.
    RegisterTask(TaskRegistration),
}

/// Aggregated, leader-signed result for one task, ready for settlement.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitteePackage {
    pub task: SubtaskId,
    /// Term in which the package was produced.
    pub term: u64,
    /// Replica that produced and signed the package.
    pub leader: CommitteeId,
    /// The agreed message bytes (identical across aggregated fragments).
    pub msg: Vec<u8>,
    pub group_sig: GroupSignature,
    /// `(signer index, receipt offset ms)` for exactly the aggregated
    /// fragments, ascending by signer index.
    pub response_times: Vec<(u32, f64)>,
    /// Leader's signature over [`CommitteePackage::signing_bytes`].
    pub leader_sig: LeaderSignature,
}

/// Instructions a replica hands back to its host instead of doing I/O.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    /// Deliver `msg` to one peer.
    Send { to: CommitteeId, msg: Message },
    /// Deliver `msg` to every other replica in the cluster.
    Broadcast { msg: Message },
    /// (Re-)arm the election timer; only the latest `generation` may fire.
    ScheduleElection { after_ms: f64, generation: u64 },
    /// (Re-)arm the heartbeat timer; only the latest `generation` may fire.
    ScheduleHeartbeat { after_ms: f64, generation: u64 },
    /// Hand a finished package to the settlement layer.
    EmitPackage(Box<CommitteePackage>),
    /// Trace hook: this replica just won the election for `term`.
    LeaderElected { term: u64 },
}

struct TaskContext {
    registration: TaskRegistration,
    params: SchemeParams,
    package_emitted: bool,
    /// Committed valid fragments of this task, appended as the commit index
    /// advances so aggregation never rescans the whole log.
    committed: Vec<FragmentRecord>,
    /// Signers this replica has already appended for the task. Only
    /// meaningful while leading; rebuilt from the log on every promotion.
    seen_signers: BTreeSet<u32>,
}

/// One committee replica, driven by messages and timer callbacks.
pub struct CommitteeNode {
    id: CommitteeId,
    config: CommitteeConfig,
    profile: ParamsProfile,
    keypair: LeaderKeypair,
    rng: ChaCha8Rng,
    crashed: bool,

    role: Role,
    term: u64,
    voted_for: Option<CommitteeId>,
    log: Vec<LogEntry>,
    commit_index: u64,

    votes_received: BTreeSet<CommitteeId>,
    next_index: BTreeMap<CommitteeId, u64>,
    match_index: BTreeMap<CommitteeId, u64>,

    election_generation: u64,
    heartbeat_generation: u64,

    tasks: BTreeMap<SubtaskId, TaskContext>,
    /// Incremented when a replicated fragment verdict disagrees with this
    /// replica's own verification; such batches are rejected.
    verdict_conflicts: u64,
}

impl CommitteeNode {
    /// Creates a replica and returns it with its initial election timer.
    pub fn new(
        id: CommitteeId,
        config: CommitteeConfig,
        profile: ParamsProfile,
        keypair: LeaderKeypair,
        seed: u64,
    ) -> (Self, Vec<Effect>) {
        assert!(config.size >= 1, "committee needs at least one replica");
        assert!(
            config.election_timeout_ms.0 < config.election_timeout_ms.1,
            "election timeout range must be non-empty"
        );
        let mut node = Self {
            id,
            config,
            profile,
            keypair,
            rng: ChaCha8Rng::seed_from_u64(seed),
            crashed: false,
            role: Role::Follower,
            term: 0,
            voted_for: None,
            log: Vec::new(),
            commit_index: 0,
            votes_received: BTreeSet::new(),
            next_index: BTreeMap::new(),
            match_index: BTreeMap::new(),
            election_generation: 0,
            heartbeat_generation: 0,
            tasks: BTreeMap::new(),
            verdict_conflicts: 0,
        };
        let effects = vec![node.schedule_election()];
        (node, effects)
    }

    pub fn id(&self) -> CommitteeId {
        self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn term(&self) -> u64 {
        self.term
    }

    pub fn commit_index(&self) -> u64 {
        self.commit_index
    }

    pub fn log_len(&self) -> u64 {
        self.log.len() as u64
    }

    /// Term of the entry at 1-based `index`, if present.
    pub fn log_term_at(&self, index: u64) -> Option<u64> {
        (index >= 1).then(|| self.log.get(index as usize - 1).map(|e| e.term)).flatten()
    }

    /// Number of distinct fragment entries logged for `task`.
    pub fn fragment_count(&self, task: SubtaskId) -> usize {
        self.log
            .iter()
            .filter(|e| matches!(&e.op, LogOp::Fragment(f) if f.task == task))
            .count()
    }

    pub fn is_crashed(&self) -> bool {
        self.crashed
    }

    pub fn public_key(&self) -> &BigUint {
        &self.keypair.public
    }

    /// Count of replicated fragment verdicts this replica refused to ack.
    pub fn verdict_conflicts(&self) -> u64 {
        self.verdict_conflicts
    }

    /// Stops the replica: all subsequent inputs are ignored until recovery.
    pub fn crash(&mut self) {
        self.crashed = true;
    }

    /// Restarts the replica as a follower with its durable state (term, vote,
    /// log, task registry) intact.
    pub fn recover(&mut self) -> Vec<Effect> {
        self.crashed = false;
        self.role = Role::Follower;
        self.votes_received.clear();
        self.heartbeat_generation += 1;
        vec![self.schedule_election()]
    }

    /// Election timer callback.
    pub fn on_election_timer(&mut self, _now: f64, generation: u64) -> Vec<Effect> {
        if self.crashed || generation != self.election_generation || self.role == Role::Leader {
            return Vec::new();
        }
        self.start_election()
    }

    /// Heartbeat timer callback.
    pub fn on_heartbeat_timer(&mut self, _now: f64, generation: u64) -> Vec<Effect> {
        if self.crashed || generation != self.heartbeat_generation || self.role != Role::Leader {
            return Vec::new();
        }
        let mut effects = self.replicate_all();
        effects.push(self.schedule_heartbeat());
        effects
    }

    /// Delivers one protocol message.
    pub fn on_message(&mut self, now: f64, msg: Message) -> Vec<Effect> {
        if self.crashed {
            return Vec::new();
        }
        match msg {
            Message::RequestVote { term, candidate, last_log_index, last_log_term } => {
                self.handle_request_vote(term, candidate, last_log_index, last_log_term)
            }
            Message::VoteReply { term, from, granted } => {
                self.handle_vote_reply(term, from, granted)
            }
            Message::AppendEntries { term, leader, prev_index, prev_term, entries, commit_index } => {
                self.handle_append_entries(term, leader, prev_index, prev_term, entries, commit_index)
            }
            Message::AppendReply { term, from, success, match_index } => {
                self.handle_append_reply(term, from, success, match_index)
            }
            Message::SubmitFragment { task, partial, msg } => {
                self.handle_submit_fragment(now, task, partial, msg)
            }
            Message::RegisterTask(reg) => {
                self.handle_register_task(reg);
                Vec::new()
            }
        }
    }

    fn peers(&self) -> Vec<CommitteeId> {
        (0..self.config.size as u32).map(CommitteeId).filter(|p| *p != self.id).collect()
    }

    fn last_log_term(&self) -> u64 {
        self.log.last().map_or(0, |e| e.term)
    }

    fn schedule_election(&mut self) -> Effect {
        self.election_generation += 1;
        let (lo, hi) = self.config.election_timeout_ms;
        Effect::ScheduleElection {
            after_ms: self.rng.gen_range(lo..hi),
            generation: self.election_generation,
        }
    }

    fn schedule_heartbeat(&mut self) -> Effect {
        self.heartbeat_generation += 1;
        Effect::ScheduleHeartbeat {
            after_ms: self.config.heartbeat_ms,
            generation: self.heartbeat_generation,
        }
    }

    /// Adopts `new_term` (if higher) and reverts to follower. A deposed
    /// leader gets its election timer re-armed; followers and candidates
    /// already have one running.
    fn step_down(&mut self, new_term: u64, effects: &mut Vec<Effect>) {
        if new_term > self.term {
            self.term = new_term;
            self.voted_for = None;
        }
        if self.role == Role::Leader {
            self.heartbeat_generation += 1;
            effects.push(self.schedule_election());
        }
        self.role = Role::Follower;
        self.votes_received.clear();
    }

    fn start_election(&mut self) -> Vec<Effect> {
        self.term += 1;
        self.role = Role::Candidate;
        self.voted_for = Some(self.id);
        self.votes_received = BTreeSet::from([self.id]);
        let mut effects = vec![self.schedule_election()];
        if self.votes_received.len() * 2 > self.config.size {
            self.become_leader(&mut effects);
            return effects;
        }
        effects.push(Effect::Broadcast {
            msg: Message::RequestVote {
                term: self.term,
                candidate: self.id,
                last_log_index: self.log.len() as u64,
                last_log_term: self.last_log_term(),
            },
        });
        effects
    }

    fn become_leader(&mut self, effects: &mut Vec<Effect>) {
        self.role = Role::Leader;
        let next = self.log.len() as u64 + 1;
        self.next_index = self.peers().into_iter().map(|p| (p, next)).collect();
        self.match_index = self.peers().into_iter().map(|p| (p, 0)).collect();
        // The leader no longer needs an election timer.
        self.election_generation += 1;
        effects.push(Effect::LeaderElected { term: self.term });
        self.log.push(LogEntry { term: self.term, op: LogOp::Noop });
        effects.extend(self.replicate_all());
        effects.push(self.schedule_heartbeat());
        self.advance_commit(effects);
        // Re-derive the append-side dedup sets from this replica's log, and
        // emit any package whose quorum already committed under an earlier
        // leader but never reached the contract from here.
        let appended: Vec<(SubtaskId, u32)> = self
            .log
            .iter()
            .filter_map(|entry| match &entry.op {
                LogOp::Fragment(f) => Some((f.task, f.partial.signer)),
                LogOp::Noop => None,
            })
            .collect();
        for ctx in self.tasks.values_mut() {
            ctx.seen_signers.clear();
        }
        for (task, signer) in appended {
            if let Some(ctx) = self.tasks.get_mut(&task) {
                ctx.seen_signers.insert(signer);
            }
        }
        let unemitted: Vec<SubtaskId> = self
            .tasks
            .iter()
            .filter(|(_, ctx)| !ctx.package_emitted && !ctx.committed.is_empty())
            .map(|(id, _)| *id)
            .collect();
        self.emit_for_tasks(unemitted, effects);
    }

    fn append_for(&self, peer: CommitteeId) -> Message {
        let next = self.next_index.get(&peer).copied().unwrap_or(1).max(1);
        let prev_index = next - 1;
        let prev_term = if prev_index == 0 { 0 } else { self.log[prev_index as usize - 1].term };
        // Bounded batches keep retransmissions to lagging peers cheap; the
        // ack handler streams follow-up batches until the peer catches up.
        let start = prev_index as usize;
        let end = (start + MAX_APPEND_BATCH).min(self.log.len());
        Message::AppendEntries {
            term: self.term,
            leader: self.id,
            prev_index,
            prev_term,
            entries: self.log[start..end].to_vec(),
            commit_index: self.commit_index,
        }
    }

    fn replicate_all(&self) -> Vec<Effect> {
        self.peers()
            .into_iter()
            .map(|peer| Effect::Send { to: peer, msg: self.append_for(peer) })
            .collect()
    }

    fn handle_request_vote(
        &mut self,
        term: u64,
        candidate: CommitteeId,
        last_log_index: u64,
        last_log_term: u64,
    ) -> Vec<Effect> {
        let mut effects = Vec::new();
        if term > self.term {
            self.step_down(term, &mut effects);
        }
        let up_to_date = (last_log_term, last_log_index)
            >= (self.last_log_term(), self.log.len() as u64);
        let granted = term == self.term
            && self.role == Role::Follower
            && up_to_date
            && self.voted_for.is_none_or(|v| v == candidate);
        if granted {
            self.voted_for = Some(candidate);
            effects.push(self.schedule_election());
        }
        effects.push(Effect::Send {
            to: candidate,
            msg: Message::VoteReply { term: self.term, from: self.id, granted },
        });
        effects
    }

    fn handle_vote_reply(&mut self, term: u64, from: CommitteeId, granted: bool) -> Vec<Effect> {
        let mut effects = Vec::new();
        if term > self.term {
            self.step_down(term, &mut effects);
            return effects;
        }
        if self.role == Role::Candidate && term == self.term && granted {
            self.votes_received.insert(from);
            if self.votes_received.len() * 2 > self.config.size {
                self.become_leader(&mut effects);
            }
        }
        effects
    }

    fn handle_append_entries(
        &mut self,
        term: u64,
        leader: CommitteeId,
        prev_index: u64,
        prev_term: u64,
        entries: Vec<LogEntry>,
        leader_commit: u64,
    ) -> Vec<Effect> {
        let mut effects = Vec::new();
        if term < self.term {
            effects.push(Effect::Send {
                to: leader,
                msg: Message::AppendReply {
                    term: self.term,
                    from: self.id,
                    success: false,
                    match_index: 0,
                },
            });
            return effects;
        }
        if term > self.term || self.role == Role::Candidate {
            self.step_down(term, &mut effects);
        }
        if self.role == Role::Leader {
            // Two leaders in one term would violate election safety; drop.
            debug_assert!(false, "append-entries from a second leader in term {term}");
            return effects;
        }
        // A live leader exists: hold off on elections.
        effects.push(self.schedule_election());

        let prev_ok = prev_index == 0
            || (prev_index <= self.log.len() as u64
                && self.log[prev_index as usize - 1].term == prev_term);
        let verdicts_ok = entries.iter().all(|e| self.verdict_acceptable(e));
        if !verdicts_ok {
            self.verdict_conflicts += 1;
        }
        if !prev_ok || !verdicts_ok {
            effects.push(Effect::Send {
                to: leader,
                msg: Message::AppendReply {
                    term: self.term,
                    from: self.id,
                    success: false,
                    match_index: 0,
                },
            });
            return effects;
        }

        let mut index = prev_index;
        for entry in entries.iter() {
            index += 1;
            if let Some(existing) = self.log.get(index as usize - 1) {
                if existing.term == entry.term {
                    continue;
                }
                assert!(
                    index > self.commit_index,
                    "conflict truncation must never touch committed entries"
                );
                self.log.truncate(index as usize - 1);
            }
            self.log.push(entry.clone());
        }
        let match_index = prev_index + entries.len() as u64;
        let new_commit = self.commit_index.max(leader_commit.min(match_index));
        if new_commit > self.commit_index {
            let from = self.commit_index;
            self.commit_index = new_commit;
            // Keep the per-task buckets current so a later promotion can
            // aggregate without rescanning the log. Followers never emit.
            self.absorb_committed(from, new_commit);
        }
        effects.push(Effect::Send {
            to: leader,
            msg: Message::AppendReply { term: self.term, from: self.id, success: true, match_index },
        });
        effects
    }

    /// Re-verifies a replicated fragment with this replica's own copy of the
    /// task keys. Entries for unknown tasks are accepted as-is (the replica
    /// may have been down at registration time and must still catch up).
    fn verdict_acceptable(&self, entry: &LogEntry) -> bool {
        let LogOp::Fragment(f) = &entry.op else { return true };
        let Some(ctx) = self.tasks.get(&f.task) else { return true };
        f.valid == fragment_valid(&ctx.registration, &ctx.params, &f.partial, &f.msg)
    }

    fn handle_append_reply(
        &mut self,
        term: u64,
        from: CommitteeId,
        success: bool,
        match_index: u64,
    ) -> Vec<Effect> {
        let mut effects = Vec::new();
        if term > self.term {
            self.step_down(term, &mut effects);
            return effects;
        }
        if self.role != Role::Leader || term != self.term {
            return effects;
        }
        if success {
            let known = self.match_index.entry(from).or_insert(0);
            *known = (*known).max(match_index);
            let next = self.next_index.entry(from).or_insert(1);
            *next = (*next).max(match_index + 1);
            let caught_up = *next > self.log.len() as u64;
            if !caught_up {
                effects.push(Effect::Send { to: from, msg: self.append_for(from) });
            }
            self.advance_commit(&mut effects);
        } else {
            let next = self.next_index.entry(from).or_insert(1);
            *next = next.saturating_sub(1).max(1);
            effects.push(Effect::Send { to: from, msg: self.append_for(from) });
        }
        effects
    }

    fn handle_register_task(&mut self, reg: TaskRegistration) {
        if reg.profile != self.profile || self.tasks.contains_key(&reg.task) {
            return;
        }
        let Ok(params) = reg.profile.build(reg.threshold, reg.members) else {
            return;
        };
        self.tasks.insert(
            reg.task,
            TaskContext {
                registration: reg,
                params,
                package_emitted: false,
                committed: Vec::new(),
                seen_signers: BTreeSet::new(),
            },
        );
    }

    fn handle_submit_fragment(
        &mut self,
        now: f64,
        task: SubtaskId,
        partial: PartialSignature,
        msg: Vec<u8>,
    ) -> Vec<Effect> {
        if self.role != Role::Leader {
            return Vec::new();
        }
        let Some(ctx) = self.tasks.get(&task) else {
            return Vec::new();
        };
        if ctx.package_emitted || ctx.seen_signers.contains(&partial.signer) {
            return Vec::new();
        }
        let valid = fragment_valid(&ctx.registration, &ctx.params, &partial, &msg);
        let receipt_offset_ms = now - ctx.registration.dispatch_ms;
        self.tasks
            .get_mut(&task)
            .expect("checked above")
            .seen_signers
            .insert(partial.signer);
        self.log.push(LogEntry {
            term: self.term,
            op: LogOp::Fragment(FragmentRecord { task, partial, msg, receipt_offset_ms, valid }),
        });
        let mut effects = self.replicate_all();
        self.advance_commit(&mut effects);
        effects
    }

    /// Leader-side commit rule: the highest log index replicated on a
    /// majority *and* belonging to the current term becomes committed.
    fn advance_commit(&mut self, effects: &mut Vec<Effect>) {
        if self.role != Role::Leader {
            return;
        }
        let before = self.commit_index;
        let mut n = self.log.len() as u64;
        while n > self.commit_index {
            if self.log[n as usize - 1].term == self.term {
                let replicas = 1 + self
                    .match_index
                    .values()
                    .filter(|m| **m >= n)
                    .count();
                if replicas * 2 > self.config.size {
                    self.commit_index = n;
                    break;
                }
            }
            n -= 1;
        }
        if self.commit_index > before {
            let touched = self.absorb_committed(before, self.commit_index);
            self.emit_for_tasks(touched, effects);
        }
    }

    /// Files every valid fragment in the newly committed log range under its
    /// task, returning which tasks gained fragments. Called exactly once per
    /// committed entry on every replica, so each bucket stays duplicate-free.
    fn absorb_committed(&mut self, from: u64, to: u64) -> Vec<SubtaskId> {
        let fresh: Vec<FragmentRecord> = self.log[from as usize..to as usize]
            .iter()
            .filter_map(|entry| match &entry.op {
                LogOp::Fragment(f) if f.valid => Some(f.clone()),
                _ => None,
            })
            .collect();
        let mut touched: Vec<SubtaskId> = Vec::new();
        for record in fresh {
            if let Some(ctx) = self.tasks.get_mut(&record.task) {
                touched.push(record.task);
                ctx.committed.push(record);
            }
        }
        touched.sort_unstable();
        touched.dedup();
        touched
    }

    /// Aggregates and emits a package for each listed task whose committed
    /// fragments reach the threshold. Each task emits at most once per
    /// replica.
    fn emit_for_tasks(
        &mut self,
        tasks: impl IntoIterator<Item = SubtaskId>,
        effects: &mut Vec<Effect>,
    ) {
        for task in tasks {
            let package = {
                let Some(ctx) = self.tasks.get(&task) else { continue };
                if ctx.package_emitted {
                    continue;
                }
                self.try_aggregate_task(task, ctx)
            };
            if let Some(package) = package {
                self.tasks.get_mut(&task).expect("task present").package_emitted = true;
                effects.push(Effect::EmitPackage(Box::new(package)));
            }
        }
    }

    /// Scans the task's committed valid fragments, grouped by digest. The
    /// first group (in digest order) reaching the threshold is aggregated
    /// using its lowest signer indices.
    fn try_aggregate_task(&self, task: SubtaskId, ctx: &TaskContext) -> Option<CommitteePackage> {
        let mut groups: BTreeMap<[u8; 32], Vec<&FragmentRecord>> = BTreeMap::new();
        for fragment in &ctx.committed {
            groups.entry(fragment.partial.digest).or_default().push(fragment);
        }
        for (_, mut fragments) in groups {
            fragments.sort_by_key(|f| f.partial.signer);
            fragments.dedup_by_key(|f| f.partial.signer);
            if fragments.len() < ctx.params.threshold {
                continue;
            }
            fragments.truncate(ctx.params.threshold);
            let partials: Vec<PartialSignature> =
                fragments.iter().map(|f| f.partial.clone()).collect();
            let Ok(group_sig) =
                threshold::aggregate(&partials, &ctx.registration.share_publics, &ctx.params)
            else {
                continue;
            };
            let response_times: Vec<(u32, f64)> =
                fragments.iter().map(|f| (f.partial.signer, f.receipt_offset_ms)).collect();
            let mut package = CommitteePackage {
                task,
                term: self.term,
                leader: self.id,
                msg: fragments[0].msg.clone(),
                group_sig,
                response_times,
                leader_sig: LeaderSignature { sigma: BigUint::from(0u32), digest: [0u8; 32] },
            };
            package.leader_sig =
                threshold::leader_sign(&package.signing_bytes(), &self.keypair, &ctx.params);
            return Some(package);
        }
        None
    }
}

/// Shared fragment verification used by the leader (first verdict) and the
/// followers (re-check before ack).
fn fragment_valid(
    reg: &TaskRegistration,
    params: &SchemeParams,
    partial: &PartialSignature,
    msg: &[u8],
) -> bool {
    let index = partial.signer as usize;
    if index == 0 || index > reg.members {
        return false;
    }
    let Some(share) = reg.share_publics.iter().find(|s| s.index == partial.signer) else {
        return false;
    };
    threshold::verify_partial(msg, partial, &share.key, params)
}

fn put_bool(w: &mut Writer, value: bool) {
    w.put_uint(tag::UINT, u64::from(value));
}

fn take_bool(r: &mut Reader) -> Result<bool, WireError> {
    Ok(r.take_uint(tag::UINT)? != 0)
}

fn put_subtask(w: &mut Writer, task: SubtaskId) {
    w.put_uint(tag::UINT, task.request.0);
    w.put_uint(tag::UINT, u64::from(task.ordinal));
}

fn take_subtask(r: &mut Reader) -> Result<SubtaskId, WireError> {
    let request = r.take_uint(tag::UINT)?;
    let ordinal = r.take_uint(tag::UINT)? as u32;
    Ok(SubtaskId::new(crate::ids::RequestId(request), ordinal))
}

impl TaskRegistration {
    pub fn encode_into(&self, w: &mut Writer) {
        let mut inner = Writer::new();
        put_subtask(&mut inner, self.task);
        inner.put_uint(tag::UINT, self.profile.code());
        inner.put_uint(tag::UINT, self.threshold as u64);
        inner.put_uint(tag::UINT, self.members as u64);
        inner.put_f64(tag::F64, self.dispatch_ms);
        self.group_key.encode_into(&mut inner);
        let mut shares = Writer::new();
        for share in &self.share_publics {
            share.encode_into(&mut shares);
        }
        inner.put_nested(tag::LIST, &shares.finish());
        w.put_nested(tag::TASK_REGISTER, &inner.finish());
    }

    pub fn decode_from(r: &mut Reader) -> Result<Self, WireError> {
        let inner = r.take(tag::TASK_REGISTER)?;
        let mut r = Reader::new(inner);
        let task = take_subtask(&mut r)?;
        let profile_code = r.take_uint(tag::UINT)?;
        let profile = ParamsProfile::from_code(profile_code)
            .ok_or(WireError::UnexpectedTag { expected: tag::UINT, found: tag::UINT, offset: 0 })?;
        let threshold = r.take_uint(tag::UINT)? as usize;
        let members = r.take_uint(tag::UINT)? as usize;
        let dispatch_ms = r.take_f64(tag::F64)?;
        let group_key = GroupKey::decode_from(&mut r)?;
        let shares_raw = r.take(tag::LIST)?;
        let mut shares = Reader::new(shares_raw);
        let mut share_publics = Vec::new();
        while !shares.is_empty() {
            share_publics.push(SharePublic::decode_from(&mut shares)?);
        }
        r.expect_end()?;
        Ok(Self { task, profile, threshold, members, group_key, share_publics, dispatch_ms })
    }
}

impl LogEntry {
    pub fn encode_into(&self, w: &mut Writer) {
        let mut inner = Writer::new();
        inner.put_uint(tag::UINT, self.term);
        match &self.op {
            LogOp::Noop => {
                inner.put_uint(tag::UINT, 0);
            }
            LogOp::Fragment(f) => {
                inner.put_uint(tag::UINT, 1);
                put_subtask(&mut inner, f.task);
                f.partial.encode_into(&mut inner);
                inner.put_bytes(tag::BYTES, &f.msg);
                inner.put_f64(tag::F64, f.receipt_offset_ms);
                put_bool(&mut inner, f.valid);
            }
        }
        w.put_nested(tag::LOG_ENTRY, &inner.finish());
    }

    pub fn decode_from(r: &mut Reader) -> Result<Self, WireError> {
        let inner = r.take(tag::LOG_ENTRY)?;
        let mut r = Reader::new(inner);
        let term = r.take_uint(tag::UINT)?;
        let kind = r.take_uint(tag::UINT)?;
        let op = if kind == 0 {
            LogOp::Noop
        } else {
            let task = take_subtask(&mut r)?;
            let partial = PartialSignature::decode_from(&mut r)?;
            let msg = r.take_bytes(tag::BYTES)?.to_vec();
            let receipt_offset_ms = r.take_f64(tag::F64)?;
            let valid = take_bool(&mut r)?;
            LogOp::Fragment(FragmentRecord { task, partial, msg, receipt_offset_ms, valid })
        };
        r.expect_end()?;
        Ok(Self { term, op })
    }
}

impl Message {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Message::RequestVote { term, candidate, last_log_index, last_log_term } => {
                let mut inner = Writer::new();
                inner.put_uint(tag::UINT, *term);
                inner.put_uint(tag::UINT, u64::from(candidate.0));
                inner.put_uint(tag::UINT, *last_log_index);
                inner.put_uint(tag::UINT, *last_log_term);
                w.put_nested(tag::VOTE_REQUEST, &inner.finish());
            }
            Message::VoteReply { term, from, granted } => {
                let mut inner = Writer::new();
                inner.put_uint(tag::UINT, *term);
                inner.put_uint(tag::UINT, u64::from(from.0));
                put_bool(&mut inner, *granted);
                w.put_nested(tag::VOTE_RESPONSE, &inner.finish());
            }
            Message::AppendEntries { term, leader, prev_index, prev_term, entries, commit_index } => {
                let mut inner = Writer::new();
                inner.put_uint(tag::UINT, *term);
                inner.put_uint(tag::UINT, u64::from(leader.0));
                inner.put_uint(tag::UINT, *prev_index);
                inner.put_uint(tag::UINT, *prev_term);
                inner.put_uint(tag::UINT, *commit_index);
                let mut list = Writer::new();
                for entry in entries {
                    entry.encode_into(&mut list);
                }
                inner.put_nested(tag::LIST, &list.finish());
                w.put_nested(tag::APPEND_ENTRIES, &inner.finish());
            }
            Message::AppendReply { term, from, success, match_index } => {
                let mut inner = Writer::new();
                inner.put_uint(tag::UINT, *term);
                inner.put_uint(tag::UINT, u64::from(from.0));
                put_bool(&mut inner, *success);
                inner.put_uint(tag::UINT, *match_index);
                w.put_nested(tag::APPEND_RESPONSE, &inner.finish());
            }
            Message::SubmitFragment { task, partial, msg } => {
                let mut inner = Writer::new();
                put_subtask(&mut inner, *task);
                partial.encode_into(&mut inner);
                inner.put_bytes(tag::BYTES, msg);
                w.put_nested(tag::FRAGMENT_SUBMIT, &inner.finish());
            }
            Message::RegisterTask(reg) => {
                reg.encode_into(&mut w);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let msg = match r.peek_tag()? {
            tag::VOTE_REQUEST => {
                let inner = r.take(tag::VOTE_REQUEST)?;
                let mut r = Reader::new(inner);
                let term = r.take_uint(tag::UINT)?;
                let candidate = CommitteeId(r.take_uint(tag::UINT)? as u32);
                let last_log_index = r.take_uint(tag::UINT)?;
                let last_log_term = r.take_uint(tag::UINT)?;
                r.expect_end()?;
                Message::RequestVote { term, candidate, last_log_index, last_log_term }
            }
            tag::VOTE_RESPONSE => {
                let inner = r.take(tag::VOTE_RESPONSE)?;
                let mut r = Reader::new(inner);
                let term = r.take_uint(tag::UINT)?;
                let from = CommitteeId(r.take_uint(tag::UINT)? as u32);
                let granted = take_bool(&mut r)?;
                r.expect_end()?;
                Message::VoteReply { term, from, granted }
            }
            tag::APPEND_ENTRIES => {
                let inner = r.take(tag::APPEND_ENTRIES)?;
                let mut r = Reader::new(inner);
                let term = r.take_uint(tag::UINT)?;
                let leader = CommitteeId(r.take_uint(tag::UINT)? as u32);
                let prev_index = r.take_uint(tag::UINT)?;
                let prev_term = r.take_uint(tag::UINT)?;
                let commit_index = r.take_uint(tag::UINT)?;
                let list = r.take(tag::LIST)?;
                let mut list = Reader::new(list);
                let mut entries = Vec::new();
                while !list.is_empty() {
                    entries.push(LogEntry::decode_from(&mut list)?);
                }
                r.expect_end()?;
                Message::AppendEntries { term, leader, prev_index, prev_term, entries, commit_index }
            }
            tag::APPEND_RESPONSE => {
                let inner = r.take(tag::APPEND_RESPONSE)?;
                let mut r = Reader::new(inner);
                let term = r.take_uint(tag::UINT)?;
                let from = CommitteeId(r.take_uint(tag::UINT)? as u32);
                let success = take_bool(&mut r)?;
                let match_index = r.take_uint(tag::UINT)?;
                r.expect_end()?;
                Message::AppendReply { term, from, success, match_index }
            }
            tag::FRAGMENT_SUBMIT => {
                let inner = r.take(tag::FRAGMENT_SUBMIT)?;
                let mut r = Reader::new(inner);
                let task = take_subtask(&mut r)?;
                let partial = PartialSignature::decode_from(&mut r)?;
                let msg = r.take_bytes(tag::BYTES)?.to_vec();
                r.expect_end()?;
                Message::SubmitFragment { task, partial, msg }
            }
            tag::TASK_REGISTER => Message::RegisterTask(TaskRegistration::decode_from(&mut r)?),
            found => {
                return Err(WireError::UnexpectedTag {
                    expected: tag::VOTE_REQUEST,
                    found,
                    offset: 0,
                })
            }
        };
        r.expect_end()?;
        Ok(msg)
    }
}

impl CommitteePackage {
    fn write_core(&self, w: &mut Writer) {
        put_subtask(w, self.task);
        w.put_uint(tag::UINT, self.term);
        w.put_uint(tag::UINT, u64::from(self.leader.0));
        w.put_bytes(tag::BYTES, &self.msg);
        self.group_sig.encode_into(w);
        let mut list = Writer::new();
        for (signer, offset) in &self.response_times {
            let mut pair = Writer::new();
            pair.put_uint(tag::UINT, u64::from(*signer));
            pair.put_f64(tag::F64, *offset);
            list.put_nested(tag::RESPONSE_TIME, &pair.finish());
        }
        w.put_nested(tag::LIST, &list.finish());
    }

    /// The bytes covered by the leader signature: every field of the package
    /// except the signature itself.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_core(&mut w);
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut inner = Writer::new();
        self.write_core(&mut inner);
        self.leader_sig.encode_into(&mut inner);
        let mut w = Writer::new();
        w.put_nested(tag::PACKAGE, &inner.finish());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut outer = Reader::new(bytes);
        let inner = outer.take(tag::PACKAGE)?;
        outer.expect_end()?;
        let mut r = Reader::new(inner);
        let task = take_subtask(&mut r)?;
        let term = r.take_uint(tag::UINT)?;
        let leader = CommitteeId(r.take_uint(tag::UINT)? as u32);
        let msg = r.take_bytes(tag::BYTES)?.to_vec();
        let group_sig = GroupSignature::decode_from(&mut r)?;
        let list = r.take(tag::LIST)?;
        let mut list = Reader::new(list);
        let mut response_times = Vec::new();
        while !list.is_empty() {
            let pair = list.take(tag::RESPONSE_TIME)?;
            let mut pair = Reader::new(pair);
            let signer = pair.take_uint(tag::UINT)? as u32;
            let offset = pair.take_f64(tag::F64)?;
            pair.expect_end()?;
            response_times.push((signer, offset));
        }
        let leader_sig = LeaderSignature::decode_from(&mut r)?;
        r.expect_end()?;
        Ok(Self { task, term, leader, msg, group_sig, response_times, leader_sig })
    }
}
