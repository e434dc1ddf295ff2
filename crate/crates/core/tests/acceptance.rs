//! Acceptance criteria for the whole stack, one test per criterion.
//!
//! Run with `cargo test -p oraclesim-core --test acceptance -- --nocapture`
//! to see one `ACCEPTANCE Cn: PASS/FAIL (...)` line per criterion.

mod common;

use oraclesim_core::analysis::{self, LatencyModel, Window};
use oraclesim_core::contract::SelectionStrategy;
use oraclesim_core::experiments::{self, configs, ResponseTimeOptions};
use oraclesim_core::netsim::config::{
    CommitteeSection, LatencyModelConfig, NodeConfig, ReplicaDownConfig, Scenario, SourceConfig,
    TaskSection, SCHEMA_VERSION,
};
use oraclesim_core::netsim::{run, RunOptions};
use oraclesim_core::sampling::{a_expj_sample, WeightedItem};
use oraclesim_core::threshold::{self, ParamsProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!("ACCEPTANCE {criterion}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{criterion} failed: {detail}");
}

/// C1 — on the heterogeneous fleet, QoS-weighted selection cuts the mean
/// end-to-end response time against uniform-random selection by 5..15%, and
/// picking the historically worst nodes is slowest; 10 seeds, 100 tasks each,
/// within a 60 s budget.
#[test]
fn c1_weighted_selection_beats_random_within_budget() {
    let started = Instant::now();
    let scenario = Scenario::from_json(configs::HETEROGENEOUS).unwrap();
    let report = experiments::response_time(
        &scenario,
        &ResponseTimeOptions { seeds: (1..=10).collect(), ..Default::default() },
    )
    .unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    let weighted = report.mean_of(SelectionStrategy::Weighted).unwrap();
    let random = report.mean_of(SelectionStrategy::Random).unwrap();
    let worst = report.mean_of(SelectionStrategy::WorstOnly).unwrap();
    let reduction = report.reduction_weighted_vs_random.unwrap();

    let pass = (0.05..=0.15).contains(&reduction)
        && worst > random
        && worst > weighted
        && elapsed < 60.0;
    verdict(
        "C1",
        pass,
        &format!(
            "weighted {weighted:.2} ms, random {random:.2} ms, worst-only {worst:.2} ms, \
             reduction {:.1}%, {elapsed:.1}s",
            100.0 * reduction
        ),
    );
}

/// C2 — settlement success is non-decreasing in the number of selected nodes:
/// exactly in the analytical model (threshold 2, several single-trial
/// probabilities) and within ±0.02 in a simulated sweep of 10^4 tasks per
/// membership, inside a 120 s budget.
#[test]
fn c2_success_grows_with_membership() {
    let started = Instant::now();

    let mut analytic_ok = true;
    for p in [0.3, 0.5, 0.7] {
        let mut previous = 0.0;
        for n in 2..=10 {
            let success = analysis::agg_success_prob(n, 2, p).unwrap();
            if success < previous - 1e-12 {
                analytic_ok = false;
            }
            previous = success;
        }
    }

    let scenario = Scenario::from_json(configs::MEMBERSHIP_SWEEP).unwrap();
    let sweep = experiments::scalability(&scenario, 1, 2..=10, Some(10_000)).unwrap();
    let mut simulated_ok = true;
    let mut curve = String::new();
    let mut previous = 0.0;
    for point in &sweep.points {
        if point.simulated < previous - 0.02 {
            simulated_ok = false;
        }
        previous = point.simulated;
        let _ = write!(curve, "{:.3} ", point.simulated);
    }
    let elapsed = started.elapsed().as_secs_f64();

    let pass = analytic_ok && simulated_ok && elapsed < 120.0;
    verdict(
        "C2",
        pass,
        &format!(
            "analytical monotone: {analytic_ok}, simulated n=2..10: {}({elapsed:.1}s)",
            curve
        ),
    );
}

/// C3 — the aggregate-success formula agrees with brute-force enumeration
/// over all 2^n fetch outcomes to 1e-12, for every membership up to 12 and
/// every threshold.
#[test]
fn c3_binomial_tail_matches_enumeration() {
    let mut worst: f64 = 0.0;
    for n in 1..=12 {
        for t in 1..=n {
            for p in [0.05, 0.1, 0.3, 0.5, 0.55, 0.7, 0.9, 0.95] {
                let direct = analysis::agg_success_prob(n, t, p).unwrap();
                let enumerated = common::enumerated_binomial_tail(n, t, p);
                worst = worst.max((direct - enumerated).abs());
            }
        }
    }
    verdict("C3", worst <= 1e-12, &format!("max |closed form - enumeration| = {worst:.2e}"));
}

/// C4 — analytical window-success for N(100, 30^2) latencies, a 50 ms source
/// period, 5 nodes and threshold 3 matches the simulated rate of "at least 3
/// fetches inside the best window" over 10^4 tasks to within 0.02.
#[test]
fn c4_model_matches_simulated_window_success() {
    let mean = 100.0;
    let std = 30.0;
    let period = 50.0;
    let (nodes, threshold) = (5usize, 3usize);

    let model = LatencyModel::new(mean, std).unwrap();
    let start = analysis::best_window_start(&model, period).unwrap();
    let window = Window::new(start, period).unwrap();
    let p = analysis::single_trial_p(&model, &window);
    let analytical = analysis::agg_success_prob(nodes, threshold, p).unwrap();

    let tasks = 10_000u64;
    let scenario = Scenario {
        version: SCHEMA_VERSION,
        seed: 0,
        crypto: ParamsProfile::Tiny,
        selection: SelectionStrategy::Random,
        qos: Default::default(),
        nodes: (1..=nodes as u32)
            .map(|id| NodeConfig {
                id,
                latencies: vec![LatencyModelConfig { source: 1, mean_ms: mean, std_ms: std }],
                down: Vec::new(),
            })
            .collect(),
        sources: vec![SourceConfig { id: 1, period_ms: period }],
        committee: CommitteeSection { size: 1, ..Default::default() },
        tasks: TaskSection {
            count: tasks,
            first_dispatch_ms: 1_000.0,
            interval_ms: 100.0,
            nodes_per_task: nodes,
            threshold,
            sources: vec![1],
            deadline_ms: Some(400.0),
        },
        max_sim_ms: 1e9,
    };
    let report = run(&scenario, 4, &RunOptions { collect_trace: false, collect_qos_trajectory: false })
        .unwrap();
    let hits = report
        .outcomes
        .iter()
        .filter(|outcome| {
            outcome
                .fetch_offsets
                .iter()
                .filter(|(_, offset)| *offset >= start && *offset <= start + period)
                .count()
                >= threshold
        })
        .count();
    let simulated = hits as f64 / report.outcomes.len() as f64;

    let gap = (analytical - simulated).abs();
    verdict(
        "C4",
        gap <= 0.02,
        &format!("analytical {analytical:.4}, simulated {simulated:.4} over {tasks} tasks, gap {gap:.4}"),
    );
}

/// C5 — threshold signatures on the small group: every 3-of-5 signer subset
/// aggregates to a verifying signature, every 2-of-5 subset is rejected, and
/// flipping any single message byte breaks verification; 100 random
/// messages round-trip; all inside 5 s.
#[test]
fn c5_threshold_signatures_behave_on_the_small_group() {
    let started = Instant::now();
    let params = ParamsProfile::Tiny.build(3, 5).unwrap();
    let keys = threshold::generate(&params, 99);
    let publics = keys.share_publics();
    let msg = b"acceptance message".to_vec();
    let partials: Vec<_> =
        keys.shares.iter().map(|share| threshold::partial_sign(&msg, share, &params)).collect();

    let mut quorums = 0;
    let mut quorum_failures = 0;
    for a in 0..5 {
        for b in (a + 1)..5 {
            for c in (b + 1)..5 {
                let subset = [partials[a].clone(), partials[b].clone(), partials[c].clone()];
                let sig = threshold::aggregate(&subset, &publics, &params).unwrap();
                quorums += 1;
                if !threshold::verify(&msg, &keys.group_key, &sig, &params) {
                    quorum_failures += 1;
                }
            }
        }
    }

    let mut undersized_rejected = 0;
    for a in 0..5 {
        for b in (a + 1)..5 {
            let subset = [partials[a].clone(), partials[b].clone()];
            if threshold::aggregate(&subset, &publics, &params).is_err() {
                undersized_rejected += 1;
            }
        }
    }

    let sig = threshold::aggregate(&partials[..3], &publics, &params).unwrap();
    let mut mutations_rejected = true;
    for index in 0..msg.len() {
        for flip in [0x01u8, 0x80, 0xff] {
            let mut tampered = msg.clone();
            tampered[index] ^= flip;
            if threshold::verify(&tampered, &keys.group_key, &sig, &params) {
                mutations_rejected = false;
            }
        }
    }

    let mut random_ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..100u64 {
        let mut message = vec![0u8; 16 + (trial as usize % 17)];
        rand::RngCore::fill_bytes(&mut rng, &mut message);
        let keys = threshold::generate(&params, 1_000 + trial);
        let partials: Vec<_> = keys
            .shares
            .iter()
            .take(3)
            .map(|share| threshold::partial_sign(&message, share, &params))
            .collect();
        let sig = threshold::aggregate(&partials, &keys.share_publics(), &params).unwrap();
        if !threshold::verify(&message, &keys.group_key, &sig, &params) {
            random_ok = false;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();

    let pass = quorums == 10
        && quorum_failures == 0
        && undersized_rejected == 10
        && mutations_rejected
        && random_ok
        && elapsed < 5.0;
    verdict(
        "C5",
        pass,
        &format!(
            "10/10 quorums verify, {undersized_rejected}/10 undersized rejected, \
             byte fuzz rejected: {mutations_rejected}, 100 random messages ok: {random_ok}, {elapsed:.2}s"
        ),
    );
}

/// C6 — the weighted reservoir sampler hits the exact inclusion
/// probabilities for weights (4,3,2,1), sample size 2, within ±0.01 over
/// 2*10^5 draws, and passes a chi-square goodness-of-fit test on the full
/// subset distribution at significance 0.001.
#[test]
fn c6_sampler_matches_exact_inclusion_probabilities() {
    let weights = [4.0, 3.0, 2.0, 1.0];
    let expected = common::inclusion_probabilities(&weights, 2);
    let trials = 200_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut counts = [0u64; 4];
    let sets = common::subset_probabilities(&weights, 2);
    let keys: Vec<Vec<usize>> = sets.keys().cloned().collect();
    let probs: Vec<f64> = sets.values().copied().collect();
    let mut set_counts = vec![0u64; keys.len()];
    for _ in 0..trials {
        let items: Vec<WeightedItem<usize>> =
            weights.iter().enumerate().map(|(i, &w)| WeightedItem::new(i, w)).collect();
        let mut got = a_expj_sample(items, 2, &mut rng).unwrap();
        for &id in &got {
            counts[id] += 1;
        }
        got.sort_unstable();
        set_counts[keys.binary_search(&got).unwrap()] += 1;
    }

    let mut max_gap: f64 = 0.0;
    for (&count, &want) in counts.iter().zip(&expected) {
        max_gap = max_gap.max((count as f64 / trials as f64 - want).abs());
    }
    let stat = common::chi_square_statistic(&set_counts, &probs, trials);
    let crit = common::chi_square_crit_001(keys.len() - 1);

    let pass = max_gap <= 0.01 && stat < crit;
    verdict(
        "C6",
        pass,
        &format!(
            "max inclusion gap {max_gap:.4} over {trials} draws, chi-square {stat:.2} < {crit:.2}"
        ),
    );
}

/// C7 — over 10 seeds on a fleet with strictly distinct latencies (one node
/// three times slower than the average of the rest), the QoS table learned
/// by the feedback loop ranks nodes opposite to their true latency and in
/// line with how often they are selected: Spearman(latency, QoS) <= -0.8 and
/// Spearman(QoS, selections) >= +0.8 in at least 9 of 10 seeds.
#[test]
fn c7_qos_learns_the_true_latency_ranking() {
    let means = [60.0, 68.0, 76.0, 84.0, 92.0, 100.0, 108.0, 116.0, 124.0, 276.0];
    let scenario = Scenario {
        version: SCHEMA_VERSION,
        seed: 0,
        crypto: ParamsProfile::Tiny,
        selection: SelectionStrategy::Weighted,
        qos: Default::default(),
        nodes: means
            .iter()
            .enumerate()
            .map(|(index, &mean_ms)| NodeConfig {
                id: index as u32 + 1,
                latencies: vec![LatencyModelConfig {
                    source: 1,
                    mean_ms,
                    std_ms: 0.12 * mean_ms,
                }],
                down: Vec::new(),
            })
            .collect(),
        sources: vec![SourceConfig { id: 1, period_ms: 10_000.0 }],
        committee: CommitteeSection { size: 3, ..Default::default() },
        tasks: TaskSection {
            count: 150,
            first_dispatch_ms: 1_000.0,
            interval_ms: 1_000.0,
            // Four of five agreeing responses: the one unaggregated (and
            // punished) member is almost always the slowest pick, which
            // keeps the feedback aligned with true latency.
            nodes_per_task: 5,
            threshold: 4,
            sources: vec![1],
            deadline_ms: Some(900.0),
        },
        max_sim_ms: 1e9,
    };

    let mut hits = 0;
    let mut detail = String::new();
    for seed in 1..=10u64 {
        let report = run(
            &scenario,
            seed,
            &RunOptions { collect_trace: false, collect_qos_trajectory: false },
        )
        .unwrap();
        let source = oraclesim_core::ids::SourceId(1);
        let mut qos = Vec::new();
        let mut selections = Vec::new();
        for node in report.contract.nodes() {
            qos.push(report.contract.qos_value(*node, source));
            selections.push(
                report.contract.qos_record(*node, source).map_or(0, |r| r.selected) as f64,
            );
        }
        let latency_qos = common::spearman(&means, &qos);
        let qos_selection = common::spearman(&qos, &selections);
        if latency_qos <= -0.8 && qos_selection >= 0.8 {
            hits += 1;
        }
        let _ = write!(detail, "[{latency_qos:.2},{qos_selection:.2}] ");
    }

    verdict("C7", hits >= 9, &format!("{hits}/10 seeds pass; per-seed rho pairs: {detail}"));
}

/// C8 — a five-replica committee survives a leader crash in the middle of a
/// task: fragments are re-submitted, a new leader is elected, every task
/// still settles, and no term ever has two leaders.
#[test]
fn c8_committee_survives_a_mid_task_leader_crash() {
    let base = Scenario {
        version: SCHEMA_VERSION,
        seed: 0,
        crypto: ParamsProfile::Tiny,
        selection: SelectionStrategy::Weighted,
        qos: Default::default(),
        nodes: (1..=4u32)
            .map(|id| NodeConfig {
                id,
                latencies: vec![LatencyModelConfig { source: 1, mean_ms: 100.0, std_ms: 10.0 }],
                down: Vec::new(),
            })
            .collect(),
        sources: vec![SourceConfig { id: 1, period_ms: 5_000.0 }],
        committee: CommitteeSection { size: 5, ..Default::default() },
        tasks: TaskSection {
            count: 3,
            first_dispatch_ms: 1_000.0,
            interval_ms: 3_000.0,
            nodes_per_task: 3,
            threshold: 2,
            sources: vec![1],
            deadline_ms: Some(2_000.0),
        },
        max_sim_ms: 1e9,
    };

    // Probe pass: learn which replica leads under this seed.
    let probe = run(&base, 8, &RunOptions::default()).unwrap();
    let leader = probe.elections.first().expect("a leader must be elected").replica;

    // Crash pass: that replica goes silent right before the first fragments
    // arrive and stays down across several deadlines.
    let mut crashed = base.clone();
    crashed.committee.down =
        vec![ReplicaDownConfig { replica: leader.0, intervals: vec![(1_050.0, 9_500.0)] }];
    let report = run(&crashed, 8, &RunOptions::default()).unwrap();

    let settled = report.settled_count();
    let terms: BTreeSet<u64> = report.elections.iter().map(|e| e.term).collect();
    let pass = settled == report.outcomes.len()
        && probe.election_safety_ok()
        && report.election_safety_ok()
        && terms.len() >= 2;
    verdict(
        "C8",
        pass,
        &format!(
            "replica {leader} crashed mid-task; {settled}/{} tasks settled, \
             {} elections over terms {terms:?}, safety held",
            report.outcomes.len(),
            report.elections.len()
        ),
    );
}

/// C9 — experiment artifacts are bitwise deterministic: re-running every
/// CSV-producing experiment with the same scenario and seeds reproduces
/// byte-identical output.
#[test]
fn c9_experiment_artifacts_are_byte_identical_across_reruns() {
    let scenario = Scenario::from_json(configs::UNIFORM).unwrap();
    let options = ResponseTimeOptions {
        seeds: vec![2, 3],
        strategies: vec![SelectionStrategy::Weighted, SelectionStrategy::Random],
        task_count: Some(30),
    };

    let response_a = experiments::response_time(&scenario, &options).unwrap();
    let response_b = experiments::response_time(&scenario, &options).unwrap();
    let qos_a = experiments::qos_trace(&scenario, 7, Some(25)).unwrap();
    let qos_b = experiments::qos_trace(&scenario, 7, Some(25)).unwrap();
    let counts_a = experiments::selection_counts(&scenario, 7, Some(25)).unwrap();
    let counts_b = experiments::selection_counts(&scenario, 7, Some(25)).unwrap();
    let sweep_cfg = Scenario::from_json(configs::MEMBERSHIP_SWEEP).unwrap();
    let sweep_a = experiments::scalability(&sweep_cfg, 2, 2..=4, Some(300)).unwrap();
    let sweep_b = experiments::scalability(&sweep_cfg, 2, 2..=4, Some(300)).unwrap();

    let pass = response_a.rows_csv == response_b.rows_csv
        && qos_a.csv == qos_b.csv
        && counts_a.csv == counts_b.csv
        && sweep_a.csv == sweep_b.csv
        && !response_a.rows_csv.is_empty();
    verdict(
        "C9",
        pass,
        &format!(
            "response {} bytes, qos trace {} bytes, selection counts {} bytes, sweep {} bytes — all reproduced",
            response_a.rows_csv.len(),
            qos_a.csv.len(),
            counts_a.csv.len(),
            sweep_a.csv.len()
        ),
    );
}
