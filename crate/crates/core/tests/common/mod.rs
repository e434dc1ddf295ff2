//! Shared test oracles, kept deliberately independent of the library's
//! implementation paths: enumeration over ordered draws for weighted
//! sampling, quadrature for normal masses, exhaustive outcome enumeration
//! for binomial tails, and small statistics helpers.

#![allow(dead_code)]

use std::collections::BTreeMap;

/// Exact inclusion probability of each item when `m` items are drawn one at
/// a time, probability proportional to weight, without replacement. This is
/// the distribution key-based reservoir sampling realizes.
pub fn inclusion_probabilities(weights: &[f64], m: usize) -> Vec<f64> {
    fn recurse(
        weights: &[f64],
        active: &mut Vec<bool>,
        mass: f64,
        remaining: usize,
        out: &mut Vec<f64>,
    ) {
        if remaining == 0 {
            return;
        }
        let total: f64 = weights
            .iter()
            .enumerate()
            .filter(|(i, _)| active[*i])
            .map(|(_, w)| *w)
            .sum();
        for i in 0..weights.len() {
            if !active[i] {
                continue;
            }
            let branch = mass * weights[i] / total;
            out[i] += branch;
            active[i] = false;
            recurse(weights, active, branch, remaining - 1, out);
            active[i] = true;
        }
    }

    let mut out = vec![0.0; weights.len()];
    let mut active = vec![true; weights.len()];
    recurse(weights, &mut active, 1.0, m.min(weights.len()), &mut out);
    out
}

/// Exact probability of every unordered `m`-subset under the same sequential
/// weighted draw, keyed by the sorted index set.
pub fn subset_probabilities(weights: &[f64], m: usize) -> BTreeMap<Vec<usize>, f64> {
    fn recurse(
        weights: &[f64],
        active: &mut Vec<bool>,
        picked: &mut Vec<usize>,
        mass: f64,
        remaining: usize,
        out: &mut BTreeMap<Vec<usize>, f64>,
    ) {
        if remaining == 0 {
            let mut key = picked.clone();
            key.sort_unstable();
            *out.entry(key).or_insert(0.0) += mass;
            return;
        }
        let total: f64 = weights
            .iter()
            .enumerate()
            .filter(|(i, _)| active[*i])
            .map(|(_, w)| *w)
            .sum();
        for i in 0..weights.len() {
            if !active[i] {
                continue;
            }
            let branch = mass * weights[i] / total;
            active[i] = false;
            picked.push(i);
            recurse(weights, active, picked, branch, remaining - 1, out);
            picked.pop();
            active[i] = true;
        }
    }

    let mut out = BTreeMap::new();
    let mut active = vec![true; weights.len()];
    recurse(weights, &mut active, &mut Vec::new(), 1.0, m.min(weights.len()), &mut out);
    out
}

/// Chi-square upper critical values at significance 0.001, by degrees of
/// freedom (standard table values).
pub fn chi_square_crit_001(df: usize) -> f64 {
    match df {
        1 => 10.828,
        2 => 13.816,
        3 => 16.266,
        4 => 18.467,
        5 => 20.515,
        9 => 27.877,
        14 => 36.123,
        19 => 43.820,
        _ => panic!("no frozen chi-square critical value for df = {df}"),
    }
}

/// Pearson chi-square statistic for observed counts against expected
/// probabilities over the same cells.
pub fn chi_square_statistic(observed: &[u64], expected_probs: &[f64], trials: u64) -> f64 {
    assert_eq!(observed.len(), expected_probs.len());
    observed
        .iter()
        .zip(expected_probs)
        .map(|(&o, &p)| {
            let e = p * trials as f64;
            assert!(e > 5.0, "chi-square cell too thin (expected {e})");
            let d = o as f64 - e;
            d * d / e
        })
        .sum()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based ranks; ties share the mean rank of their block.
        let shared = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Normal density.
pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Trapezoidal mass of N(mu, sigma^2) over [a, b] at a fixed step; the
/// independent quadrature oracle for the analytic CDF path.
pub fn trapezoid_normal_mass(mu: f64, sigma: f64, a: f64, b: f64, step: f64) -> f64 {
    assert!(b >= a);
    let n = ((b - a) / step).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let mut sum = 0.5 * (normal_pdf(a, mu, sigma) + normal_pdf(b, mu, sigma));
    for i in 1..n {
        sum += normal_pdf(a + h * i as f64, mu, sigma);
    }
    sum * h
}

/// Exhaustive binomial tail: over all 2^n outcome vectors, the probability
/// that at least `t` of `n` independent p-events occur. Only for small n.
pub fn enumerated_binomial_tail(n: usize, t: usize, p: f64) -> f64 {
    assert!(n <= 20, "enumeration oracle is 2^n");
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        let successes = mask.count_ones() as usize;
        if successes < t {
            continue;
        }
        total += p.powi(successes as i32) * (1.0 - p).powi((n - successes) as i32);
    }
    total
}

/// Mean of a slice.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
