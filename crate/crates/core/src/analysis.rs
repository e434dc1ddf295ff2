//! Analytical model of aggregation success.
//!
//! Oracle-node response latencies are modeled as a normal distribution
//! truncated to positive values. A task aggregates successfully when at
//! least `t` of `n` responses land inside one period-long agreement window
//! `[x, x + T]`:
//!
//! * `total_mass`  – probability mass of N(mu, sigma^2) on [0, inf); at
//!   least 1/2 for non-negative means, and the truncation normalizer;
//! * `window_mass` – mass on [x, x + T];
//! * `single_trial_p` – the conditional probability that one response lands
//!   in the window given that it happened at all;
//! * `agg_success_prob` – the binomial tail: P(at least t of n in-window);
//! * `best_window_start` – the window placement maximizing the mass;
//! * `monte_carlo_success` – a direct simulation of the same experiment,
//!   kept as a cross-check hook for the closed-form path.
//!
//! Normal masses use an analytic CDF (series-evaluated error function); an
//! adaptive-Simpson quadrature of the density is exposed alongside it so the
//! two routes can be compared rather than trusting any one special-function
//! implementation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::batch;

/// Invalid model or query parameters.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("standard deviation must be positive and finite, got {0}")]
    BadStdDev(f64),
    #[error("mean latency must be non-negative and finite, got {0}")]
    BadMean(f64),
    #[error("window start must be non-negative and finite, got {0}")]
    BadWindowStart(f64),
    #[error("window period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("threshold {threshold} must satisfy 1 <= t <= n = {nodes}")]
    BadThreshold { threshold: usize, nodes: usize },
    #[error("single-trial probability must lie in [0, 1], got {0}")]
    BadProbability(f64),
}

/// Response-latency model: N(mean, std_dev^2) truncated to (0, inf).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModel {
    pub mean: f64,
    pub std_dev: f64,
}

impl LatencyModel {
    pub fn new(mean: f64, std_dev: f64) -> Result<Self, AnalysisError> {
        if !mean.is_finite() || mean < 0.0 {
            return Err(AnalysisError::BadMean(mean));
        }
        if !std_dev.is_finite() || std_dev <= 0.0 {
            return Err(AnalysisError::BadStdDev(std_dev));
        }
        Ok(Self { mean, std_dev })
    }
}

/// Agreement window `[start, start + period]` on the latency axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub period: f64,
}

impl Window {
    pub fn new(start: f64, period: f64) -> Result<Self, AnalysisError> {
        if !start.is_finite() || start < 0.0 {
            return Err(AnalysisError::BadWindowStart(start));
        }
        if !period.is_finite() || period <= 0.0 {
            return Err(AnalysisError::BadPeriod(period));
        }
        Ok(Self { start, period })
    }

    pub fn end(&self) -> f64 {
        self.start + self.period
    }
}

/// Error function, accurate to roughly double precision.
///
/// Uses the non-alternating series
/// `erf(x) = (2/sqrt(pi)) x e^{-x^2} sum_k (2x^2)^k / (1*3*...*(2k+1))`
/// for |x| <= 6 (every term positive, no cancellation) and saturates beyond,
/// where `1 - |erf|` is below 1e-15.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    if ax > 6.0 {
        return 1.0_f64.copysign(x);
    }
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= 2.0 * x2 / (2.0 * f64::from(k) + 1.0);
        let next = sum + term;
        if next == sum || k > 300 {
            break;
        }
        sum = next;
    }
    let front = 2.0 / std::f64::consts::PI.sqrt() * x * (-x2).exp();
    front * sum
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Adaptive Simpson quadrature with an absolute tolerance, the fallback
/// route for normal masses.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }

    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 48)
}

fn density(model: &LatencyModel) -> impl Fn(f64) -> f64 {
    let (mu, sigma) = (model.mean, model.std_dev);
    move |x: f64| {
        let z = (x - mu) / sigma;
        (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// Mass of the (untruncated) latency normal on [0, inf). Lies in [1/2, 1]
/// because the model constrains the mean to be non-negative.
pub fn total_mass(model: &LatencyModel) -> f64 {
    normal_cdf(model.mean / model.std_dev)
}

/// Mass of the latency normal on the window (analytic CDF route).
pub fn window_mass(model: &LatencyModel, window: &Window) -> f64 {
    let hi = (window.end() - model.mean) / model.std_dev;
    let lo = (window.start - model.mean) / model.std_dev;
    normal_cdf(hi) - normal_cdf(lo)
}

/// Mass of the latency normal on the window via adaptive Simpson quadrature
/// of the density (absolute tolerance 1e-9), the fallback/cross-check route.
pub fn window_mass_quadrature(model: &LatencyModel, window: &Window) -> f64 {
    adaptive_simpson(&density(model), window.start, window.end(), 1e-9)
}

/// Probability that one response lands in the window, conditioned on the
/// response occurring (truncated-normal normalization).
pub fn single_trial_p(model: &LatencyModel, window: &Window) -> f64 {
    (window_mass(model, window) / total_mass(model)).clamp(0.0, 1.0)
}

/// Binomial tail P(at least `threshold` of `nodes` trials succeed), each
/// trial succeeding independently with probability `p`.
///
/// Exact coefficient arithmetic up to n = 50, log-space accumulation above
/// (where the coefficients themselves would overflow the integer range of
/// doubles).
pub fn agg_success_prob(nodes: usize, threshold: usize, p: f64) -> Result<f64, AnalysisError> {
    if threshold < 1 || threshold > nodes {
        return Err(AnalysisError::BadThreshold { threshold, nodes });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(AnalysisError::BadProbability(p));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let result = if nodes <= 50 {
        tail_direct(nodes, threshold, p)
    } else {
        tail_log_space(nodes, threshold, p)
    };
    Ok(result.clamp(0.0, 1.0))
}

fn tail_direct(n: usize, t: usize, p: f64) -> f64 {
    // Walk C(n, i) multiplicatively; exact in doubles for n <= 50.
    let mut coeff = 1.0;
    for i in 1..t {
        coeff = coeff * (n - i + 1) as f64 / i as f64;
    }
    let mut sum = 0.0;
    for i in t..=n {
        coeff = coeff * (n - i + 1) as f64 / i as f64;
        sum += coeff * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
    }
    sum
}

fn tail_log_space(n: usize, t: usize, p: f64) -> f64 {
    // ln C(n, i) built from a running sum of logs; terms combined in linear
    // space after exponentiation, scaled against the largest to avoid
    // underflow of the whole tail.
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let mut ln_coeff = 0.0;
    let mut ln_terms = Vec::with_capacity(n - t + 1);
    for i in 1..=n {
        ln_coeff += ((n - i + 1) as f64).ln() - (i as f64).ln();
        if i >= t {
            ln_terms.push(ln_coeff + i as f64 * ln_p + (n - i) as f64 * ln_q);
        }
    }
    let max = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: f64 = ln_terms.iter().map(|&lt| (lt - max).exp()).sum();
    (max + scaled.ln()).exp()
}

/// Success probability for every n in `n_from..=n_to` at fixed threshold and
/// single-trial probability. Nondecreasing in n by construction of the
/// experiment (extra nodes can only add in-window responses).
pub fn monotonicity_table(
    threshold: usize,
    p: f64,
    n_from: usize,
    n_to: usize,
) -> Result<Vec<(usize, f64)>, AnalysisError> {
    (n_from.max(threshold)..=n_to)
        .map(|n| agg_success_prob(n, threshold, p).map(|s| (n, s)))
        .collect()
}

/// Window start maximizing the window mass, located by ternary search on
/// [0, mean] (the mass is unimodal in the start position, peaking where the
/// window is centered on the mean, clamped to the non-negative axis).
pub fn best_window_start(model: &LatencyModel, period: f64) -> Result<f64, AnalysisError> {
    if !period.is_finite() || period <= 0.0 {
        return Err(AnalysisError::BadPeriod(period));
    }
    let mut lo = 0.0_f64;
    let mut hi = model.mean;
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        let ma = window_mass(model, &Window { start: a, period });
        let mb = window_mass(model, &Window { start: b, period });
        if ma < mb {
            lo = a;
        } else {
            hi = b;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Direct Monte Carlo of the aggregation experiment: draw `nodes`
/// truncated-normal latencies per task and count tasks with at least
/// `threshold` of them inside the window. Deterministic for a fixed seed
/// regardless of thread count (fixed 1024-task blocks, one derived RNG per
/// block, integer reduction).
pub fn monte_carlo_success(
    model: &LatencyModel,
    window: &Window,
    nodes: usize,
    threshold: usize,
    tasks: u64,
    seed: u64,
) -> f64 {
    const BLOCK: u64 = 1024;
    let full_blocks = tasks / BLOCK;
    let remainder = tasks % BLOCK;
    let blocks = (full_blocks + u64::from(remainder > 0)) as usize;
    let (mu, sigma) = (model.mean, model.std_dev);
    let (lo, hi) = (window.start, window.end());
    let successes = batch::sum_u64(blocks, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(batch::derive_seed(seed, "mc-block", b as u64));
        let block_tasks = if (b as u64) < full_blocks { BLOCK } else { remainder };
        let mut hits = 0u64;
        for _ in 0..block_tasks {
            let mut in_window = 0usize;
            for _ in 0..nodes {
                let latency = loop {
                    let z: f64 = rng.sample(StandardNormal);
                    let v = mu + sigma * z;
                    if v > 0.0 {
                        break v;
                    }
                };
                if latency >= lo && latency <= hi {
                    in_window += 1;
                }
            }
            hits += u64::from(in_window >= threshold);
        }
        hits
    });
    successes as f64 / tasks as f64
}
