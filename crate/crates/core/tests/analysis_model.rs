//! Checks of the analytical success model against independent oracles:
//! fixed-step trapezoidal quadrature for normal masses and exhaustive
//! outcome enumeration for binomial tails.

mod common;

use oraclesim_core::analysis::{
    agg_success_prob, best_window_start, single_trial_p, total_mass, window_mass, LatencyModel,
    Window,
};

#[test]
fn total_mass_matches_trapezoid_oracle() {
    let model = LatencyModel::new(100.0, 30.0).unwrap();
    // Integrate to mean + 12 sigma, where the remaining tail is below 1e-30.
    let oracle = common::trapezoid_normal_mass(100.0, 30.0, 0.0, 460.0, 1e-3);
    let analytic = total_mass(&model);
    assert!(
        (analytic - oracle).abs() < 1e-6,
        "analytic {analytic} vs trapezoid {oracle}"
    );
}

#[test]
fn window_mass_matches_trapezoid_oracle() {
    let cases = [
        (100.0, 30.0, 85.0, 30.0),
        (100.0, 30.0, 75.0, 50.0),
        (50.0, 40.0, 0.0, 60.0),
        (200.0, 15.0, 170.0, 60.0),
    ];
    for (mu, sigma, start, period) in cases {
        let model = LatencyModel::new(mu, sigma).unwrap();
        let window = Window::new(start, period).unwrap();
        let oracle = common::trapezoid_normal_mass(mu, sigma, start, start + period, 1e-3);
        let analytic = window_mass(&model, &window);
        assert!(
            (analytic - oracle).abs() < 1e-6,
            "mu={mu} sigma={sigma} window [{start}, {}): {analytic} vs {oracle}",
            start + period
        );
    }
}

/// The binomial tail agrees with brute-force enumeration over all 2^n
/// outcomes to within 1e-12 for every n <= 12, t <= n, and a spread of p.
#[test]
fn binomial_tail_matches_exhaustive_enumeration() {
    for n in 1..=12usize {
        for t in 1..=n {
            for p in [0.1, 0.35, 0.5, 0.9] {
                let closed = agg_success_prob(n, t, p).unwrap();
                let enumerated = common::enumerated_binomial_tail(n, t, p);
                assert!(
                    (closed - enumerated).abs() <= 1e-12,
                    "n={n} t={t} p={p}: closed {closed} vs enumerated {enumerated}"
                );
            }
        }
    }
}

/// Single-trial probability at the bridge operating point: the best 50-unit
/// window for N(100, 30^2) keeps roughly 60% of successful responses.
#[test]
fn bridge_operating_point_is_in_expected_range() {
    let model = LatencyModel::new(100.0, 30.0).unwrap();
    let start = best_window_start(&model, 50.0).unwrap();
    let window = Window::new(start, 50.0).unwrap();
    let p = single_trial_p(&model, &window);
    assert!((0.55..0.65).contains(&p), "single-trial p {p} out of expected band");
    // Conditioning on a positive draw can only concentrate the window mass.
    assert!(p >= window_mass(&model, &window));
}
