//! Closed-form SNR gain: mode equivalence, symmetries and Monte-Carlo agreement.

use hmbitcn::snr::{
    classify_mode, empirical_snr_gain, grid_search_coefficients, sample_correlated_pairs, theoretical_gain, verify_grid,
    FusionMode, SignalModel,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn gain_above_one_iff_difference_term_positive(
        a in -3.0f64..3.0, b in -3.0f64..3.0, rho in -1.0f64..=1.0, gamma in -1.0f64..=1.0,
    ) {
        if let Ok(gain) = theoretical_gain(a, b, rho, gamma) {
            prop_assert_eq!(gain > 1.0, 2.0 * a * b * (rho - gamma) > 0.0);
            let mode = classify_mode(a, b, rho, gamma);
            prop_assert_eq!(gain > 1.0, matches!(mode, FusionMode::Difference | FusionMode::Cooperative));
        }
    }

    #[test]
    fn gain_is_scale_and_swap_invariant(
        a in 0.1f64..3.0, b in -3.0f64..3.0, rho in -0.9f64..0.9, gamma in -0.9f64..0.9, k in 0.1f64..10.0,
    ) {
        if let Ok(g) = theoretical_gain(a, b, rho, gamma) {
            let scaled = theoretical_gain(k * a, k * b, rho, gamma).unwrap();
            let swapped = theoretical_gain(b, a, rho, gamma).unwrap();
            prop_assert!((g - scaled).abs() <= 1e-12 * g.max(1.0));
            prop_assert!((g - swapped).abs() <= 1e-12 * g.max(1.0));
        }
    }
}

#[test]
fn equal_correlations_are_neutral() {
    for r in [-0.5, 0.0, 0.7] {
        assert_eq!(theoretical_gain(1.0, -2.0, r, r).unwrap(), 1.0);
        assert_eq!(classify_mode(1.0, -2.0, r, r), FusionMode::Neutral);
    }
}

#[test]
fn fully_cancelled_noise_is_degenerate() {
    assert!(matches!(theoretical_gain(1.0, -1.0, 0.0, 1.0), Err(hmbitcn::Error::Degenerate(_))));
}

#[test]
fn monte_carlo_tracks_theory_at_moderate_sample_size() {
    let model = SignalModel::new(2.0, 3.0, 0.3, -0.6).unwrap();
    let p = sample_correlated_pairs(&model, 400_000, 5).unwrap();
    for (a, b) in [(1.0, 1.0), (1.0, -0.5), (0.3, 1.0)] {
        let th = theoretical_gain(a, b, 0.3, -0.6).unwrap();
        let em = empirical_snr_gain(a, b, &p.s1, &p.s2, &p.e1, &p.e2).unwrap();
        assert!((em - th).abs() / th < 0.02, "a={a} b={b}: {em} vs {th}");
    }
}

#[test]
fn grid_search_never_beats_the_analytic_supremum() {
    // For unit variances the best achievable gain is max over the two
    // eigen-directions: (1 ± ρ)/(1 ± γ).
    for (rho, gamma) in [(0.0, 0.8), (0.5, -0.5), (-0.3, 0.2)] {
        let best = grid_search_coefficients(rho, gamma, 3600).unwrap();
        let sup = f64::max((1.0 + rho) / (1.0 + gamma), (1.0 - rho) / (1.0 - gamma)).max(1.0);
        assert!(best.gain <= sup + 1e-9 && best.gain >= sup * 0.999, "{rho},{gamma}: {} vs {sup}", best.gain);
    }
}

#[test]
fn verification_grid_is_reproducible() {
    let coefs = [(1.0, 1.0), (1.0, -1.0)];
    let a = verify_grid(&coefs, &[0.0, 0.5], 2000, 3).unwrap();
    let b = verify_grid(&coefs, &[0.0, 0.5], 2000, 3).unwrap();
    assert_eq!(a, b);
}
