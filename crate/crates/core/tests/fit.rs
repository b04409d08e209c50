use proptest::prelude::*;
use vpaw::fit::{doubling_gaps, fit_two_regime, fit_two_regime_family, window_slopes, SharedTerm};

fn grid() -> Vec<f64> {
    (0..32).map(|i| 0.0125 * 2f64.powf(i as f64 / 8.0)).collect()
}

fn curve(a: f64, p: f64, b: f64, q: f64) -> Vec<(f64, f64)> {
    grid().into_iter().map(|e| (e, a * e.powf(p) + b * e.powf(-q))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn recovers_both_slopes(p in 2.0f64..10.0, q in 0.5f64..6.0, log_a in -2.0f64..6.0, log_b in -14.0f64..-6.0) {
        let pts = curve(10f64.powf(log_a), p, 10f64.powf(log_b), q);
        // both regimes must be visible on the grid for the fit to be identifiable
        let (lo, hi) = (pts[0].1, pts[31].1);
        let min = pts.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        prop_assume!(lo > 10.0 * min && hi > 10.0 * min);
        let f = fit_two_regime(&pts).unwrap();
        prop_assert!((f.increasing - p).abs() <= 1e-4 * p, "{} vs {p}", f.increasing);
        prop_assert!((f.decreasing + q).abs() <= 1e-4 * q, "{} vs {}", f.decreasing, -q);
    }
}

#[test]
fn family_shares_the_small_eta_slope() {
    let curves: Vec<_> = [(4.0, 1e3), (6.0, 1e5), (8.0, 1e7)]
        .iter()
        .map(|&(p, a)| curve(a, p, 1e-9, 3.0))
        .collect();
    let f = fit_two_regime_family(&curves, SharedTerm::Decreasing).unwrap();
    assert!((f.shared_slope + 3.0).abs() < 1e-6, "{}", f.shared_slope);
    for (c, p) in f.curves.iter().zip([4.0, 6.0, 8.0]) {
        assert!((c.increasing - p).abs() < 1e-6);
        assert_eq!(c.decreasing, f.shared_slope);
    }
}

#[test]
fn window_slopes_on_a_two_term_curve() {
    let pts = curve(1e4, 6.0, 1e-8, 2.0);
    let (inc, dec) = window_slopes(&pts, 3);
    // the minority term still bends each window a little
    assert!((inc.unwrap().slope - 6.0).abs() < 0.05);
    assert!((dec.unwrap().slope + 2.0).abs() < 0.05);
}

#[test]
fn doubling_gaps_read_off_scale_factors() {
    let base = curve(1e4, 6.0, 1e-8, 2.0);
    let scaled = |s: f64, t: f64| -> Vec<(f64, f64)> {
        base.iter().map(|&(e, v)| (e, if e < 0.05 { v * s } else { v * t })).collect()
    };
    let curves = vec![scaled(1.0, 1.0), scaled(1e-2, 0.5), scaled(1e-4, 0.25)];
    let (small, large) = doubling_gaps(&curves, 6).unwrap();
    assert!((small - 2.0).abs() < 1e-12);
    assert!((large - 2f64.log10()).abs() < 1e-12);
}
