use approx::assert_relative_eq;
use proptest::prelude::*;
use wpc_core::fbl::*;

#[test]
fn required_snr_matches_bisection_oracle() {
    let t = FblTarget::new(100, 312, 1e-3, 1e-3).unwrap();
    let fixed = required_snr(&t).unwrap();
    let oracle = FblTarget::new(100, 312, 1e-3, 1e-10).unwrap();
    let bis = required_snr_bisection(&oracle, 8.0, 14.0).unwrap();
    assert!((fixed.gamma_hat - 10.83).abs() < 5e-3, "{}", fixed.gamma_hat);
    assert!((bis.gamma_hat - 10.83).abs() < 5e-3, "{}", bis.gamma_hat);
    assert!(fixed.iterations <= 4);
    assert!((block_error(bis.gamma_hat, 100, 312) - 1e-3).abs() < 1e-9);
    assert_relative_eq!(
        fixed.m_factor,
        (1.0 - (1.0 + fixed.gamma_hat).powi(-2)).sqrt(),
        max_relative = 1e-14
    );
}

#[test]
fn long_block_converges_in_three_iterations() {
    let t = FblTarget::new(1000, 312, 1e-9, 1e-2).unwrap();
    assert!(required_snr(&t).unwrap().iterations <= 3);
}

#[test]
fn excess_ratio_decreases_toward_limit() {
    let n = 100;
    let limit = snr_excess_limit(n, 1e-2).unwrap();
    let mut last = f64::INFINITY;
    for k in [50, 100, 200, 400, 800] {
        let t = FblTarget::new(n, k, 1e-2, 1e-9).unwrap();
        let d = snr_excess_ratio(&t).unwrap();
        assert!(d < last && d >= limit, "k={k} d={d}");
        last = d;
    }
    let t = FblTarget::new(n, 1000, 1e-2, 1e-9).unwrap();
    let d = snr_excess_ratio(&t).unwrap();
    assert!((d / limit - 1.0).abs() < 1e-2);
}

#[test]
fn block_error_decreases_with_blocklength_at_fixed_rate() {
    let mut last = 1.0;
    for n in [100u32, 200, 400, 800] {
        let e = block_error(3.0, n, (n as f64 * 1.5) as u32);
        assert!(e < last);
        last = e;
    }
}

proptest! {
    #[test]
    fn block_error_monotone_in_snr(n in 100u32..2000, k in 50u32..2000, g in 1e-3f64..1e3, dg in 1e-6f64..10.0) {
        prop_assert!(block_error(g + dg, n, k) <= block_error(g, n, k));
    }

    #[test]
    fn fixed_point_and_bisection_agree(n in 100u32..1500, k in 100u32..800, le in -9.0f64..-1.0) {
        let eps = 10f64.powf(le);
        let gd = 1e-3;
        let t = FblTarget::new(n, k, eps, gd).unwrap();
        let fixed = required_snr(&t).unwrap();
        let c = fixed.gamma_hat;
        let lo = (c - 2.0).max(1e-9);
        let hi = lo + 4.0;
        let bis = required_snr_bisection(&t, lo, hi).unwrap();
        prop_assert!((fixed.gamma_hat - bis.gamma_hat).abs() <= 2.0 * gd,
            "fixed {} bisection {}", fixed.gamma_hat, bis.gamma_hat);
        prop_assert!(fixed.iterations < bis.iterations);
    }

    #[test]
    fn ratio_bounded_by_limit(n in 100u32..2000, k in 20u32..4000, le in -12.0f64..-0.5) {
        let eps = 10f64.powf(le);
        let t = FblTarget::new(n, k, eps, 1e-9).unwrap();
        prop_assert!(snr_excess_ratio(&t).unwrap() >= snr_excess_limit(n, eps).unwrap() * (1.0 - 1e-9));
    }
}
