use proptest::prelude::*;
use sparse_amp::operators::CouplingEnsemble;
use sparse_amp::potential::{
    phi_large_b, phi_sections, BiGaussianFamily, PotentialCurve, SectionFamily, CURVE_POINTS,
};
use sparse_amp::priors::{BiGaussian, MixturePrior};
use sparse_amp::state_evolution::sections::se_run_sections;
use sparse_amp::state_evolution::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// From the prior variance the recursion never increases the error.
    #[test]
    fn recursion_is_monotone_from_the_top(rho in 0.02f64..0.6, eps in 1e-6f64..0.1, alpha in 0.05f64..1.0, delta in 0.0f64..0.01) {
        let se = BiGaussianSe::new(BiGaussian::approx_sparse(rho, eps));
        let run = se_run_scalar(&se, alpha, delta, se.e0(), 1e-13, 400).unwrap();
        for w in run.trajectory.windows(2) {
            prop_assert!(w[1][0] <= w[0][0] * (1.0 + 1e-12) + 1e-15);
        }
    }

    /// More measurements never give a worse fixed point.
    #[test]
    fn fixed_point_decreases_with_rate(rho in 0.02f64..0.6, eps in 1e-6f64..0.1, alpha in 0.05f64..0.9) {
        let se = BiGaussianSe::new(BiGaussian::approx_sparse(rho, eps));
        let lo = se_run_scalar(&se, alpha, 0.0, se.e0(), 1e-13, 20_000).unwrap().last()[0];
        let hi = se_run_scalar(&se, alpha + 0.1, 0.0, se.e0(), 1e-13, 20_000).unwrap().last()[0];
        prop_assert!(hi <= lo * (1.0 + 1e-9) + 1e-15, "{hi} > {lo}");
    }

    /// A single-block coupling ensemble is the homogeneous recursion.
    #[test]
    fn trivial_coupling_equals_homogeneous(rho in 0.02f64..0.6, eps in 1e-6f64..0.1, alpha in 0.1f64..1.0, delta in 0.0f64..0.01) {
        let se = BiGaussianSe::new(BiGaussian::approx_sparse(rho, eps));
        let coupled = CoupledSe::from_ensemble(&CouplingEnsemble::homogeneous(alpha), delta, 1, &se).unwrap();
        let mut e = coupled.initial();
        let run = se_run_scalar(&se, alpha, delta, se.e0(), 1e-300, 30).unwrap();
        // the run stops early once the error stops changing
        for t in 1..run.trajectory.len() {
            e = coupled.step(&e).unwrap();
            let h = run.trajectory[t][0];
            prop_assert!((e[0] - h).abs() <= 1e-10 * h.max(1e-300), "t={t}: {} vs {h}", e[0]);
        }
    }
}

#[test]
fn constant_power_allocation_equals_homogeneous_sections() {
    let map = SectionsB2;
    let (rate, snr) = (1.5, 15.0);
    let alpha = section_alpha(2, rate);
    let run = se_run_sections(&map, rate, snr, map.e0(), 1e-300, 40).unwrap();
    let coupled = CoupledSe::from_ensemble(&CouplingEnsemble::homogeneous(alpha), 1.0 / snr, 2, &map).unwrap();
    let mut ec = coupled.initial();
    let mut ep = vec![map.e0(); 4];
    for t in 1..=40 {
        ec = coupled.step(&ec).unwrap();
        ep = se_step_power_allocated(&ep, &[1.0; 4], 2, rate, snr, &map).unwrap();
        let h = run.trajectory[t][0];
        assert!((ec[0] - h).abs() <= 1e-10 * h, "t={t}");
        for g in &ep {
            assert!((g - h).abs() <= 1e-10 * h, "t={t}");
        }
    }
}

#[test]
fn nishimori_holds_only_for_the_matched_prior() {
    let truth = MixturePrior::gauss_bernoulli(0.2);
    let cfg = SeConfig { mc_samples: 200_000, seed: 4, ..SeConfig::default() };
    for (e, alpha) in [(0.15, 0.4), (0.05, 0.6), (0.01, 0.3)] {
        let r = nishimori_check(&truth, &truth, e, alpha, 1e-3, &cfg);
        assert!(r.matched, "{r:?}");
        assert!(r.e_form.agrees(&r.v_form, 3.0));
    }
    let wrong = MixturePrior::gauss_bernoulli(0.6);
    let r = nishimori_check(&truth, &wrong, 0.15, 0.4, 1e-3, &cfg);
    assert!(!r.matched, "{r:?}");
}

/// Every potential maximum sits within one grid cell of a fixed point of
/// the recursion started from one of the two ends.
#[test]
fn potential_maxima_are_recursion_fixed_points() {
    let family = BiGaussianFamily::new(0.2, 1e-6, 0.0);
    let se = family.se;
    for alpha in [0.25, 0.3, 0.33, 0.4, 0.6] {
        let curve = PotentialCurve::evaluate(&family, alpha, CURVE_POINTS);
        let ratio = curve.e[1] / curve.e[0];
        let top = se_run_scalar(&se, alpha, 0.0, se.e0(), 1e-15, 200_000).unwrap().last()[0];
        let bottom = se_run_scalar(&se, alpha, 0.0, 1e-9, 1e-15, 200_000).unwrap().last()[0];
        for &(e, _) in &curve.maxima {
            let near = |fp: f64| (e / fp).ln().abs() <= ratio.ln();
            assert!(near(top) || near(bottom), "alpha {alpha}: max at {e}, fixed points {top} {bottom}");
        }
        // the recursion from the top stops at the highest-error maximum
        let last = curve.maxima.last().unwrap().0;
        assert!((last / top).ln().abs() <= ratio.ln(), "alpha {alpha}: {last} vs {top}");
    }
}

#[test]
fn section_potential_maxima_are_recursion_fixed_points() {
    let map = SectionsB2;
    let snr = 100.0;
    let family = SectionFamily { map: &map, snr };
    for rate in [1.5, 2.2, 2.5] {
        let curve = PotentialCurve::evaluate(&family, rate, CURVE_POINTS);
        let ratio = curve.e[1] / curve.e[0];
        let top = se_run_sections(&map, rate, snr, map.e0(), 1e-16, 200_000).unwrap().last()[0];
        let last = curve.maxima.last().unwrap().0;
        // a maximum on the grid's lower end stands for any fixed point below it
        let at_floor = last == curve.e[0] && top <= last;
        assert!(at_floor || (last / top).ln().abs() <= ratio.ln(), "R {rate}: {last} vs {top}");
    }
}

/// The per-`ln B` section potential approaches the large-`B` limit, and the
/// gap shrinks with `B` at every section error.
#[test]
fn section_potential_approaches_the_large_b_limit() {
    let (rate, snr) = (1.5, 15.0);
    let ets = [0.01, 0.05, 0.1, 0.3, 0.5, 0.8];
    let mut gaps = Vec::new();
    for log_b in [6u32, 8, 10] {
        let b = 1usize << log_b;
        let map = SectionMc { b, samples: 20_000, seed: 1 };
        let lnb = (b as f64).ln();
        let row: Vec<f64> = ets
            .iter()
            .map(|&et| {
                let p = phi_sections(et / b as f64, &map, rate, snr).unwrap();
                (p.value / lnb - phi_large_b(et, rate, snr).0).abs()
            })
            .collect();
        gaps.push(row);
    }
    for k in 0..ets.len() {
        assert!(gaps[1][k] <= gaps[0][k] + 1e-4 && gaps[2][k] <= gaps[1][k] + 1e-4, "{gaps:?}");
    }
    assert!(gaps[2][0] < 1e-3 && gaps[2][1] < 1e-3 && gaps[2][2] < 3e-3, "{:?}", gaps[2]);
}
