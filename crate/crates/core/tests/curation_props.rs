use curation_laws::curation::{
    agnostic_p_gamma, constants, constants_closed_form, constants_quadrature, gamma_bounds, plane_moments,
    plane_moments_closed_form, plane_moments_quadrature, qpu_gamma, solve_u_for_gamma, CurationMode, GeometrySpec,
    PruningFunction, CONSTANTS_TOL,
};
use curation_laws::simulator::monte_carlo_constants;
use curation_laws::special_fn::IntervalUnion;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn fixed(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, rng_seed: RngSeed::Fixed(0x5eed), failure_persistence: None, ..ProptestConfig::default() }
}

fn geom_for_tau(tau: f64) -> GeometrySpec {
    let rg = tau / (1.0 + tau * tau).sqrt();
    GeometrySpec::new(rg, rg, 1.0).unwrap()
}

/// Up to three disjoint intervals built from sorted cut points; the last may be unbounded.
fn interval_union() -> impl Strategy<Value = PruningFunction> {
    (proptest::collection::vec(0.0f64..4.0, 2..=6), any::<bool>()).prop_filter_map("degenerate", |(mut cuts, open)| {
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        if cuts.len() < 2 {
            return None;
        }
        let mut iv: Vec<(f64, f64)> = cuts.chunks(2).filter(|c| c.len() == 2).map(|c| (c[0], c[1])).collect();
        if open {
            if let Some(last) = iv.last_mut() {
                last.1 = f64::INFINITY;
            }
        }
        IntervalUnion::new(iv).ok().map(PruningFunction::new)
    })
}

fn mode() -> impl Strategy<Value = CurationMode> {
    prop_oneof![Just(CurationMode::LabelAgnostic), Just(CurationMode::LabelAware)]
}

fn feasible_geometry() -> impl Strategy<Value = GeometrySpec> {
    (-0.95f64..0.95, -1.0f64..1.0, -1.0f64..1.0).prop_filter_map("infeasible", |(rg, a, b)| {
        // ρ_* and ρ from unit vectors in the plane/space spanned with w_o
        let s = (1.0 - rg * rg).sqrt();
        let rho_star = a;
        let t = (1.0 - a * a).sqrt();
        let rho = rg * a + s * t * b;
        GeometrySpec::new(rho, rg, rho_star).ok()
    })
}

proptest! {
    #![proptest_config(fixed(200))]

    #[test]
    fn closed_form_matches_quadrature(q in interval_union(), mode in mode(), tau in prop_oneof![Just(0.0), Just(0.5), Just(2.0)]) {
        let g = geom_for_tau(tau);
        let cf = constants_closed_form(&q, mode, &g).unwrap();
        let qd = constants_quadrature(&q, mode, &g).unwrap();
        prop_assert!(cf.max_abs_diff(&qd) <= CONSTANTS_TOL, "{:?} vs {:?}", cf, qd);
    }

    #[test]
    fn closed_form_matches_quadrature_generic_geometry(q in interval_union(), mode in mode(), g in feasible_geometry()) {
        let cf = constants_closed_form(&q, mode, &g).unwrap();
        let qd = constants_quadrature(&q, mode, &g).unwrap();
        prop_assert!(cf.max_abs_diff(&qd) <= CONSTANTS_TOL);
    }

    #[test]
    fn plane_moments_closed_form_matches_quadrature(q in interval_union(), mode in mode(), g in feasible_geometry()) {
        let cf = plane_moments_closed_form(&q, mode, &g).unwrap();
        let qd = plane_moments_quadrature(&q, mode, &g).unwrap();
        prop_assert!(cf.max_abs_diff(&qd) <= CONSTANTS_TOL, "{:?} vs {:?}", cf, qd);
        // the kept block [[γ, γ_ov], [γ_ov, γ_v]] is a second-moment matrix
        let c = constants_closed_form(&q, mode, &g).unwrap();
        prop_assert!(cf.gamma_v >= -1e-12 && cf.gamma_v <= agnostic_p_gamma(&q).0 + 1e-12);
        prop_assert!(c.gamma * cf.gamma_v - cf.gamma_ov * cf.gamma_ov >= -1e-12);
    }

    #[test]
    fn lens_containment(q in interval_union()) {
        let (p, gamma) = agnostic_p_gamma(&q);
        prop_assume!(p > 1e-6 && p <= 1.0);
        let (gmin, gmax) = gamma_bounds(p.min(1.0)).unwrap();
        prop_assert!(gamma >= gmin - 1e-10 && gamma <= gmax + 1e-10, "p={} gamma={} lens=[{}, {}]", p, gamma, gmin, gmax);
    }

    #[test]
    fn agnostic_beta_tilde_vanishes_at_tau_zero(q in interval_union()) {
        let c = constants_closed_form(&q, CurationMode::LabelAgnostic, &geom_for_tau(0.0)).unwrap();
        prop_assert_eq!(c.beta_tilde, 0.0);
    }
}

#[test]
fn qpu_gamma_monotone_in_u() {
    for i in 1..=20 {
        let p = i as f64 / 20.0 - 0.025;
        let mut prev = f64::NEG_INFINITY;
        for j in 0..20 {
            let u = j as f64 / 19.0;
            let g = qpu_gamma(p, u).unwrap();
            assert!(g >= prev - 1e-13, "p={p} u={u}: {g} < {prev}");
            prev = g;
        }
    }
}

#[test]
fn lens_endpoints() {
    for i in 1..=9 {
        let p = i as f64 / 10.0;
        let (gmin, gmax) = gamma_bounds(p).unwrap();
        assert!((qpu_gamma(p, 0.0).unwrap() - gmin).abs() <= 1e-9);
        assert!((qpu_gamma(p, 1.0).unwrap() - gmax).abs() <= 1e-9);
        let mid = 0.5 * (gmin + gmax);
        let u = solve_u_for_gamma(p, mid).unwrap();
        assert!((qpu_gamma(p, u).unwrap() - mid).abs() <= 1e-10);
    }
    assert_eq!(gamma_bounds(1.0).unwrap(), (1.0, 1.0));
}

proptest! {
    #![proptest_config(fixed(8))]

    #[test]
    fn monte_carlo_agrees_with_closed_form(q in interval_union(), mode in mode(), g in feasible_geometry(), seed in any::<u64>()) {
        let exact = constants(&q, mode, &g).unwrap();
        let mc = monte_carlo_constants(&q, mode, &g, 1_000_000, seed).unwrap();
        let pairs = [
            (exact.p, mc.estimate.p, mc.std_error.p),
            (exact.gamma, mc.estimate.gamma, mc.std_error.gamma),
            (exact.beta, mc.estimate.beta, mc.std_error.beta),
            (exact.beta_tilde, mc.estimate.beta_tilde, mc.std_error.beta_tilde),
        ];
        let pm = plane_moments(&q, mode, &g).unwrap();
        let pairs = pairs.into_iter().chain([
            (pm.gamma_v, mc.plane.gamma_v, mc.plane_std_error.gamma_v),
            (pm.gamma_ov, mc.plane.gamma_ov, mc.plane_std_error.gamma_ov),
        ]);
        for (e, m, se) in pairs {
            prop_assert!((e - m).abs() <= 4.0 * se + 1e-12, "{} vs {} (se {})", e, m, se);
        }
    }
}
