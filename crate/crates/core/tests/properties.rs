use horizon_approx::jet::Jet2;
use horizon_approx::montecarlo::fit_log_slope;
use horizon_approx::surrogate::{hamiltonian, SandwichGrid};
use horizon_approx::utility::GrowthGrid;
use horizon_approx::{
    check_growth_conditions, hjb_residual, pi_from_partials, pi_hat, sandwich, value_hat, CrraExact, GrowthCase,
    MarketModel, Partition, SchemeSurrogate, UtilitySpec, ValueSurrogate,
};
use proptest::prelude::*;

fn cv_model() -> impl Strategy<Value = MarketModel> {
    (0.02..0.15f64, 10.0..40.0f64, 0.5..1.5f64, -0.9..0.9f64)
        .prop_map(|(mu, m, beta, rho)| MarketModel::builtin_chacko_viceira(mu, m, beta, rho, 0.0).unwrap())
}

fn const_model() -> impl Strategy<Value = MarketModel> {
    (0.01..0.3f64, 0.1..0.5f64, -0.5..0.5f64, 0.1..1.0f64, -0.9..0.9f64, 0.0..0.05f64)
        .prop_map(|(mu, sigma, b, a, rho, r)| MarketModel::builtin_constant(mu, sigma, b, a, rho, r).unwrap())
}

fn builtin_utility() -> impl Strategy<Value = UtilitySpec> {
    prop_oneof![
        (1.5..6.0f64).prop_map(|g| UtilitySpec::power(g).unwrap()),
        (0.3..0.9f64).prop_map(|g| UtilitySpec::power(g).unwrap()),
        Just(UtilitySpec::log()),
        (0.5..2.0f64, 1.5..3.0f64, 0.5..2.0f64, 3.0..5.0f64)
            .prop_map(|(ca, a, cb, b)| UtilitySpec::mixture(ca, a, cb, b).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_hat_meets_terminal_data(u in builtin_utility(), m in cv_model(), x in 0.1..10.0f64, y in 5.0..60.0f64) {
        let v = value_hat(3.0, x, y, &u, &m, 3.0).unwrap().value;
        prop_assert_eq!(v, u.value(x).unwrap());
    }

    #[test]
    fn bounds_bracket_value_hat(m in cv_model(), tau in 0.0..1.0f64, x in 0.3..3.0f64, y in 10.0..40.0f64) {
        let u = UtilitySpec::power(3.0).unwrap();
        let grid = SandwichGrid { xs: vec![0.5, 1.0, 2.0], ys: vec![10.0, 25.0, 40.0], taus: vec![0.1] };
        let sb = sandwich(&u, &m, 2.0, GrowthCase::case2(3.0, 3.0).unwrap(), &grid, 1.5).unwrap();
        let t = 2.0 - tau;
        let lo = sb.lower.value(t, x, y).unwrap();
        let hat = value_hat(t, x, y, &u, &m, 2.0).unwrap().value;
        let up = sb.upper.value(t, x, y).unwrap();
        prop_assert!(lo <= hat && hat <= up);
        prop_assert!(sb.c2 >= 1.0);
    }

    #[test]
    fn power_growth_ratio_is_one_half(g in 0.2..8.0f64) {
        prop_assume!((g - 1.0).abs() > 1e-3);
        let u = UtilitySpec::power(g).unwrap();
        let rep = check_growth_conditions(&u, GrowthCase::case2(g, g).unwrap(), &GrowthGrid::default(), 1e-8).unwrap();
        prop_assert!(rep.pass);
        for r in &rep.ratios {
            prop_assert!((r.inf - 0.5).abs() < 1e-12 && (r.sup - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn log_pi_hat_is_myopic(m in cv_model(), t in 0.0..2.0f64, x in 0.1..10.0f64, y in 5.0..60.0f64) {
        let pi = pi_hat(t, x, y, &UtilitySpec::log(), &m, 2.0).unwrap();
        let want = m.lambda(y).unwrap() * x / m.sigma(y).unwrap();
        prop_assert!(((pi - want) / want).abs() < 1e-8);
    }

    #[test]
    fn exact_oracle_solves_hjb(m in cv_model(), g in prop_oneof![0.3..0.9f64, 1.2..8.0f64],
                               t in 0.0..2.0f64, x in 0.2..5.0f64, y in 5.0..60.0f64) {
        let e = CrraExact::new(g, &m, 2.0).unwrap();
        let r = hjb_residual(&e, t, x, y, &m).unwrap();
        prop_assert!(r.abs() < 1e-9 * e.value(t, x, y).unwrap().abs());
    }

    #[test]
    fn optimal_allocation_maximizes_hamiltonian(m in cv_model(), t in 0.0..1.9f64, x in 0.2..5.0f64,
                                                y in 5.0..60.0f64, d in -1.0..1.0f64) {
        let e = CrraExact::new(3.0, &m, 2.0).unwrap();
        let p = e.partials(t, x, y).unwrap();
        let pi = pi_from_partials(&p, &m, y).unwrap();
        let best = hamiltonian(&p, &m, y, pi).unwrap();
        prop_assert!(hamiltonian(&p, &m, y, pi + d).unwrap() <= best);
        prop_assert!(best.abs() < 1e-9 * p.value.abs());
    }

    #[test]
    fn drift_reconstruction(m in const_model(), y in -5.0..5.0f64) {
        let lhs = m.lambda(y).unwrap() * m.sigma(y).unwrap() + m.r();
        prop_assert!((lhs - m.mu(y).unwrap()).abs() <= 4.0 * f64::EPSILON * m.mu(y).unwrap().abs().max(1.0));
    }

    #[test]
    fn single_step_scheme_equals_value_hat(u in builtin_utility(), m in cv_model(), t in 0.0..2.0f64,
                                           x in 0.2..5.0f64, y in 5.0..60.0f64) {
        let s = SchemeSurrogate::new(u.clone(), m.clone(), Partition::uniform(2.0, 1).unwrap());
        let a = s.value(t, x, y).unwrap();
        let b = value_hat(t, x, y, &u, &m, 2.0).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-14 * b.abs().max(1e-300));
    }

    #[test]
    fn log_constant_scheme_is_myopic(lam in 0.05..1.5f64, sigma in 0.1..0.5f64, rho in -0.9..0.9f64,
                                     n in 1usize..6, t in 0.0..1.0f64, x in 0.2..5.0f64) {
        let m = MarketModel::builtin_constant(lam * sigma, sigma, 0.1, 0.3, rho, 0.0).unwrap();
        let s = SchemeSurrogate::new(UtilitySpec::log(), m.clone(), Partition::uniform(1.0, n).unwrap());
        let want = m.lambda(0.0).unwrap() * x / m.sigma(0.0).unwrap();
        prop_assert!(((s.portfolio(t, x, 0.0).unwrap() - want) / want).abs() < 1e-8);
    }

    #[test]
    fn jet_product_rule(a in 0.5..2.0f64, b in 0.5..2.0f64, c in -1.0..1.0f64) {
        // f = (x + c y)·x at (a, b): f_x = 2a + c b, f_y = c a, f_xy = c
        let x = Jet2::from_x_derivatives(&[a, 1.0], 3);
        let y = Jet2::from_y_derivatives(&[b, 1.0], 3);
        let f = &(&x + &(&y * c)) * &x;
        prop_assert!((f.partial(1, 0) - (2.0 * a + c * b)).abs() < 1e-12);
        prop_assert!((f.partial(0, 1) - c * a).abs() < 1e-12);
        prop_assert!((f.partial(1, 1) - c).abs() < 1e-12);
        let g = &f.recip() * &f;
        prop_assert!((g.value() - 1.0).abs() < 1e-12);
        for d in 1..=3usize {
            for j in 0..=d {
                prop_assert!(g.coeff(d - j, j).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn slope_recovers_power_law(p in 0.5..4.0f64, c in 0.01..10.0f64) {
        let taus = [0.5, 0.3, 0.2, 0.1, 0.05];
        let errs: Vec<f64> = taus.iter().map(|t: &f64| c * t.powf(p)).collect();
        let (slope, _) = fit_log_slope(&taus, &errs).unwrap();
        prop_assert!((slope - p).abs() < 1e-10);
    }
}
