use proptest::prelude::*;
use robust_merton_core::{
    build_schedule_log, build_schedule_power, maximize_f, solve_ql, solve_qp, Clamp, ConstraintBox,
    ExtReal, Monotonicity, Rates, Scenario, UncertaintySet, UtilitySpec,
};

fn scenario(utility: UtilitySpec, c_lo: f64, c_hi: f64, horizon: f64) -> Scenario {
    Scenario {
        utility,
        rates: Rates { lend: 0.02, borrow: 0.04 },
        constraints: ConstraintBox {
            pi_lo: ExtReal::Finite(-1.0),
            pi_hi: ExtReal::Finite(2.0),
            c_lo,
            c_hi: ExtReal::from(c_hi),
        },
        uncertainty: UncertaintySet::Rect { mu_lo: 0.1, mu_hi: 0.12, sigma_lo: 0.1, sigma_hi: 0.2 },
        horizon,
        x0: 1.0,
    }
}

fn pieces_cover(s: &Scenario, pieces: &[robust_merton_core::SchedulePiece]) {
    assert_eq!(pieces.first().unwrap().t_lo, 0.0);
    assert_eq!(pieces.last().unwrap().t_hi, s.horizon);
    for w in pieces.windows(2) {
        assert_eq!(w[0].t_hi, w[1].t_lo);
        assert_ne!(w[0].regime, w[1].regime);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn power_schedule_is_pointwise_optimum(
        p in prop_oneof![Just(-1.0), Just(0.3), Just(0.5)],
        lambda in 0.05f64..2.0,
        rho in 0.0f64..0.2,
        k in -0.05f64..0.1,
        c_lo in 0.0f64..0.05,
        width in 0.01f64..0.5,
        horizon in 1.0f64..60.0,
        frac in 0.0f64..=1.0,
    ) {
        let s = scenario(UtilitySpec::power(p, lambda, rho), c_lo, c_lo + width, horizon);
        let sol = solve_qp(&s, k).unwrap();
        let sched = build_schedule_power(&sol, &s).unwrap();
        pieces_cover(&s, &sched.pieces);
        let t = frac * horizon;
        let best = maximize_f(sol.q(t), &s).unwrap().c_star;
        prop_assert!((sched.eval(t) - best).abs() <= 1e-12 * best.max(1.0));
        let samples: Vec<f64> = (0..=200).map(|i| sched.eval(horizon * i as f64 / 200.0)).collect();
        let ok = samples.windows(2).all(|w| match sched.monotonicity {
            Monotonicity::Nondecreasing => w[1] >= w[0] - 1e-12,
            Monotonicity::Nonincreasing => w[1] <= w[0] + 1e-12,
            Monotonicity::Constant => (w[1] - w[0]).abs() <= 1e-12,
        });
        prop_assert!(ok);
    }

    #[test]
    fn log_interior_consumption_matches_exponent(
        lambda in 0.01f64..0.2,
        rho in 0.005f64..0.2,
        horizon in 1.0f64..100.0,
        frac in 0.0f64..1.0,
    ) {
        let s = scenario(UtilitySpec::log(lambda, rho), 0.02, 0.05, horizon);
        let l = solve_ql(&s, 0.05).unwrap();
        let sched = build_schedule_log(&l, &s).unwrap();
        pieces_cover(&s, &sched.pieces);
        let t = frac * horizon;
        let c = sched.eval(t);
        let raw = lambda * (-l.q(t)).exp();
        prop_assert!((c - raw.clamp(0.02, 0.05)).abs() <= 1e-14);
        let piece = sched.pieces.iter().find(|p| p.t_lo <= t && t <= p.t_hi).unwrap();
        if piece.regime == Clamp::Interior && t > piece.t_lo && t < piece.t_hi {
            prop_assert!((c * l.q(t).exp() - lambda).abs() <= 1e-14 * lambda.max(1.0) * 4.0);
        }
    }
}
