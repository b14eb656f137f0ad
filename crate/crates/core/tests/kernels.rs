use std::f64::consts::LN_2;

use proptest::prelude::*;
use uavdh::opt_kernels::{water_fill, water_fill_budget, ScaSubproblem};
use uavdh::Point;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    // stationarity where p > 0, complementary slackness where p = 0
    #[test]
    fn water_fill_satisfies_kkt(
        lambda in 1e-4f64..1.0,
        mu_exp in -8.0f64..2.0,
        d_exp in 4.0f64..12.0,
        kappa in 1usize..20,
        slots in 1usize..400,
    ) {
        let mu = 10f64.powf(mu_exp);
        let dist_pow = 10f64.powf(d_exp);
        let gamma0 = 1e9;
        let k = kappa as f64;
        let wf = water_fill(lambda, mu, dist_pow, k, gamma0, slots).unwrap();
        let g = k * gamma0 / dist_pow;
        let marginal = |p: f64| lambda / slots as f64 * g / ((1.0 + g * p) * LN_2);
        prop_assert!(wf.power >= 0.0);
        if wf.power > 0.0 {
            prop_assert!((marginal(wf.power) - mu).abs() <= 1e-10 * mu);
        } else {
            prop_assert!(marginal(0.0) <= mu * (1.0 + 1e-10));
        }
        prop_assert!((wf.rate - (1.0 + g * wf.power).log2()).abs() <= 1e-10 * (1.0 + wf.rate));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn budget_fill_is_a_common_level(
        gains in proptest::collection::vec(1e-2f64..1e3, 1..8),
        budget in 1e-3f64..10.0,
    ) {
        let w = vec![1.0; gains.len()];
        let p = water_fill_budget(&w, &gains, budget);
        prop_assert!((p.iter().sum::<f64>() - budget).abs() <= 1e-9 * budget);
        let level = gains.iter().zip(&p).find(|(_, &pi)| pi > 0.0).map(|(g, pi)| pi + 1.0 / g).unwrap();
        for (g, pi) in gains.iter().zip(&p) {
            if *pi > 0.0 {
                prop_assert!((pi + 1.0 / g - level).abs() <= 1e-9 * level);
            } else {
                prop_assert!(1.0 / g >= level * (1.0 - 1e-12));
            }
        }
    }

    // the tangent bound is global and tight at the reference
    #[test]
    fn surrogate_never_exceeds_true_rate(
        ref_pts in proptest::collection::vec((-300.0f64..300.0, -300.0f64..300.0), 4),
        moved in proptest::collection::vec((-500.0f64..500.0, -500.0f64..500.0), 4),
        eps_exp in proptest::collection::vec(3.0f64..9.0, 8),
        alpha in 2.0f64..3.5,
    ) {
        let reference: Vec<Point> = ref_pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let sns = vec![Point::new(0.0, 0.0), Point::new(120.0, -40.0)];
        let eps: Vec<Vec<f64>> = eps_exp.chunks(2).map(|c| c.iter().map(|e| 10f64.powf(*e)).collect()).collect();
        let sub = ScaSubproblem::new(reference.clone(), sns, 100.0, alpha, eps, 1e6).unwrap();
        for (n, &(x, y)) in moved.iter().enumerate() {
            let q = Point::new(x, y);
            for k in 0..2 {
                let lb = sub.surrogate(n, k, &q);
                let tr = sub.true_rate(n, k, &q);
                prop_assert!(lb <= tr + 1e-12 * (1.0 + tr), "slot {n} sn {k}: {lb} > {tr}");
                let at = sub.surrogate(n, k, &reference[n]);
                prop_assert!((at - sub.true_rate(n, k, &reference[n])).abs() <= 1e-12 * (1.0 + at));
            }
        }
    }
}
