use std::f64::consts::LN_2;

use proptest::prelude::*;
use uavdh::hover::{inner_search_on, solve_p2_benchmark, solve_p2_on, HoverConfig, HoverGrid};
use uavdh::opt_kernels::{DualPoint, Mode};
use uavdh::scenario::{generate_scenario, MissionTemplate, Point, Scenario};
use uavdh_oracles as oracle;

fn tiny(seed: u64, k: usize, m: usize) -> Scenario {
    let mut t = MissionTemplate::default();
    t.uav.m = m;
    t.uav.q_i = [0.0, 0.0];
    t.uav.q_f = [200.0, 200.0];
    generate_scenario(seed, k, 200.0, &t).unwrap()
}

fn grid5(side: f64) -> Vec<Point> {
    let mut pts = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            pts.push(Point::new(side * i as f64 / 4.0, side * j as f64 / 4.0));
        }
    }
    pts
}

#[test]
fn tiny_instances_match_exhaustive_plans() {
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let k = 1 + (case % 2) as usize;
        let m = 2 + (case % 3) as usize;
        let mode = if case % 4 == 3 { Mode::Mrc } else { Mode::Proposed };
        let s = tiny(100 + case, k, m);
        let pts = grid5(200.0);
        let plan = solve_p2_on(&s, &HoverGrid::from_points(&s, pts.clone()), mode, &HoverConfig::default()).unwrap();
        let brute = oracle::brute_force_hover(&s, &pts, mode);
        worst = worst.max((plan.rate - brute).abs());
        assert!(
            (plan.rate - brute).abs() <= 1e-3,
            "case {case} (K={k}, M={m}, {mode}): solver {} vs exhaustive {brute}",
            plan.rate
        );
    }
    eprintln!("largest deviation from exhaustive plans: {worst:.2e}");
}

#[test]
fn two_sn_dual_matches_grid_search() {
    for seed in [1u64, 2, 3] {
        let s = tiny(seed, 2, 4);
        let pts = grid5(200.0);
        let plan = solve_p2_on(&s, &HoverGrid::from_points(&s, pts.clone()), Mode::Proposed, &HoverConfig::default()).unwrap();
        let mu_max = 10.0 / (s.slots as f64 * s.radio.pbar * LN_2);
        let g = oracle::dual_grid_search_two_sns(&s, &pts, Mode::Proposed, mu_max);
        assert!((plan.dual_value - g).abs() <= 1e-3, "seed {seed}: ellipsoid {} vs grid {g}", plan.dual_value);
    }
}

#[test]
fn single_sn_hovers_above_it_at_full_power() {
    let s = tiny(5, 1, 4);
    let sn = s.sns[0];
    let pts = vec![sn, sn + Point::new(30.0, 0.0), sn + Point::new(0.0, -60.0)];
    let plan = solve_p2_on(&s, &HoverGrid::from_points(&s, pts), Mode::Proposed, &HoverConfig::default()).unwrap();
    assert_eq!(plan.hover_count(), 1);
    assert_eq!(plan.points[0].grid_index, 0);
    assert!((plan.points[0].duration - s.horizon).abs() < 1e-9);
    let expect = (1.0 + 4.0 * s.radio.pbar * s.radio.gamma0 / s.dist_pow(&sn, 0)).log2();
    assert!((plan.rate - expect).abs() < 1e-6, "{} vs {expect}", plan.rate);
}

#[test]
fn plan_invariants_and_mode_restrictions() {
    let s = generate_scenario(11, 4, 400.0, &MissionTemplate::default()).unwrap();
    let cfg = HoverConfig::default();
    let mut rates = Vec::new();
    for mode in Mode::ALL {
        let plan = solve_p2_benchmark(&s, mode, &cfg).unwrap();
        let total: f64 = plan.points.iter().map(|p| p.duration).sum();
        assert!((total - s.horizon).abs() < 1e-9);
        assert!(plan.points.iter().all(|p| p.duration >= 1e-6 * s.horizon));
        // r equals the time-weighted per-SN rates
        for k in 0..s.num_sns() {
            let r: f64 = plan.points.iter().map(|p| p.duration * p.rate[k]).sum::<f64>() / s.horizon;
            assert!((r - plan.sn_rates[k]).abs() < 1e-9);
            let e: f64 = plan.points.iter().map(|p| p.duration * p.power[k]).sum::<f64>() / s.horizon;
            assert!(e <= s.radio.pbar * (1.0 + 1e-9));
        }
        let min = plan.sn_rates.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min - plan.rate).abs() < 1e-9);
        assert!(plan.duality_gap() <= 1e-3 && plan.duality_gap() >= -1e-9, "{mode}: gap {}", plan.duality_gap());
        if mode != Mode::Proposed {
            assert!(plan.points.iter().all(|p| p.active.len() <= 1));
        }
        // best-so-far dual values never increase
        assert!(plan.dual_trace.windows(2).all(|w| w[1] <= w[0]));
        rates.push(plan.rate);
    }
    assert!(rates[0] >= rates[1] - 1e-6 && rates[1] >= rates[2] - 1e-6, "{rates:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inner_search_matches_subset_enumeration(
        seed in 0u64..1000,
        m in 2usize..9,
        w in proptest::collection::vec(0.0f64..1.0, 3),
        mu_exp in proptest::collection::vec(-2.0f64..1.0, 3),
    ) {
        let s = tiny(seed, 3, m);
        let pts = grid5(200.0);
        let grid = HoverGrid::from_points(&s, pts.clone());
        let total: f64 = w.iter().sum::<f64>().max(1e-9);
        let lambda: Vec<f64> = w.iter().map(|x| x / total).collect();
        let base = 1.0 / (3.0 * s.radio.pbar * s.slots as f64 * LN_2);
        let mu: Vec<f64> = mu_exp.iter().map(|e| base * 10f64.powf(*e)).collect();
        for mode in Mode::ALL {
            let opts = mode.schedule_options(3, m);
            let sol = inner_search_on(&s, &grid, &DualPoint { lambda: lambda.clone(), mu: mu.clone() }, &opts);
            let (v, _, e) = oracle::enumerate_hover_inner(&s, &pts, &lambda, &mu, mode);
            prop_assert!((sol.objective - v).abs() <= 1e-10 * (1.0 + v.abs()), "{mode}: {} vs {v}", sol.objective);
            if v > 0.0 {
                prop_assert_eq!(sol.kappa, e.kappa);
            }
        }
    }
}
