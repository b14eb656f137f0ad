use uavdh::energy::{mission_energy, propulsion_power, PropulsionParams};
use uavdh::scenario::{generate_scenario, MissionTemplate, Point};
use uavdh::trajectory::Trajectory;

#[test]
fn derivative_matches_finite_differences() {
    let p = PropulsionParams::default();
    // closed-form derivative of each term
    let deriv = |v: f64| {
        let v04 = p.v0.powi(4);
        let v02 = p.v0 * p.v0;
        let root = (1.0 + v.powi(4) / (4.0 * v04)).sqrt();
        let inner = root - v * v / (2.0 * v02);
        let d_inner = v.powi(3) / (2.0 * v04 * root) - v / v02;
        6.0 * p.p0 * v / (p.u_tip * p.u_tip) + p.pi * d_inner / (2.0 * inner.sqrt())
            + 1.5 * p.d1 * p.rho * p.s * p.area * v * v
    };
    for &v in &[0.5, 2.0, 4.03, 7.5, 12.0, 20.0, 30.0] {
        let h = 1e-5 * v;
        let fd = (propulsion_power(v + h, &p) - propulsion_power(v - h, &p)) / (2.0 * h);
        let exact = deriv(v);
        assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "v = {v}: {fd} vs {exact}");
    }
}

#[test]
fn fast_flight_costs_more_than_cruise() {
    let p = PropulsionParams::default();
    let best = (1..300)
        .map(|i| i as f64 * 0.1)
        .min_by(|a, b| (propulsion_power(*a, &p) / a).total_cmp(&(propulsion_power(*b, &p) / b)))
        .unwrap();
    assert!(propulsion_power(30.0, &p) > propulsion_power(best, &p));
}

#[test]
fn energy_properties() {
    let s = generate_scenario(1, 2, 500.0, &MissionTemplate::default()).unwrap().with_slots(50).unwrap();
    let p = PropulsionParams::default();
    let still = Trajectory::stationary(Point::new(10.0, 20.0), &s);
    let e = mission_energy(&still, &p);
    assert!((e - 50.0 * s.delta * 168.4842).abs() < 1e-9);

    let path: Vec<Point> = (0..50).map(|i| Point::new((i * i % 37) as f64 * 3.0, i as f64 * 2.0)).collect();
    let fwd = Trajectory { points: path.clone(), ..still.clone() };
    let mut rev = path.clone();
    rev.reverse();
    let back = Trajectory { points: rev, ..still.clone() };
    assert!((mission_energy(&fwd, &p) - mission_energy(&back, &p)).abs() < 1e-9);

    // one hover slot replaced by fast motion
    let mut moved = vec![Point::new(0.0, 0.0); 50];
    for q in moved.iter_mut().skip(25) {
        *q = Point::new(0.0, 20.0 * s.delta);
    }
    let m = Trajectory { points: moved, ..still };
    assert!(mission_energy(&m, &p) > e);
}
