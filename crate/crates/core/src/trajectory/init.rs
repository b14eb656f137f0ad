//! Initial trajectory from the tour: full-speed legs plus dwell when time allows,
//! otherwise a disk-neighbourhood tour (common radius R, bisected) flown in exactly T.

use log::debug;

use crate::error::{Error, Result};
use crate::scenario::{Point, Scenario};

use super::tour::{self, TourPlan};
use super::Trajectory;

/// Alternations of touch-point projection and reordering.
const TSPN_ROUNDS: usize = 8;
const BISECTION_STEPS: usize = 60;

fn leg_steps(len: f64, cap: f64) -> usize {
    if len <= 0.0 {
        0
    } else {
        (len / cap - 1e-12).ceil().max(1.0) as usize
    }
}

/// Largest-remainder apportionment of `total` units in proportion to `weights`
/// (equal split when all weights are zero).
pub fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    if weights.is_empty() {
        return Vec::new();
    }
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = if sum > 0.0 {
        weights.iter().map(|w| total as f64 * w / sum).collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut out: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut left = total - out.iter().sum::<usize>();
    let mut rest: Vec<(f64, usize)> = shares.iter().enumerate().map(|(i, s)| (s - s.floor(), i)).collect();
    rest.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in &rest {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

pub fn initial_trajectory(scenario: &Scenario, tour: &TourPlan) -> Result<Trajectory> {
    let n = scenario.slots;
    let cap = scenario.step_cap();
    let waypoints = tour.waypoints();
    let steps: Vec<usize> = waypoints.windows(2).map(|w| leg_steps((w[1] - w[0]).norm(), cap)).collect();
    let flight: usize = steps.iter().sum();
    if n >= 1 && flight <= n - 1 {
        let weights: Vec<f64> = tour.order.iter().map(|&i| tour.dwell[i]).collect();
        let dwell = apportion(&weights, n - 1 - flight);
        let mut points = Vec::with_capacity(n);
        points.push(waypoints[0]);
        for (leg, w) in waypoints.windows(2).enumerate() {
            let s = steps[leg];
            for j in 1..=s {
                points.push(if j == s { w[1] } else { w[0] + (w[1] - w[0]) * (j as f64 / s as f64) });
            }
            if leg < dwell.len() {
                points.extend(std::iter::repeat(w[1]).take(dwell[leg]));
            }
        }
        debug_assert_eq!(points.len(), n);
        return Ok(Trajectory::new(points, scenario));
    }
    let (path, radius) = tspn(scenario, tour)?;
    debug!("visiting neighbourhoods of radius {radius:.2} m");
    Ok(Trajectory::new(resample(&path, n), scenario))
}

/// `h` moved toward `p`, but by no more than `radius`.
fn retract(h: Point, p: Point, radius: f64) -> Point {
    let d = p - h;
    let len = d.norm();
    if len <= radius || len == 0.0 {
        p
    } else {
        h + d * (radius / len)
    }
}

fn project(h: Point, a: Point, b: Point) -> Point {
    let ab = b - a;
    let l2 = ab.norm_squared();
    if l2 == 0.0 {
        return a;
    }
    a + ab * ((h - a).dot(&ab) / l2).clamp(0.0, 1.0)
}

fn polyline_length(start: Point, mid: &[Point], end: Point) -> f64 {
    let mut prev = start;
    let mut total = 0.0;
    for &p in mid {
        total += (p - prev).norm();
        prev = p;
    }
    total + (end - prev).norm()
}

/// Touch points for hubs visited in `order`: each hub retracted toward the segment joining
/// its neighbouring touch points.
fn touch_points(hubs: &[Point], order: &[usize], start: Point, end: Point, radius: f64) -> Vec<Point> {
    let mut w: Vec<Point> = order.iter().map(|&i| hubs[i]).collect();
    for _ in 0..4 {
        for i in 0..w.len() {
            let prev = if i == 0 { start } else { w[i - 1] };
            let next = if i + 1 == w.len() { end } else { w[i + 1] };
            let h = hubs[order[i]];
            w[i] = retract(h, project(h, prev, next), radius);
        }
    }
    w
}

/// Smallest radius in `[0, hi]` with `len(R) <= budget`, if any.
fn bisect_radius(len: impl Fn(f64) -> f64, hi: f64, budget: f64) -> Option<f64> {
    if len(0.0) <= budget {
        return Some(0.0);
    }
    if len(hi) > budget {
        return None;
    }
    let (mut lo, mut up) = (0.0, hi);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + up);
        if len(mid) <= budget {
            up = mid;
        } else {
            lo = mid;
        }
    }
    Some(up)
}

/// Returns the waypoint polyline (start and end included) and its radius.
fn tspn(scenario: &Scenario, tour: &TourPlan) -> Result<(Vec<Point>, f64)> {
    let n = scenario.slots;
    let start = scenario.q_init;
    let end = scenario.q_final;
    let budget = n.saturating_sub(1) as f64 * scenario.step_cap() * (1.0 - 1e-12);
    let hubs: Vec<Point> = tour.points.iter().map(|p| Point::new(p[0], p[1])).collect();
    let mut all = hubs.clone();
    all.push(start);
    all.push(end);
    let r_max = all
        .iter()
        .flat_map(|a| all.iter().map(move |b| (a - b).norm()))
        .fold(0.0, f64::max);

    let mut best: Option<(f64, Vec<Point>)> = None;
    let mut consider = |r: f64, mid: Vec<Point>| {
        if best.as_ref().map_or(true, |b| r < b.0) {
            best = Some((r, mid));
        }
    };

    // tour variant: alternate radius bisection and reordering on the touch points
    let mut order = tour.order.clone();
    for _ in 0..TSPN_ROUNDS {
        let len = |r: f64| polyline_length(start, &touch_points(&hubs, &order, start, end, r), end);
        let Some(r) = bisect_radius(len, r_max, budget) else { break };
        let touch = touch_points(&hubs, &order, start, end, r);
        consider(r, touch.clone());
        // reorder hubs by their current touch points
        let mut perm: Vec<usize> = (0..order.len()).collect();
        tour::two_opt(&touch, &start, &end, &mut perm);
        let next: Vec<usize> = perm.iter().map(|&i| order[i]).collect();
        if next == order {
            break;
        }
        order = next;
    }

    // line variant: hubs retracted toward the straight segment, ordered along it
    let dir = end - start;
    let l2 = dir.norm_squared();
    let mut line_order: Vec<usize> = (0..hubs.len()).collect();
    line_order.sort_by(|&a, &b| {
        let ta = if l2 > 0.0 { (hubs[a] - start).dot(&dir) } else { 0.0 };
        let tb = if l2 > 0.0 { (hubs[b] - start).dot(&dir) } else { 0.0 };
        ta.total_cmp(&tb).then(a.cmp(&b))
    });
    let line_touch = |r: f64| -> Vec<Point> {
        line_order
            .iter()
            .map(|&i| retract(hubs[i], project(hubs[i], start, end), r))
            .collect()
    };
    if let Some(r) = bisect_radius(|r| polyline_length(start, &line_touch(r), end), r_max, budget) {
        consider(r, line_touch(r));
    }

    match best {
        Some((r, mid)) => {
            let mut path = Vec::with_capacity(mid.len() + 2);
            path.push(start);
            path.extend(mid);
            path.push(end);
            Ok((path, r))
        }
        None => Err(Error::InfeasibleScenario(format!(
            "{:.1} m from start to end cannot be flown in {} slots",
            (end - start).norm(),
            n
        ))),
    }
}

/// `n` points equally spaced in arc length along `path` (first and last exact).
fn resample(path: &[Point], n: usize) -> Vec<Point> {
    if n == 1 {
        return vec![path[0]];
    }
    let seg: Vec<f64> = path.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = seg.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut leg = 0;
    let mut covered = 0.0;
    for i in 0..n {
        if i == n - 1 {
            out.push(*path.last().unwrap());
            break;
        }
        let s = total * i as f64 / (n - 1) as f64;
        while leg + 1 < seg.len() && covered + seg[leg] < s {
            covered += seg[leg];
            leg += 1;
        }
        let t = if seg[leg] > 0.0 { ((s - covered) / seg[leg]).clamp(0.0, 1.0) } else { 0.0 };
        out.push(path[leg] + (path[leg + 1] - path[leg]) * t);
    }
    out
}
