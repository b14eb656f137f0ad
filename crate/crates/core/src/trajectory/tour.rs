//! Visiting order of the hover points: open path with fixed endpoints.

use serde::{Deserialize, Serialize};

use crate::scenario::Point;

/// Exact DP is used up to this many points.
pub const EXACT_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TourPlan {
    /// Visit order as indices into `points`.
    pub order: Vec<usize>,
    pub points: Vec<[f64; 2]>,
    pub start: [f64; 2],
    pub end: [f64; 2],
    /// `Omega + 1` leg lengths, m.
    pub legs: Vec<f64>,
    pub length: f64,
    /// Minimum visiting time at full speed, s.
    pub t_tsp: f64,
    /// Dwell per point (same indexing as `points`), s.
    pub dwell: Vec<f64>,
}

impl TourPlan {
    /// Waypoints `q_I, h_pi(1), ..., h_pi(Omega), q_F`.
    pub fn waypoints(&self) -> Vec<Point> {
        let mut w = Vec::with_capacity(self.order.len() + 2);
        w.push(Point::new(self.start[0], self.start[1]));
        for &i in &self.order {
            w.push(Point::new(self.points[i][0], self.points[i][1]));
        }
        w.push(Point::new(self.end[0], self.end[1]));
        w
    }

    /// Splits `T - T_tsp` over the points in proportion to `weights` (zero if `T < T_tsp`).
    pub fn with_dwell(mut self, horizon: f64, weights: &[f64]) -> Self {
        let spare = (horizon - self.t_tsp).max(0.0);
        let total: f64 = weights.iter().sum();
        self.dwell = weights
            .iter()
            .map(|w| if total > 0.0 { spare * w / total } else { 0.0 })
            .collect();
        self
    }
}

pub fn path_length(start: &Point, points: &[Point], order: &[usize], end: &Point) -> f64 {
    let mut prev = *start;
    let mut total = 0.0;
    for &i in order {
        total += (points[i] - prev).norm();
        prev = points[i];
    }
    total + (end - prev).norm()
}

pub fn tsp_order(points: &[Point], start: Point, end: Point, v_max: f64) -> TourPlan {
    let order = if points.len() <= EXACT_LIMIT {
        held_karp(points, &start, &end)
    } else {
        let mut o = nearest_neighbour(points, &start);
        improve(points, &start, &end, &mut o);
        o
    };
    build(points, start, end, order, v_max)
}

pub(crate) fn build(points: &[Point], start: Point, end: Point, order: Vec<usize>, v_max: f64) -> TourPlan {
    let mut legs = Vec::with_capacity(order.len() + 1);
    let mut prev = start;
    for &i in &order {
        legs.push((points[i] - prev).norm());
        prev = points[i];
    }
    legs.push((end - prev).norm());
    let length: f64 = legs.iter().sum();
    TourPlan {
        points: points.iter().map(|p| [p.x, p.y]).collect(),
        start: [start.x, start.y],
        end: [end.x, end.y],
        dwell: vec![0.0; points.len()],
        order,
        legs,
        length,
        t_tsp: length / v_max,
    }
}

/// Exact open-path DP over subsets; ties resolved toward the lexicographically first path.
pub fn held_karp(points: &[Point], start: &Point, end: &Point) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let full = 1usize << n;
    let mut dp = vec![f64::INFINITY; full * n];
    let mut parent = vec![usize::MAX; full * n];
    for j in 0..n {
        dp[(1 << j) * n + j] = (points[j] - start).norm();
    }
    for mask in 1..full {
        for j in 0..n {
            let cur = dp[mask * n + j];
            if mask & (1 << j) == 0 || !cur.is_finite() {
                continue;
            }
            for k in 0..n {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let next = mask | (1 << k);
                let cand = cur + (points[k] - points[j]).norm();
                if cand < dp[next * n + k] {
                    dp[next * n + k] = cand;
                    parent[next * n + k] = j;
                }
            }
        }
    }
    let last = full - 1;
    let mut best = (f64::INFINITY, 0);
    for j in 0..n {
        let v = dp[last * n + j] + (end - points[j]).norm();
        if v < best.0 {
            best = (v, j);
        }
    }
    let mut order = Vec::with_capacity(n);
    let (mut mask, mut j) = (last, best.1);
    loop {
        order.push(j);
        let p = parent[mask * n + j];
        mask &= !(1 << j);
        if p == usize::MAX {
            break;
        }
        j = p;
    }
    order.reverse();
    order
}

pub fn nearest_neighbour(points: &[Point], start: &Point) -> Vec<usize> {
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut order = Vec::with_capacity(points.len());
    let mut at = *start;
    while !left.is_empty() {
        let (pos, _) = left
            .iter()
            .enumerate()
            .map(|(pos, &i)| (pos, (points[i] - at).norm()))
            .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
        let i = left.remove(pos);
        at = points[i];
        order.push(i);
    }
    order
}

/// Segment-reversal improvement with both endpoints pinned, until no improving move.
pub fn two_opt(points: &[Point], start: &Point, end: &Point, order: &mut Vec<usize>) {
    let n = order.len();
    if n < 2 {
        return;
    }
    let at = |order: &[usize], i: usize| -> Point {
        if i == 0 {
            *start
        } else if i == n + 1 {
            *end
        } else {
            points[order[i - 1]]
        }
    };
    loop {
        let mut improved = false;
        // reverse positions i..=j (1-based within the padded path)
        for i in 1..n {
            for j in i + 1..=n {
                let a = at(order, i - 1);
                let b = at(order, i);
                let c = at(order, j);
                let d = at(order, j + 1);
                let delta = (a - c).norm() + (b - d).norm() - (a - b).norm() - (c - d).norm();
                if delta < -1e-9 {
                    order[i - 1..j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Moves segments of up to three points (either orientation) to a better position.
/// Returns whether anything moved.
pub fn or_opt(points: &[Point], start: &Point, end: &Point, order: &mut Vec<usize>) -> bool {
    let n = order.len();
    let mut any = false;
    let mut improved = true;
    while improved {
        improved = false;
        'search: for len in 1..=3.min(n.saturating_sub(1)) {
            for i in 0..=n - len {
                let base = path_length(start, points, order, end);
                let seg: Vec<usize> = order[i..i + len].to_vec();
                let mut rest = order.clone();
                rest.drain(i..i + len);
                for pos in 0..=rest.len() {
                    if pos == i {
                        continue;
                    }
                    for flip in [false, true] {
                        let mut cand = rest.clone();
                        let mut s = seg.clone();
                        if flip {
                            s.reverse();
                        }
                        cand.splice(pos..pos, s);
                        if path_length(start, points, &cand, end) < base - 1e-9 {
                            *order = cand;
                            improved = true;
                            any = true;
                            continue 'search;
                        }
                    }
                }
            }
        }
    }
    any
}

/// 2-opt and segment relocation, alternated until neither improves the path.
pub fn improve(points: &[Point], start: &Point, end: &Point, order: &mut Vec<usize>) {
    loop {
        two_opt(points, start, end, order);
        if !or_opt(points, start, end, order) {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        let t = tsp_order(&[Point::new(3.0, 4.0)], Point::new(0.0, 0.0), Point::new(6.0, 0.0), 5.0);
        assert_eq!(t.order, vec![0]);
        assert!((t.length - 10.0).abs() < 1e-12);
        assert!((t.t_tsp - 2.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_points_follow_the_line() {
        let pts = [Point::new(7.0, 0.0), Point::new(2.0, 0.0), Point::new(5.0, 0.0)];
        let t = tsp_order(&pts, Point::new(0.0, 0.0), Point::new(10.0, 0.0), 1.0);
        assert_eq!(t.order, vec![1, 2, 0]);
        let mut o = nearest_neighbour(&pts, &Point::new(10.0, 0.0));
        two_opt(&pts, &Point::new(0.0, 0.0), &Point::new(10.0, 0.0), &mut o);
        assert_eq!(o, vec![1, 2, 0]);
    }

    #[test]
    fn dwell_proportional() {
        let pts = [Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        let t = tsp_order(&pts, Point::new(0.0, 0.0), Point::new(10.0, 0.0), 10.0).with_dwell(101.0, &[25.0, 75.0]);
        assert!((t.dwell[0] - 25.0).abs() < 1e-12 && (t.dwell[1] - 75.0).abs() < 1e-12);
    }
}
