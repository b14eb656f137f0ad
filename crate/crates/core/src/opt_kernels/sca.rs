//! Convex trajectory subproblem of the SCA step.
//!
//! With schedule and power fixed, the rate of SN k in slot n,
//! `log2(1 + eps / (z^2 + |q - d_k|^2)^(alpha/2))`, is convex in `D = z^2 + |q - d_k|^2`,
//! so its tangent in `D` at the reference trajectory is a global lower bound:
//!
//! `r_lb = c - theta (|q - d_k|^2 - |q_ref - d_k|^2)`,
//! `theta = log2(e) eps (alpha/2) / (D_ref (D_ref^(alpha/2) + eps))`.
//!
//! The subproblem `max r  s.t.  mean_n r_lb_k[n] >= r,  |q[n+1] - q[n]| <= V` is solved by a
//! log-barrier Newton method. The Hessian is block tridiagonal (speed constraints) plus a
//! rank-K term from the rate constraints; the rate variable is eliminated by a Schur
//! complement and the remaining system is solved with the Woodbury identity.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::scenario::Point;

const LOG2_E: f64 = std::f64::consts::LOG2_E;

#[derive(Debug, Clone)]
pub struct ScaSubproblem {
    /// Reference trajectory `q^j`, including both endpoints.
    pub reference: Vec<Point>,
    pub sns: Vec<Point>,
    pub altitude: f64,
    pub alpha: f64,
    /// `eps[n][k] = kappa_n p_k[n] gamma0`, zero where SN k is silent.
    pub eps: Vec<Vec<f64>>,
    /// Per-slot displacement cap `V_h = v_h delta`.
    pub step_cap: f64,
    rate_ref: Vec<Vec<f64>>,
    theta: Vec<Vec<f64>>,
    horiz_ref: Vec<Vec<f64>>,
}

impl ScaSubproblem {
    pub fn new(
        reference: Vec<Point>,
        sns: Vec<Point>,
        altitude: f64,
        alpha: f64,
        eps: Vec<Vec<f64>>,
        step_cap: f64,
    ) -> Result<Self> {
        let n = reference.len();
        let k = sns.len();
        if eps.len() != n || eps.iter().any(|row| row.len() != k) {
            return Err(Error::Dimension(format!(
                "eps must be {n} x {k} for this trajectory"
            )));
        }
        if eps.iter().flatten().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return Err(Error::Invariant {
                field: "eps".into(),
            });
        }
        let z2 = altitude * altitude;
        let mut rate_ref = vec![vec![0.0; k]; n];
        let mut theta = vec![vec![0.0; k]; n];
        let mut horiz_ref = vec![vec![0.0; k]; n];
        for (slot, q) in reference.iter().enumerate() {
            for (sn, d) in sns.iter().enumerate() {
                let h = (q - d).norm_squared();
                horiz_ref[slot][sn] = h;
                let e = eps[slot][sn];
                if e > 0.0 {
                    let dd = z2 + h;
                    let da = dd.powf(alpha / 2.0);
                    rate_ref[slot][sn] = (e / da).ln_1p() * LOG2_E;
                    theta[slot][sn] = LOG2_E * e * (alpha / 2.0) / (dd * (da + e));
                }
            }
        }
        Ok(Self {
            reference,
            sns,
            altitude,
            alpha,
            eps,
            step_cap,
            rate_ref,
            theta,
            horiz_ref,
        })
    }

    pub fn slots(&self) -> usize {
        self.reference.len()
    }

    pub fn theta(&self, slot: usize, sn: usize) -> f64 {
        self.theta[slot][sn]
    }

    /// Lower bound on the rate of `sn` in `slot` at position `q`.
    pub fn surrogate(&self, slot: usize, sn: usize, q: &Point) -> f64 {
        let h = (q - self.sns[sn]).norm_squared();
        self.rate_ref[slot][sn] - self.theta[slot][sn] * (h - self.horiz_ref[slot][sn])
    }

    pub fn true_rate(&self, slot: usize, sn: usize, q: &Point) -> f64 {
        let e = self.eps[slot][sn];
        if e <= 0.0 {
            return 0.0;
        }
        let dd = self.altitude * self.altitude + (q - self.sns[sn]).norm_squared();
        (e / dd.powf(self.alpha / 2.0)).ln_1p() * LOG2_E
    }

    /// Per-SN average of the surrogate over all slots.
    pub fn surrogate_rates(&self, q: &[Point]) -> Vec<f64> {
        let n = self.slots() as f64;
        (0..self.sns.len())
            .map(|k| (0..q.len()).map(|s| self.surrogate(s, k, &q[s])).sum::<f64>() / n)
            .collect()
    }

    pub fn true_rates(&self, q: &[Point]) -> Vec<f64> {
        let n = self.slots() as f64;
        (0..self.sns.len())
            .map(|k| (0..q.len()).map(|s| self.true_rate(s, k, &q[s])).sum::<f64>() / n)
            .collect()
    }

    fn check_reference(&self) -> Result<()> {
        let cap = self.step_cap + 1e-9;
        for (n, w) in self.reference.windows(2).enumerate() {
            let step = (w[1] - w[0]).norm();
            if !(step <= cap) {
                return Err(Error::InfeasibleReference(format!(
                    "slot {n} moves {step:.6} m, cap {:.6} m",
                    self.step_cap
                )));
            }
        }
        if self.reference.iter().any(|q| !q.iter().all(|v| v.is_finite())) {
            return Err(Error::InfeasibleReference("non-finite position".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ScaSolution {
    pub trajectory: Vec<Point>,
    /// Surrogate max-min rate at `trajectory`.
    pub rate: f64,
    /// Surrogate (= true) max-min rate at the reference.
    pub reference_rate: f64,
    pub newton_steps: usize,
    /// False when the reference was returned unchanged.
    pub moved: bool,
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn sca_solve(sub: &ScaSubproblem, tolerance: f64) -> Result<ScaSolution> {
    sub.check_reference()?;
    let reference_rate = min(&sub.surrogate_rates(&sub.reference));
    let unchanged = |steps| ScaSolution {
        trajectory: sub.reference.clone(),
        rate: reference_rate,
        reference_rate,
        newton_steps: steps,
        moved: false,
    };
    let n = sub.slots();
    if n <= 2 || sub.theta.iter().flatten().all(|&t| t == 0.0) {
        return Ok(unchanged(0));
    }
    let q_first = sub.reference[0];
    let q_last = sub.reference[n - 1];
    let line_step = (q_last - q_first).norm() / (n - 1) as f64;
    if line_step >= sub.step_cap * (1.0 - 1e-12) {
        // the straight line at full speed is the only feasible trajectory
        return Ok(unchanged(0));
    }
    let line = |i: usize| q_first + (q_last - q_first) * (i as f64 / (n - 1) as f64);
    let vv = sub.step_cap * sub.step_cap;

    let mut start = None;
    for theta in [0.01, 0.1, 0.5, 1.0] {
        let q: Vec<Point> = (0..n)
            .map(|i| sub.reference[i] * (1.0 - theta) + line(i) * theta)
            .collect();
        if q.windows(2).all(|w| (w[1] - w[0]).norm_squared() < vv) {
            start = Some(q);
            break;
        }
    }
    let Some(q0) = start else {
        return Ok(unchanged(0));
    };

    let mut solver = Barrier::new(sub, q0);
    let steps = solver.run(tolerance);
    let q = solver.q;
    let rate = min(&sub.surrogate_rates(&q));
    if !(rate >= reference_rate) {
        return Ok(unchanged(steps));
    }
    Ok(ScaSolution {
        trajectory: q,
        rate,
        reference_rate,
        newton_steps: steps,
        moved: true,
    })
}

struct Barrier<'a> {
    sub: &'a ScaSubproblem,
    q: Vec<Point>,
    r: f64,
    vv: f64,
}

struct BlockTridiag {
    /// inverses of the eliminated diagonal blocks
    dinv: Vec<Matrix2<f64>>,
    /// sub-diagonal blocks `T[i][i-1]`, index 0 unused
    lower: Vec<Matrix2<f64>>,
}

impl BlockTridiag {
    /// Factors a symmetric block-tridiagonal matrix given its diagonal and sub-diagonal blocks.
    fn factor(diag: &[Matrix2<f64>], lower: Vec<Matrix2<f64>>) -> Option<Self> {
        let m = diag.len();
        let mut dinv = Vec::with_capacity(m);
        for i in 0..m {
            let mut d = diag[i];
            if i > 0 {
                d -= lower[i] * dinv[i - 1] * lower[i].transpose();
            }
            dinv.push(d.try_inverse()?);
        }
        Some(Self { dinv, lower })
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = self.dinv.len();
        let mut y: Vec<Vector2<f64>> = Vec::with_capacity(m);
        for i in 0..m {
            let mut v = Vector2::new(b[2 * i], b[2 * i + 1]);
            if i > 0 {
                v -= self.lower[i] * (self.dinv[i - 1] * y[i - 1]);
            }
            y.push(v);
        }
        let mut x = vec![Vector2::zeros(); m];
        for i in (0..m).rev() {
            let mut v = y[i];
            if i + 1 < m {
                v -= self.lower[i + 1].transpose() * x[i + 1];
            }
            x[i] = self.dinv[i] * v;
        }
        DVector::from_iterator(2 * m, x.iter().flat_map(|p| [p[0], p[1]]))
    }
}

impl<'a> Barrier<'a> {
    fn new(sub: &'a ScaSubproblem, q: Vec<Point>) -> Self {
        let vv = sub.step_cap * sub.step_cap;
        let mut b = Self { sub, q, r: 0.0, vv };
        b.r = min(&b.means(&b.q)) - 1.0;
        b
    }

    fn means(&self, q: &[Point]) -> Vec<f64> {
        self.sub.surrogate_rates(q)
    }

    /// Barrier value, or None outside the domain.
    fn value(&self, t: f64, q: &[Point], r: f64) -> Option<f64> {
        let mut f = -t * r;
        for a in self.means(q) {
            let s = a - r;
            if !(s > 0.0) {
                return None;
            }
            f -= s.ln();
        }
        for w in q.windows(2) {
            let e = self.vv - (w[1] - w[0]).norm_squared();
            if !(e > 0.0) {
                return None;
            }
            f -= e.ln();
        }
        Some(f)
    }

    fn run(&mut self, tolerance: f64) -> usize {
        let n = self.sub.slots();
        let constraints = (self.sub.sns.len() + n - 1) as f64;
        let mut t = 1.0;
        let mut steps = 0;
        loop {
            steps += self.center(t);
            if constraints / t <= tolerance {
                break;
            }
            t *= 20.0;
        }
        steps
    }

    /// Newton centering at barrier parameter `t`; returns the number of steps taken.
    fn center(&mut self, t: f64) -> usize {
        let sub = self.sub;
        let n = sub.slots();
        let m = n - 2;
        let kk = sub.sns.len();
        let nf = n as f64;
        for step in 0..200 {
            let means = self.means(&self.q);
            let s: Vec<f64> = means.iter().map(|a| a - self.r).collect();

            // gradient and Hessian pieces
            let mut grad_q = DVector::zeros(2 * m);
            let mut grad_r = -t;
            let mut diag = vec![Matrix2::zeros(); m];
            let mut lower = vec![Matrix2::zeros(); m];
            let mut u = DMatrix::zeros(2 * m, kk);
            let mut w = vec![0.0; kk];
            for k in 0..kk {
                grad_r += 1.0 / s[k];
                w[k] = 1.0 / (s[k] * s[k]);
                for i in 0..m {
                    let slot = i + 1;
                    let th = sub.theta[slot][k];
                    if th == 0.0 {
                        continue;
                    }
                    let c = 2.0 * th / nf;
                    let dq = self.q[slot] - sub.sns[k];
                    // grad of mean_n r_lb w.r.t. q_i is -c (q_i - d_k)
                    u[(2 * i, k)] = -c * dq[0];
                    u[(2 * i + 1, k)] = -c * dq[1];
                    grad_q[2 * i] += c * dq[0] / s[k];
                    grad_q[2 * i + 1] += c * dq[1] / s[k];
                    let h = c / s[k];
                    diag[i][(0, 0)] += h;
                    diag[i][(1, 1)] += h;
                }
            }
            for seg in 0..n - 1 {
                let d = self.q[seg + 1] - self.q[seg];
                let e = self.vv - d.norm_squared();
                let gvec = d * (2.0 / e);
                let b = Matrix2::identity() * (2.0 / e) + d * d.transpose() * (4.0 / (e * e));
                // segment joins slot `seg` (interior index seg-1) and `seg+1` (index seg)
                let hi = seg; // interior index of slot seg+1
                let lo = seg.wrapping_sub(1); // interior index of slot seg
                if seg + 1 <= m {
                    grad_q[2 * hi] += gvec[0];
                    grad_q[2 * hi + 1] += gvec[1];
                    diag[hi] += b;
                }
                if seg >= 1 {
                    grad_q[2 * lo] -= gvec[0];
                    grad_q[2 * lo + 1] -= gvec[1];
                    diag[lo] += b;
                }
                if seg >= 1 && seg + 1 <= m {
                    lower[hi] -= b;
                }
            }

            let Some(tri) = BlockTridiag::factor(&diag, lower) else {
                return step;
            };
            let wsum: f64 = w.iter().sum();
            let wu = &u * DVector::from_vec(w.clone());
            let rhs = -&grad_q - &wu * (grad_r / wsum);
            // S = diag(w) - w w^T / wsum
            let wv = DVector::from_vec(w.clone());
            let smat = DMatrix::from_diagonal(&wv) - &wv * wv.transpose() / wsum;
            let tinv_u = DMatrix::from_columns(
                &(0..kk).map(|k| tri.solve(&u.column(k).into_owned())).collect::<Vec<_>>(),
            );
            let tinv_b = tri.solve(&rhs);
            let core = DMatrix::identity(kk, kk) + &smat * (u.transpose() * &tinv_u);
            let inner = smat.clone() * (u.transpose() * &tinv_b);
            let corr = match core.lu().solve(&inner) {
                Some(c) => c,
                None => return step,
            };
            let dq = &tinv_b - &tinv_u * corr;
            let dr = (-grad_r + wu.dot(&dq)) / wsum;

            let slope = grad_q.dot(&dq) + grad_r * dr;
            if -slope / 2.0 <= 1e-10 {
                return step;
            }
            let f0 = self.value(t, &self.q, self.r).unwrap_or(f64::INFINITY);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<Point> = (0..n)
                    .map(|s| {
                        if s == 0 || s == n - 1 {
                            self.q[s]
                        } else {
                            let i = s - 1;
                            self.q[s] + Vector2::new(dq[2 * i], dq[2 * i + 1]) * alpha
                        }
                    })
                    .collect();
                let rc = self.r + alpha * dr;
                if let Some(f1) = self.value(t, &cand, rc) {
                    if f1 <= f0 + 0.25 * alpha * slope {
                        self.q = cand;
                        self.r = rc;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                return step;
            }
        }
        200
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hover_sub(n: usize, sn: Point, ends: Point, cap: f64) -> ScaSubproblem {
        let reference: Vec<Point> = (0..n).map(|_| ends).collect();
        let eps = vec![vec![0.01 * 12.0 * 2.512e7]; n];
        ScaSubproblem::new(reference, vec![sn], 130.0, 2.0, eps, cap).unwrap()
    }

    #[test]
    fn no_active_returns_reference() {
        let reference: Vec<Point> = (0..5).map(|i| Point::new(i as f64, 0.0)).collect();
        let sub = ScaSubproblem::new(
            reference.clone(),
            vec![Point::new(50.0, 50.0)],
            100.0,
            2.0,
            vec![vec![0.0]; 5],
            10.0,
        )
        .unwrap();
        let sol = sca_solve(&sub, 1e-7).unwrap();
        assert_eq!(sol.trajectory, reference);
        assert!(!sol.moved);
        assert_eq!(sol.rate, 0.0);
    }

    #[test]
    fn single_interior_point_goes_to_sn() {
        let sn = Point::new(40.0, -30.0);
        let sub = hover_sub(3, sn, Point::new(0.0, 0.0), 1000.0);
        let sol = sca_solve(&sub, 1e-9).unwrap();
        assert!((sol.trajectory[1] - sn).norm() < 1e-4, "{:?}", sol.trajectory[1]);
        assert_eq!(sol.trajectory[0], Point::new(0.0, 0.0));
        assert_eq!(sol.trajectory[2], Point::new(0.0, 0.0));
    }

    #[test]
    fn speed_cap_holds_and_rate_improves() {
        let sn = Point::new(200.0, 0.0);
        let sub = hover_sub(12, sn, Point::new(0.0, 0.0), 10.0);
        let sol = sca_solve(&sub, 1e-8).unwrap();
        assert!(sol.moved);
        for w in sol.trajectory.windows(2) {
            assert!((w[1] - w[0]).norm() <= 10.0 + 1e-9);
        }
        assert!(sol.rate >= sol.reference_rate);
        let before = sub.true_rates(&sub.reference)[0];
        let after = sub.true_rates(&sol.trajectory)[0];
        assert!(after >= sol.rate - 1e-12 && after > before);
        // the middle of the loop reaches furthest
        assert!((sol.trajectory[5][0] - 50.0).abs() < 1e-5 && (sol.trajectory[6][0] - 50.0).abs() < 1e-5);
    }

    #[test]
    fn rejects_infeasible_reference() {
        let reference = vec![Point::new(0.0, 0.0), Point::new(50.0, 0.0), Point::new(0.0, 0.0)];
        let sub = ScaSubproblem::new(
            reference,
            vec![Point::new(0.0, 0.0)],
            100.0,
            2.0,
            vec![vec![1.0]; 3],
            10.0,
        )
        .unwrap();
        assert!(matches!(sca_solve(&sub, 1e-7), Err(Error::InfeasibleReference(_))));
    }

    #[test]
    fn surrogate_is_tight_and_below() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for alpha in [2.0, 2.5, 3.0] {
            let reference: Vec<Point> = (0..4)
                .map(|_| Point::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0)))
                .collect();
            let sns = vec![Point::new(0.0, 0.0), Point::new(300.0, -100.0)];
            let eps = vec![vec![2.5e5 * 12.0, 2.5e5]; 4];
            let sub = ScaSubproblem::new(reference.clone(), sns, 130.0, alpha, eps, 50.0).unwrap();
            for n in 0..4 {
                for k in 0..2 {
                    let a = sub.surrogate(n, k, &reference[n]);
                    let b = sub.true_rate(n, k, &reference[n]);
                    assert!((a - b).abs() <= 1e-12);
                    for _ in 0..200 {
                        let q = Point::new(rng.gen_range(-800.0..800.0), rng.gen_range(-800.0..800.0));
                        assert!(sub.surrogate(n, k, &q) <= sub.true_rate(n, k, &q) + 1e-9);
                    }
                }
            }
        }
    }
}
