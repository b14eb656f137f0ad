//! Dense two-phase primal simplex for small linear programs.
//!
//! Solves `max c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= lb`.
//! Entering columns follow Dantzig's rule until a run of degenerate pivots is seen,
//! after which Bland's rule takes over for the rest of the solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub lower: Vec<f64>,
}

impl LpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            lower: vec![0.0; n],
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    pub fn leq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
        self
    }

    pub fn eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
        self
    }

    fn check(&self) -> Result<()> {
        let n = self.dim();
        let bad = self.lower.len() != n
            || self.a_ub.len() != self.b_ub.len()
            || self.a_eq.len() != self.b_eq.len()
            || self.a_ub.iter().chain(&self.a_eq).any(|r| r.len() != n);
        if bad {
            Err(Error::Dimension("inconsistent LP dimensions".into()))
        } else {
            Ok(())
        }
    }

    /// Largest violation of any constraint at `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let ub = self
            .a_ub
            .iter()
            .zip(&self.b_ub)
            .map(|(r, b)| (dot(r) - b).max(0.0));
        let eq = self
            .a_eq
            .iter()
            .zip(&self.b_eq)
            .map(|(r, b)| (dot(r) - b).abs());
        let lb = x.iter().zip(&self.lower).map(|(v, l)| (l - v).max(0.0));
        ub.chain(eq).chain(lb).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Multipliers of the `<=` rows (non-negative at optimum).
    pub dual_ub: Vec<f64>,
    /// Multipliers of the equality rows.
    pub dual_eq: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    /// Dual objective `b_ub^T y_ub + b_eq^T y_eq + (reduced costs)^T lb`.
    pub fn dual_value(&self, p: &LpProblem) -> f64 {
        let n = p.dim();
        let mut reduced = p.objective.clone();
        for (row, y) in p.a_ub.iter().zip(&self.dual_ub) {
            for j in 0..n {
                reduced[j] -= row[j] * y;
            }
        }
        for (row, y) in p.a_eq.iter().zip(&self.dual_eq) {
            for j in 0..n {
                reduced[j] -= row[j] * y;
            }
        }
        let b: f64 = p.b_ub.iter().zip(&self.dual_ub).map(|(b, y)| b * y).sum::<f64>()
            + p.b_eq.iter().zip(&self.dual_eq).map(|(b, y)| b * y).sum::<f64>();
        b + reduced.iter().zip(&p.lower).map(|(r, l)| r * l).sum::<f64>()
    }
}

struct Tableau {
    /// rows x (cols + 1); last column is the right-hand side
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    pivots: usize,
    bland: bool,
    degenerate_run: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.t[r][self.cols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (r, line) in self.t.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for (v, pv) in line.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                line[col] = 0.0;
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Minimizes `cost^T z` over the current tableau with `allowed` columns.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<()> {
        loop {
            // reduced costs d_j = c_j - c_B^T B^-1 a_j
            let mut entering = None;
            let mut best = -PIVOT_EPS;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for (r, &b) in self.basis.iter().enumerate() {
                    d -= cost[b] * self.t[r][j];
                }
                if d < best {
                    entering = Some(j);
                    if self.bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.t.len() {
                let a = self.t[r][col];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((row, ratio)) = leave else {
                return Err(Error::LpUnbounded);
            };
            if ratio.abs() <= 1e-14 {
                self.degenerate_run += 1;
                if self.degenerate_run > DEGENERATE_RUN {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }
            self.pivot(row, col);
            if self.pivots > 50_000 {
                return Err(Error::Dimension("simplex pivot limit reached".into()));
            }
        }
    }
}

pub fn lp_solve(problem: &LpProblem) -> Result<LpSolution> {
    problem.check()?;
    let n = problem.dim();
    let m_ub = problem.a_ub.len();
    let m_eq = problem.a_eq.len();
    let m = m_ub + m_eq;

    // shift x = lb + y
    let shift = |row: &[f64], b: f64| b - row.iter().zip(&problem.lower).map(|(a, l)| a * l).sum::<f64>();
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::with_capacity(m);
    for (r, &b) in problem.a_ub.iter().zip(&problem.b_ub) {
        rows.push((r.clone(), shift(r, b), true));
    }
    for (r, &b) in problem.a_eq.iter().zip(&problem.b_eq) {
        rows.push((r.clone(), shift(r, b), false));
    }

    // columns: y (n) | slacks (m_ub) | artificials (one per row that needs it)
    let slack0 = n;
    let art0 = n + m_ub;
    let mut needs_art = vec![false; m];
    let mut flipped = vec![false; m];
    for (i, (_, b, is_ub)) in rows.iter().enumerate() {
        if *b < 0.0 {
            flipped[i] = true;
        }
        needs_art[i] = !is_ub || *b < 0.0;
    }
    let art_cols: Vec<usize> = (0..m).filter(|&i| needs_art[i]).collect();
    let cols = art0 + art_cols.len();
    let mut t = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    let mut art_of_row = vec![usize::MAX; m];
    for (a, &i) in art_cols.iter().enumerate() {
        art_of_row[i] = art0 + a;
    }
    for (i, (row, b, is_ub)) in rows.iter().enumerate() {
        let sign = if flipped[i] { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * row[j];
        }
        if *is_ub {
            t[i][slack0 + i] = sign;
        }
        t[i][cols] = sign * b;
        if needs_art[i] {
            t[i][art_of_row[i]] = 1.0;
            basis[i] = art_of_row[i];
        } else {
            basis[i] = slack0 + i;
        }
    }
    let mut tab = Tableau {
        t,
        basis,
        cols,
        pivots: 0,
        bland: false,
        degenerate_run: 0,
    };

    let all = vec![true; cols];
    if !art_cols.is_empty() {
        let mut cost = vec![0.0; cols];
        for c in cost.iter_mut().skip(art0) {
            *c = 1.0;
        }
        tab.optimize(&cost, &all)?;
        let infeas: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= art0)
            .map(|r| tab.rhs(r))
            .sum();
        let scale = 1.0 + rows.iter().map(|(_, b, _)| b.abs()).fold(0.0, f64::max);
        if infeas > 1e-9 * scale {
            return Err(Error::LpInfeasible);
        }
        // drive remaining artificials out of the basis
        let mut r = 0;
        while r < tab.t.len() {
            if tab.basis[r] >= art0 {
                let col = (0..art0)
                    .filter(|j| !tab.basis.contains(j))
                    .max_by(|&a, &b| tab.t[r][a].abs().total_cmp(&tab.t[r][b].abs()));
                match col {
                    Some(j) if tab.t[r][j].abs() > 1e-9 => tab.pivot(r, j),
                    _ => {
                        // redundant row
                        tab.t.remove(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let mut cost = vec![0.0; cols];
    for j in 0..n {
        cost[j] = -problem.objective[j];
    }
    let mut allowed = vec![true; cols];
    for a in allowed.iter_mut().skip(art0) {
        *a = false;
    }
    tab.bland = false;
    tab.degenerate_run = 0;
    tab.optimize(&cost, &allowed)?;

    let mut y = vec![0.0; cols];
    for (r, &b) in tab.basis.iter().enumerate() {
        y[b] = tab.rhs(r).max(0.0);
    }
    let x: Vec<f64> = (0..n).map(|j| problem.lower[j] + y[j]).collect();
    let value = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();

    let (dual_ub, dual_eq) = recover_duals(problem, &rows, &flipped, &tab.basis, slack0, art0);
    Ok(LpSolution {
        x,
        value,
        dual_ub,
        dual_eq,
        pivots: tab.pivots,
    })
}

/// Solves `B^T y = c_B` on the original (unflipped) standard-form columns.
fn recover_duals(
    problem: &LpProblem,
    rows: &[(Vec<f64>, f64, bool)],
    flipped: &[bool],
    basis: &[usize],
    slack0: usize,
    art0: usize,
) -> (Vec<f64>, Vec<f64>) {
    let m = rows.len();
    let n = problem.dim();
    let m_ub = problem.a_ub.len();
    // column j of the standard form, in original row signs
    let column = |j: usize| -> DVector<f64> {
        if j < n {
            DVector::from_iterator(m, rows.iter().map(|(r, _, _)| r[j]))
        } else if j < art0 {
            let mut e = DVector::zeros(m);
            e[j - slack0] = 1.0;
            e
        } else {
            DVector::zeros(m)
        }
    };
    let cost = |j: usize| if j < n { problem.objective[j] } else { 0.0 };
    let _ = flipped;
    let bm = basis.len();
    // basis may be short if redundant rows were dropped; solve in least squares sense
    let mut bmat = DMatrix::zeros(m, bm);
    let mut cb = DVector::zeros(bm);
    for (c, &j) in basis.iter().enumerate() {
        bmat.set_column(c, &column(j));
        cb[c] = cost(j);
    }
    let bt = bmat.transpose();
    let y = if bm == m {
        bt.clone().lu().solve(&cb)
    } else {
        None
    }
    .or_else(|| {
        let svd = bt.svd(true, true);
        svd.solve(&cb, 1e-12).ok()
    })
    .unwrap_or_else(|| DVector::zeros(m));
    let dual_ub = (0..m_ub).map(|i| y[i]).collect();
    let dual_eq = (m_ub..m).map(|i| y[i]).collect();
    (dual_ub, dual_eq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn certify(p: &LpProblem, s: &LpSolution) {
        assert!(p.residual(&s.x) <= 1e-9, "residual {}", p.residual(&s.x));
        let dv = s.dual_value(p);
        assert!(
            (dv - s.value).abs() <= 1e-8 * (1.0 + s.value.abs()),
            "primal {} dual {}",
            s.value,
            dv
        );
        assert!(s.dual_ub.iter().all(|&y| y >= -1e-9));
    }

    /// Variables (tau_1..tau_W, r): max r s.t. r - sum tau_w rate_kw / T <= 0, sum tau = T.
    fn time_sharing(rates: &[Vec<f64>], horizon: f64) -> LpProblem {
        let w = rates[0].len();
        let mut obj = vec![0.0; w + 1];
        obj[w] = 1.0;
        let mut p = LpProblem::new(obj);
        for row in rates {
            let mut a: Vec<f64> = row.iter().map(|r| -r / horizon).collect();
            a.push(1.0);
            p.leq(a, 0.0);
        }
        let mut e = vec![1.0; w];
        e.push(0.0);
        p.eq(e, horizon);
        p
    }

    #[test]
    fn single_point() {
        let p = time_sharing(&[vec![3.0]], 100.0);
        let s = lp_solve(&p).unwrap();
        assert!((s.x[0] - 100.0).abs() < 1e-9);
        assert!((s.value - 3.0).abs() < 1e-12);
        certify(&p, &s);
    }

    #[test]
    fn symmetric_split() {
        let p = time_sharing(&[vec![2.0, 0.0], vec![0.0, 2.0]], 100.0);
        let s = lp_solve(&p).unwrap();
        assert!((s.x[0] - 50.0).abs() < 1e-9 && (s.x[1] - 50.0).abs() < 1e-9);
        assert!((s.value - 1.0).abs() < 1e-12);
        certify(&p, &s);
    }

    #[test]
    fn infeasible_reported() {
        // two mandatory durations that cannot fit in T
        let mut p = LpProblem::new(vec![0.0, 0.0]);
        p.lower = vec![60.0, 60.0];
        p.eq(vec![1.0, 1.0], 100.0);
        assert!(matches!(lp_solve(&p), Err(Error::LpInfeasible)));
    }

    #[test]
    fn unbounded_reported() {
        let mut p = LpProblem::new(vec![1.0, 1.0]);
        p.leq(vec![1.0, -1.0], 1.0);
        assert!(matches!(lp_solve(&p), Err(Error::LpUnbounded)));
    }

    #[test]
    fn vertex_solution() {
        // max x + 2y + z, mixed constraints
        let mut p = LpProblem::new(vec![1.0, 2.0, 1.0]);
        p.leq(vec![1.0, 1.0, 1.0], 4.0)
            .leq(vec![0.0, 1.0, 0.0], 3.0)
            .leq(vec![-1.0, 0.0, 0.0], -0.5)
            .eq(vec![1.0, 0.0, -1.0], 0.0);
        let s = lp_solve(&p).unwrap();
        certify(&p, &s);
        assert!((s.value - 7.0).abs() < 1e-9);
        let tight = p
            .a_ub
            .iter()
            .zip(&p.b_ub)
            .filter(|(r, b)| (r.iter().zip(&s.x).map(|(a, x)| a * x).sum::<f64>() - **b).abs() < 1e-9)
            .count()
            + p.a_eq.len()
            + s.x.iter().zip(&p.lower).filter(|(x, l)| (**x - **l).abs() < 1e-9).count();
        assert!(tight >= p.dim());
    }

    #[test]
    fn diagonal_sharing_with_power_rows() {
        let k = 8;
        let mut obj = vec![0.0; k + 1];
        obj[k] = 1.0;
        let mut p = LpProblem::new(obj);
        for i in 0..k {
            let mut row = vec![0.0; k + 1];
            row[i] = -(10.0 + i as f64 * 0.1);
            row[k] = 1.0;
            p.leq(row, 0.0);
        }
        for i in 0..k {
            let mut row = vec![0.0; k + 1];
            row[i] = 8.0 - 0.2 * i as f64;
            p.leq(row, 1.0);
        }
        let mut ones = vec![1.0; k];
        ones.push(0.0);
        p.eq(ones, 1.0);
        let s = lp_solve(&p).unwrap();
        certify(&p, &s);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // classic cycling example (Beale)
        let mut p = LpProblem::new(vec![0.75, -150.0, 0.02, -6.0]);
        p.leq(vec![0.25, -60.0, -0.04, 9.0], 0.0)
            .leq(vec![0.5, -90.0, -0.02, 3.0], 0.0)
            .leq(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let s = lp_solve(&p).unwrap();
        assert!((s.value - 0.05).abs() < 1e-9);
        certify(&p, &s);
    }
}
