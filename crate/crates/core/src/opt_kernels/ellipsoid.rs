//! Central-cut ellipsoid method for nonsmooth convex minimization.
//!
//! The ellipsoid is `{ x : (x - c)^T P^-1 (x - c) <= 1 }`. Each iteration asks the oracle
//! for either an objective cut (a subgradient at a feasible center) or a feasibility cut
//! (a separating hyperplane at an infeasible center) and replaces the ellipsoid with the
//! minimum-volume ellipsoid containing the kept half.

use log::warn;
use nalgebra::{DMatrix, DVector};

/// Oracle answer at the current center.
#[derive(Debug, Clone)]
pub enum Cut {
    /// Feasible point: objective value and a subgradient.
    Objective { value: f64, subgradient: DVector<f64> },
    /// Infeasible point: every feasible `y` satisfies `normal^T (y - x) <= 0`.
    Feasibility { normal: DVector<f64> },
}

pub trait CutOracle {
    fn cut(&mut self, x: &DVector<f64>) -> Cut;

    /// Extra stopping test, called after every objective cut with the best value so far.
    fn should_stop(&mut self, _iter: usize, _best_value: f64, _best_point: &DVector<f64>) -> bool {
        false
    }
}

impl<F> CutOracle for F
where
    F: FnMut(&DVector<f64>) -> Cut,
{
    fn cut(&mut self, x: &DVector<f64>) -> Cut {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidConfig {
    /// Stop once the certified gap `best - lower_bound` is below this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for EllipsoidConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EllipsoidState {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub iterations: usize,
    pub best_value: f64,
    pub resets: usize,
}

impl EllipsoidState {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Self {
        assert_eq!(center.len(), shape.nrows());
        Self {
            center,
            shape,
            iterations: 0,
            best_value: f64::INFINITY,
            resets: 0,
        }
    }

    /// Axis-aligned start with the given semi-axes.
    pub fn with_semi_axes(center: DVector<f64>, semi_axes: &[f64]) -> Self {
        let d = DVector::from_iterator(semi_axes.len(), semi_axes.iter().map(|a| a * a));
        Self::new(center, DMatrix::from_diagonal(&d))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `sqrt(g^T P g)`: the spread of the linear function `g` over the ellipsoid.
    pub fn spread(&self, g: &DVector<f64>) -> f64 {
        (g.dot(&(&self.shape * g))).max(0.0).sqrt()
    }

    /// Central cut keeping `{ y : g^T (y - c) <= 0 }`. Returns false if `g` is degenerate.
    pub fn cut(&mut self, g: &DVector<f64>) -> bool {
        let n = self.dim() as f64;
        let pg = &self.shape * g;
        let gpg = g.dot(&pg);
        if !(gpg > 0.0 && gpg.is_finite()) {
            return false;
        }
        let b = pg / gpg.sqrt();
        if self.dim() == 1 {
            self.center -= &b * 0.5;
            self.shape *= 0.25;
        } else {
            self.center -= &b * (1.0 / (n + 1.0));
            let scale = n * n / (n * n - 1.0);
            let outer = &b * b.transpose();
            self.shape = (&self.shape - outer * (2.0 / (n + 1.0))) * scale;
            self.shape = (&self.shape + self.shape.transpose()) * 0.5;
        }
        self.iterations += 1;
        true
    }

    /// Volume ratio of one central cut in `n` dimensions.
    pub fn volume_ratio(n: usize) -> f64 {
        if n == 1 {
            return 0.5;
        }
        let n = n as f64;
        (n / (n + 1.0)) * (n * n / (n * n - 1.0)).powf((n - 1.0) / 2.0)
    }

    fn positive_definite(&self) -> bool {
        self.shape.iter().all(|v| v.is_finite())
            && self.shape.clone().cholesky().is_some()
    }

    fn reset(&mut self) {
        let scale = self
            .shape
            .diagonal()
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |a, &b| a.max(b.abs()))
            .max(f64::MIN_POSITIVE);
        self.shape = DMatrix::identity(self.dim(), self.dim()) * scale;
        self.resets += 1;
        warn!("ellipsoid shape lost definiteness; reset to scaled identity");
    }
}

#[derive(Debug, Clone)]
pub struct EllipsoidResult {
    pub point: DVector<f64>,
    pub value: f64,
    /// Best certified lower bound on the minimum inside the initial ellipsoid.
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    pub resets: usize,
    /// Best-so-far value after every objective cut.
    pub trace: Vec<f64>,
}

pub fn ellipsoid_minimize<O: CutOracle + ?Sized>(
    mut state: EllipsoidState,
    oracle: &mut O,
    config: &EllipsoidConfig,
) -> EllipsoidResult {
    let mut best_point = state.center.clone();
    let mut lower = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;

    for iter in 0..config.max_iter {
        if iter % 50 == 49 && !state.positive_definite() {
            state.reset();
        }
        let x = state.center.clone();
        match oracle.cut(&x) {
            Cut::Objective { value, subgradient } => {
                if value < state.best_value {
                    state.best_value = value;
                    best_point = x.clone();
                }
                trace.push(state.best_value);
                let spread = state.spread(&subgradient);
                lower = lower.max(value - spread);
                if spread == 0.0 || state.best_value - lower <= config.tolerance {
                    converged = true;
                    break;
                }
                if oracle.should_stop(iter, state.best_value, &best_point) {
                    converged = true;
                    break;
                }
                if !state.cut(&subgradient) {
                    state.reset();
                }
            }
            Cut::Feasibility { normal } => {
                if !state.cut(&normal) {
                    state.reset();
                }
            }
        }
    }
    if !converged {
        warn!(
            "ellipsoid stopped at max_iter = {} with gap {:.3e}",
            config.max_iter,
            state.best_value - lower
        );
    }
    EllipsoidResult {
        point: best_point,
        value: state.best_value,
        lower_bound: lower,
        iterations: state.iterations,
        converged,
        resets: state.resets,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_quadratic() {
        let mut f = |x: &DVector<f64>| {
            let (a, b) = (x[0] - 1.0, x[1] + 2.0);
            Cut::Objective {
                value: a * a + b * b,
                subgradient: DVector::from_vec(vec![2.0 * a, 2.0 * b]),
            }
        };
        let start = EllipsoidState::with_semi_axes(DVector::zeros(2), &[10.0, 10.0]);
        let cfg = EllipsoidConfig {
            tolerance: 1e-14,
            max_iter: 5000,
        };
        let res = ellipsoid_minimize(start, &mut f, &cfg);
        assert!(res.converged);
        assert!((res.point[0] - 1.0).abs() < 1e-6 && (res.point[1] + 2.0).abs() < 1e-6);
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn abs_on_interval() {
        let mut f = |x: &DVector<f64>| {
            if x[0] > 1.0 {
                Cut::Feasibility {
                    normal: DVector::from_vec(vec![1.0]),
                }
            } else if x[0] < -1.0 {
                Cut::Feasibility {
                    normal: DVector::from_vec(vec![-1.0]),
                }
            } else {
                Cut::Objective {
                    value: x[0].abs(),
                    subgradient: DVector::from_vec(vec![x[0].signum()]),
                }
            }
        };
        let start = EllipsoidState::with_semi_axes(DVector::from_vec(vec![0.3]), &[2.0]);
        let cfg = EllipsoidConfig {
            tolerance: 1e-9,
            max_iter: 500,
        };
        let res = ellipsoid_minimize(start, &mut f, &cfg);
        assert!(res.point[0].abs() < 1e-6);
    }

    #[test]
    fn volume_shrinks_by_constant() {
        for n in [1usize, 2, 3, 7, 15] {
            let mut s = EllipsoidState::with_semi_axes(
                DVector::zeros(n),
                &(1..=n).map(|i| i as f64).collect::<Vec<_>>(),
            );
            let g = DVector::from_iterator(n, (0..n).map(|i| (i as f64 * 0.7).sin() + 0.3));
            for _ in 0..5 {
                let before = s.shape.determinant().sqrt();
                assert!(s.cut(&g));
                let after = s.shape.determinant().sqrt();
                let ratio = after / before;
                assert!(
                    (ratio - EllipsoidState::volume_ratio(n)).abs() < 1e-9,
                    "n={n}: {ratio}"
                );
            }
        }
    }
}
