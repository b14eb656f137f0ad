//! Lagrange-dual machinery shared by the hover-point and per-slot scheduling problems.
//!
//! Both problems have the dual
//!
//! `min_{lambda in simplex, mu >= 0}  sum_n max_{schedule} sum_k a_k f_k  +  N P sum_k mu_k`
//!
//! where the per-SN utility after water-filling is
//! `f_k = (lambda_k / ln 2) (ln x - 1 + 1/x)` with `x = kappa gamma0 L_k / d_k^alpha` and
//! water level `L_k = lambda_k / (N mu_k ln 2)`; `f_k > 0` exactly when `x > 1`.

use std::f64::consts::LN_2;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ellipsoid::{ellipsoid_minimize, Cut, CutOracle, EllipsoidConfig, EllipsoidState};

/// Power prices below this are clamped inside the oracle.
pub const MU_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// ZF multiplexing of up to `min(M-1, K)` SNs, or a single SN with MRC.
    Proposed,
    /// At most one SN per slot, MRC with `kappa = M`.
    Mrc,
    /// At most one SN per slot on a single antenna.
    SingleAntenna,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Proposed, Mode::Mrc, Mode::SingleAntenna];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::Mrc => "mrc",
            Mode::SingleAntenna => "single",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "proposed" => Some(Mode::Proposed),
            "mrc" => Some(Mode::Mrc),
            "single" | "single_antenna" | "single-antenna" => Some(Mode::SingleAntenna),
            _ => None,
        }
    }

    /// `(number of SNs served, kappa)` pairs, in tie-break order.
    pub fn schedule_options(self, sns: usize, antennas: usize) -> ScheduleOptions {
        let mut opts = Vec::new();
        match self {
            Mode::Proposed => {
                opts.push((1, antennas as f64));
                let kmax = antennas.saturating_sub(1).min(sns);
                for j in 2..=kmax {
                    opts.push((j, (antennas - j) as f64));
                }
            }
            Mode::Mrc => opts.push((1, antennas as f64)),
            Mode::SingleAntenna => opts.push((1, 1.0)),
        }
        ScheduleOptions(opts)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOptions(pub Vec<(usize, f64)>);

impl ScheduleOptions {
    pub fn kappas(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|o| o.1)
    }
}

/// `ln x - 1 + 1/x` for `x > 1`, else 0.
#[inline]
pub fn wf_gain(x: f64) -> f64 {
    if x > 1.0 {
        x.ln() - 1.0 + x.recip()
    } else {
        0.0
    }
}

/// Per-SN inputs of one location: `weight_k = lambda_k / ln 2` (times any common scale)
/// and `x0_k = gamma0 L_k / d_k^alpha` (the water-filling ratio before multiplying by kappa).
#[derive(Debug, Clone, Copy)]
pub struct SnTerm {
    pub weight: f64,
    pub x0: f64,
    /// `ln x0` (`-inf` when the SN carries no weight).
    pub ln_x0: f64,
}

impl SnTerm {
    pub fn new(weight: f64, x0: f64) -> Self {
        let ln_x0 = if weight > 0.0 && x0 > 0.0 { x0.ln() } else { f64::NEG_INFINITY };
        Self { weight, x0, ln_x0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleChoice {
    pub value: f64,
    /// Served SNs in ascending index order.
    pub active: Vec<usize>,
    pub kappa: f64,
}

impl ScheduleChoice {
    pub fn empty() -> Self {
        Self {
            value: 0.0,
            active: Vec::new(),
            kappa: 0.0,
        }
    }
}

/// Picks the best schedule at one location. For each option the served set is the
/// `j` SNs with the largest `f_k` (lower index first on ties); an option only
/// replaces the incumbent (initially the empty schedule) on strict improvement.
pub fn best_schedule(terms: &[SnTerm], options: &ScheduleOptions) -> ScheduleChoice {
    let mut best = ScheduleChoice::empty();
    let mut f: Vec<(f64, usize)> = Vec::with_capacity(terms.len());
    for &(count, kappa) in &options.0 {
        if count > terms.len() {
            continue;
        }
        let ln_kappa = kappa.ln();
        f.clear();
        f.extend(terms.iter().enumerate().map(|(k, t)| {
            let x = kappa * t.x0;
            // ln(kappa x0) = ln kappa + ln x0 keeps logarithms out of the option loop
            let g = if x > 1.0 { ln_kappa + t.ln_x0 - 1.0 + x.recip() } else { 0.0 };
            (t.weight * g, k)
        }));
        let value = if count == 1 {
            let (v, k) = f
                .iter()
                .copied()
                .fold((f64::NEG_INFINITY, usize::MAX), |a, b| if b.0 > a.0 { b } else { a });
            if v > best.value {
                best = ScheduleChoice {
                    value: v,
                    active: vec![k],
                    kappa,
                };
            }
            continue;
        } else {
            // top-`count` under (f desc, index asc); the selected set is the same as a full sort's
            if count < f.len() {
                f.select_nth_unstable_by(count - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            }
            f[..count].iter().map(|x| x.0).sum::<f64>()
        };
        if value > best.value {
            let mut active: Vec<usize> = f[..count].iter().map(|x| x.1).collect();
            active.sort_unstable();
            best = ScheduleChoice {
                value,
                active,
                kappa,
            };
        }
    }
    best
}

/// All schedules whose value is within `eta` of the best, in enumeration order.
pub fn near_optimal_schedules(
    terms: &[SnTerm],
    options: &ScheduleOptions,
    eta: f64,
) -> Vec<ScheduleChoice> {
    let best = best_schedule(terms, options);
    let mut out = Vec::new();
    if best.value <= eta {
        out.push(ScheduleChoice::empty());
    }
    for &(count, kappa) in &options.0 {
        if count > terms.len() {
            continue;
        }
        let mut f: Vec<(f64, usize)> = terms
            .iter()
            .enumerate()
            .map(|(k, t)| (t.weight * wf_gain(kappa * t.x0), k))
            .collect();
        f.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        // every subset of size `count` drawn from the SNs whose f is tied with the
        // cut-off can be optimal; enumerate those combinations
        let head: f64 = f[..count].iter().map(|x| x.0).sum();
        if head < best.value - eta || f[count - 1].0 <= 0.0 {
            continue;
        }
        let cutoff = f[count - 1].0;
        let fixed: Vec<usize> = f.iter().take_while(|x| x.0 > cutoff + eta).map(|x| x.1).collect();
        let pool: Vec<usize> = f
            .iter()
            .filter(|x| x.0 > 0.0 && (x.0 - cutoff).abs() <= eta)
            .map(|x| x.1)
            .collect();
        let need = count - fixed.len();
        if need > pool.len() {
            continue;
        }
        for combo in combinations(pool.len(), need).into_iter().take(64) {
            let mut active = fixed.clone();
            active.extend(combo.iter().map(|&i| pool[i]));
            active.sort_unstable();
            let value: f64 = active
                .iter()
                .map(|&k| terms[k].weight * wf_gain(kappa * terms[k].x0))
                .sum();
            if value >= best.value - eta && !out.iter().any(|c: &ScheduleChoice| c.active == active && c.kappa == kappa) {
                out.push(ScheduleChoice {
                    value,
                    active,
                    kappa,
                });
            }
        }
    }
    out
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < r - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    rec(0, n, r, &mut cur, &mut out);
    out
}

/// Dual variables `(lambda, mu)`; for the per-slot problem these are `(nu, phi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl DualPoint {
    pub fn sns(&self) -> usize {
        self.lambda.len()
    }

    /// Water level `lambda_k / (N mu_k ln 2)`.
    pub fn level(&self, k: usize, slots: usize) -> f64 {
        self.lambda[k] / (slots as f64 * self.mu[k] * LN_2)
    }
}

/// Dual value at a point with its subgradient.
#[derive(Debug, Clone)]
pub struct DualEval {
    pub value: f64,
    /// `d g / d lambda_k`
    pub grad_lambda: Vec<f64>,
    /// `d g / d mu_k`
    pub grad_mu: Vec<f64>,
}

pub trait DualOracle {
    fn evaluate(&mut self, point: &DualPoint) -> DualEval;

    /// Called with the best dual value so far; returning true stops the search (used to
    /// stop once a primal solution certifies the gap).
    fn primal_check(&mut self, _iter: usize, _best_value: f64, _best: &DualPoint) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualConfig {
    pub tolerance: f64,
    pub max_iter: usize,
    /// Primal check frequency in objective cuts (0 disables it).
    pub check_every: usize,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_iter: 20_000,
            check_every: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualOutcome {
    pub point: DualPoint,
    pub value: f64,
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    pub resets: usize,
    /// Oracle calls in which some price had to be raised to the floor.
    pub floored: usize,
    pub trace: Vec<f64>,
}

/// Minimizes a dual over `lambda in simplex`, `mu >= 0` with the ellipsoid method.
///
/// `lambda_K` is eliminated as `1 - sum_{k<K} lambda_k`. The starting ellipsoid is
/// centered at `lambda = 1/K`, `mu = 1/(K P N ln2)` and covers `[0,1]^{K-1} x [0, mu_max]`
/// with `mu_max = 10/(N P ln2)`.
pub fn minimize_dual<O: DualOracle>(
    sns: usize,
    slots: usize,
    pbar: f64,
    oracle: &mut O,
    config: &DualConfig,
) -> DualOutcome {
    assert!(sns >= 1 && slots >= 1 && pbar > 0.0);
    let kk = sns;
    let dim = 2 * kk - 1;
    let nf = slots as f64;
    let mu0 = 1.0 / (kk as f64 * pbar * nf * LN_2);
    let mu_max = 10.0 / (nf * pbar * LN_2);
    let root = (dim as f64).sqrt();
    let mut center = DVector::zeros(dim);
    let mut axes = vec![0.0; dim];
    for k in 0..kk - 1 {
        center[k] = 1.0 / kk as f64;
        axes[k] = root;
    }
    for k in 0..kk {
        center[kk - 1 + k] = mu0;
        axes[kk - 1 + k] = root * mu_max;
    }
    let state = EllipsoidState::with_semi_axes(center, &axes);

    let mut adapter = Adapter {
        sns: kk,
        oracle,
        floored: 0,
        check_every: config.check_every,
        cuts: 0,
    };
    let res = ellipsoid_minimize(
        state,
        &mut adapter,
        &EllipsoidConfig {
            tolerance: config.tolerance,
            max_iter: config.max_iter,
        },
    );
    let floored = adapter.floored;
    DualOutcome {
        point: unpack(kk, &res.point),
        value: res.value,
        lower_bound: res.lower_bound,
        iterations: res.iterations,
        converged: res.converged,
        resets: res.resets,
        floored,
        trace: res.trace,
    }
}

fn unpack(kk: usize, z: &DVector<f64>) -> DualPoint {
    let mut lambda: Vec<f64> = (0..kk - 1).map(|k| z[k].max(0.0)).collect();
    let rest = 1.0 - lambda.iter().sum::<f64>();
    lambda.push(rest.max(0.0));
    let mu = (0..kk).map(|k| z[kk - 1 + k].max(MU_FLOOR)).collect();
    DualPoint { lambda, mu }
}

struct Adapter<'a, O> {
    sns: usize,
    oracle: &'a mut O,
    floored: usize,
    check_every: usize,
    cuts: usize,
}

impl<O: DualOracle> CutOracle for Adapter<'_, O> {
    fn cut(&mut self, z: &DVector<f64>) -> Cut {
        let kk = self.sns;
        let dim = z.len();
        // feasibility: lambda_k >= 0, lambda_K >= 0, mu_k >= 0
        for k in 0..kk - 1 {
            if z[k] < 0.0 {
                let mut normal = DVector::zeros(dim);
                normal[k] = -1.0;
                return Cut::Feasibility { normal };
            }
        }
        let partial: f64 = (0..kk - 1).map(|k| z[k]).sum();
        if partial > 1.0 {
            let mut normal = DVector::zeros(dim);
            for k in 0..kk - 1 {
                normal[k] = 1.0;
            }
            return Cut::Feasibility { normal };
        }
        for k in 0..kk {
            if z[kk - 1 + k] < 0.0 {
                let mut normal = DVector::zeros(dim);
                normal[kk - 1 + k] = -1.0;
                return Cut::Feasibility { normal };
            }
        }
        if (0..kk).any(|k| z[kk - 1 + k] < MU_FLOOR) {
            self.floored += 1;
        }
        let point = unpack(kk, z);
        let eval = self.oracle.evaluate(&point);
        let mut g = DVector::zeros(dim);
        for k in 0..kk - 1 {
            g[k] = eval.grad_lambda[k] - eval.grad_lambda[kk - 1];
        }
        for k in 0..kk {
            g[kk - 1 + k] = eval.grad_mu[k];
        }
        self.cuts += 1;
        Cut::Objective {
            value: eval.value,
            subgradient: g,
        }
    }

    fn should_stop(&mut self, iter: usize, best_value: f64, best_point: &DVector<f64>) -> bool {
        if self.check_every == 0 || self.cuts % self.check_every != 0 {
            return false;
        }
        let p = unpack(self.sns, best_point);
        self.oracle.primal_check(iter, best_value, &p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn option_enumeration() {
        let o = Mode::Proposed.schedule_options(8, 4);
        assert_eq!(o.0, vec![(1, 4.0), (2, 2.0), (3, 1.0)]);
        let o = Mode::Proposed.schedule_options(1, 2);
        assert_eq!(o.0, vec![(1, 2.0)]);
        assert_eq!(Mode::Mrc.schedule_options(8, 12).0, vec![(1, 12.0)]);
        assert_eq!(Mode::SingleAntenna.schedule_options(8, 12).0, vec![(1, 1.0)]);
        assert_eq!(Mode::Proposed.schedule_options(8, 1).0, vec![(1, 1.0)]);
    }

    #[test]
    fn gain_vanishes_at_one() {
        assert_eq!(wf_gain(1.0), 0.0);
        assert_eq!(wf_gain(0.3), 0.0);
        assert!(wf_gain(1.0 + 1e-6) > 0.0);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let terms = vec![SnTerm::new(1.0, 3.0); 3];
        let c = best_schedule(&terms, &Mode::Mrc.schedule_options(3, 4));
        assert_eq!(c.active, vec![0]);
        let c = best_schedule(&terms, &ScheduleOptions(vec![(2, 2.0)]));
        assert_eq!(c.active, vec![0, 1]);
    }

    #[test]
    fn nothing_worth_serving() {
        let terms = vec![SnTerm::new(1.0, 0.01), SnTerm::new(0.0, 9.0)];
        let c = best_schedule(&terms, &Mode::Proposed.schedule_options(2, 4));
        assert!(c.active.is_empty());
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn near_ties_include_symmetric_pair() {
        let terms = vec![SnTerm::new(1.0, 3.0), SnTerm::new(1.0, 3.0)];
        let c = near_optimal_schedules(&terms, &Mode::Mrc.schedule_options(2, 4), 1e-9);
        let sets: Vec<_> = c.iter().map(|c| c.active.clone()).collect();
        assert_eq!(sets, vec![vec![0], vec![1]]);
    }

    #[test]
    fn combinations_count() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
    }
}
