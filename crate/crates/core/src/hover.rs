//! Speed-unconstrained problem: where to hover, for how long, and whom to serve.
//!
//! The dual is minimized with the ellipsoid method; each oracle call is a search over the
//! grid for the location and schedule maximizing the water-filled Lagrangian. The primal
//! plan is rebuilt by time-sharing (an LP) over inner solutions met along the way.

use std::collections::HashMap;
use std::f64::consts::LN_2;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opt_kernels::dual::{
    best_schedule, minimize_dual, near_optimal_schedules, DualConfig, DualEval, DualOracle,
    DualPoint, Mode, ScheduleChoice, ScheduleOptions, SnTerm,
};
use crate::opt_kernels::lp::{lp_solve, LpProblem};
use crate::opt_kernels::water_fill::{water_fill, water_fill_budget};
use crate::scenario::{BoxRegion, Point, Scenario};

/// Candidate hover locations with cached `d^alpha` to every SN.
#[derive(Debug, Clone)]
pub struct HoverGrid {
    pub points: Vec<Point>,
    sns: usize,
    dist_pow: Vec<f64>,
    ln_dist: Vec<f64>,
    inv_dist: Vec<f64>,
}

impl HoverGrid {
    pub fn new(scenario: &Scenario, region: &BoxRegion) -> Self {
        Self::from_points(scenario, region.grid_points())
    }

    pub fn from_points(scenario: &Scenario, points: Vec<Point>) -> Self {
        let sns = scenario.num_sns();
        let dist_pow: Vec<f64> = points
            .iter()
            .flat_map(|q| (0..sns).map(move |k| scenario.dist_pow(q, k)))
            .collect();
        Self {
            points,
            sns,
            ln_dist: dist_pow.iter().map(|d| d.ln()).collect(),
            inv_dist: dist_pow.iter().map(|d| d.recip()).collect(),
            dist_pow,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dist_pow(&self, i: usize, k: usize) -> f64 {
        self.dist_pow[i * self.sns + k]
    }

    /// `(ln d^alpha, d^-alpha)` to every SN from point `i`.
    pub(crate) fn logs(&self, i: usize) -> (&[f64], &[f64]) {
        let r = i * self.sns..(i + 1) * self.sns;
        (&self.ln_dist[r.clone()], &self.inv_dist[r])
    }
}

/// Per-dual-point factors of the SN terms: `x0_k = c_k / d_k^alpha`.
pub(crate) struct Scales {
    weight: Vec<f64>,
    c: Vec<f64>,
    ln_c: Vec<f64>,
}

impl Scales {
    pub(crate) fn new(point: &DualPoint, slots: usize, gamma0: f64) -> Self {
        let kk = point.sns();
        let mut s = Self {
            weight: vec![0.0; kk],
            c: vec![0.0; kk],
            ln_c: vec![f64::NEG_INFINITY; kk],
        };
        for k in 0..kk {
            let lambda = point.lambda[k];
            if lambda > 0.0 {
                s.weight[k] = lambda / LN_2;
                s.c[k] = gamma0 * point.level(k, slots);
                s.ln_c[k] = s.c[k].ln();
            }
        }
        s
    }

    pub(crate) fn fill(&self, ln_d: &[f64], inv_d: &[f64], out: &mut Vec<SnTerm>) {
        out.clear();
        out.extend((0..self.c.len()).map(|k| SnTerm {
            weight: self.weight[k],
            x0: self.c[k] * inv_d[k],
            ln_x0: self.ln_c[k] - ln_d[k],
        }));
    }

    /// Upper bound on any schedule's value when no option has a larger `kappa`.
    pub(crate) fn bound(&self, ln_d: &[f64], inv_d: &[f64], kappa: f64, ln_kappa: f64) -> f64 {
        (0..self.c.len())
            .map(|k| {
                let x = kappa * self.c[k] * inv_d[k];
                if self.weight[k] > 0.0 && x > 1.0 {
                    self.weight[k] * (ln_kappa + self.ln_c[k] - ln_d[k] - 1.0 + x.recip())
                } else {
                    0.0
                }
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution {
    pub grid_index: usize,
    pub location: Point,
    pub active: Vec<usize>,
    pub kappa: f64,
    pub power: Vec<f64>,
    pub rate: Vec<f64>,
    /// `sum_k a_k f_k` at this location.
    pub objective: f64,
}

impl InnerSolution {
    /// `sum_k a_k (lambda_k r_k - N mu_k p_k)` from the stored powers and rates.
    pub fn objective_from_fields(&self, point: &DualPoint, slots: usize) -> f64 {
        self.active
            .iter()
            .map(|&k| point.lambda[k] * self.rate[k] - slots as f64 * point.mu[k] * self.power[k])
            .sum()
    }

    pub fn report(&self, point: &DualPoint, slots: usize, pbar: f64) -> DualOracleReport {
        let nf = slots as f64;
        DualOracleReport {
            grad_lambda: self.rate.clone(),
            grad_mu: self.power.iter().map(|p| nf * pbar - nf * p).collect(),
            value: self.objective + nf * pbar * point.mu.iter().sum::<f64>(),
        }
    }
}

/// Dual value and subgradient at one dual point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualOracleReport {
    pub grad_lambda: Vec<f64>,
    pub grad_mu: Vec<f64>,
    pub value: f64,
}

pub(crate) fn sn_terms(point: &DualPoint, slots: usize, gamma0: f64, dist_pow: impl Fn(usize) -> f64) -> Vec<SnTerm> {
    let d: Vec<f64> = (0..point.sns()).map(dist_pow).collect();
    let ln_d: Vec<f64> = d.iter().map(|x| x.ln()).collect();
    let inv_d: Vec<f64> = d.iter().map(|x| x.recip()).collect();
    let mut out = Vec::with_capacity(d.len());
    Scales::new(point, slots, gamma0).fill(&ln_d, &inv_d, &mut out);
    out
}

/// Water-filled powers and rates of a schedule choice.
pub(crate) fn fill_choice(
    choice: &ScheduleChoice,
    point: &DualPoint,
    slots: usize,
    gamma0: f64,
    dist_pow: impl Fn(usize) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let kk = point.sns();
    let mut power = vec![0.0; kk];
    let mut rate = vec![0.0; kk];
    for &k in &choice.active {
        // mu is floored by construction, so this cannot be unbounded
        let wf = water_fill(point.lambda[k], point.mu[k], dist_pow(k), choice.kappa, gamma0, slots)
            .expect("power price is positive");
        power[k] = wf.power;
        rate[k] = wf.rate;
    }
    (power, rate)
}

fn pick(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Best location and schedule on the grid for dual point `point`.
///
/// Ties go to the lower grid index (x-major lexicographic order).
pub fn inner_search_on(
    scenario: &Scenario,
    grid: &HoverGrid,
    point: &DualPoint,
    options: &ScheduleOptions,
) -> InnerSolution {
    let slots = scenario.slots;
    let gamma0 = scenario.radio.gamma0;
    let scales = Scales::new(point, slots, gamma0);
    let kappa_max = options.kappas().fold(0.0, f64::max);
    let ln_kappa_max = kappa_max.ln();
    // points whose bound cannot beat the running best of their chunk are skipped; the
    // result is still the exact argmax with lowest-index ties
    let (_, best) = (0..grid.len())
        .into_par_iter()
        .fold(
            || (f64::NEG_INFINITY, usize::MAX, Vec::new()),
            |(bv, bi, mut buf), i| {
                let (ln_d, inv_d) = grid.logs(i);
                if bi != usize::MAX && scales.bound(ln_d, inv_d, kappa_max, ln_kappa_max) <= bv {
                    return (bv, bi, buf);
                }
                scales.fill(ln_d, inv_d, &mut buf);
                let (v, j) = pick((bv, bi), (best_schedule(&buf, options).value, i));
                (v, j, buf)
            },
        )
        .map(|(v, i, _)| (v, i))
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), pick);
    let terms = sn_terms(point, slots, gamma0, |k| grid.dist_pow(best, k));
    let choice = best_schedule(&terms, options);
    let (power, rate) = fill_choice(&choice, point, slots, gamma0, |k| grid.dist_pow(best, k));
    InnerSolution {
        grid_index: best,
        location: grid.points[best],
        active: choice.active,
        kappa: choice.kappa,
        power,
        rate,
        objective: choice.value,
    }
}

/// [`inner_search_on`] over the box grid with the full scheduling freedom.
pub fn inner_search(scenario: &Scenario, region: &BoxRegion, lambda: &[f64], mu: &[f64]) -> InnerSolution {
    let grid = HoverGrid::new(scenario, region);
    let point = DualPoint {
        lambda: lambda.to_vec(),
        mu: mu.to_vec(),
    };
    let options = Mode::Proposed.schedule_options(scenario.num_sns(), scenario.radio.antennas);
    inner_search_on(scenario, &grid, &point, &options)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoverConfig {
    pub dual: DualConfig,
    /// Stop once a primal plan is within this of the best dual value (bps/Hz).
    pub gap_tolerance: f64,
    /// Relative tie tolerance for collecting near-optimal inner solutions.
    pub tie_tolerance: f64,
    /// Hover points with `tau < prune * T` are dropped.
    pub prune: f64,
    /// Rate (bps/Hz) that may be given up to hover at fewer distinct locations.
    pub compaction: f64,
}

impl Default for HoverConfig {
    fn default() -> Self {
        Self {
            dual: DualConfig::default(),
            gap_tolerance: 1e-5,
            tie_tolerance: 1e-6,
            prune: 1e-6,
            compaction: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoverPoint {
    pub location: [f64; 2],
    pub grid_index: usize,
    /// Dwell time `tau`, s.
    pub duration: f64,
    pub active: Vec<usize>,
    pub kappa: f64,
    pub power: Vec<f64>,
    pub rate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoverPlan {
    pub mode: Mode,
    pub antennas: usize,
    pub horizon: f64,
    pub points: Vec<HoverPoint>,
    /// Max-min average rate, bps/Hz.
    pub rate: f64,
    pub sn_rates: Vec<f64>,
    pub dual_value: f64,
    pub dual_lower_bound: f64,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub floored: usize,
    pub columns: usize,
    pub dual_trace: Vec<f64>,
}

impl HoverPlan {
    pub fn hover_count(&self) -> usize {
        let mut idx: Vec<usize> = self
            .points
            .iter()
            .filter(|p| p.duration > 0.0)
            .map(|p| p.grid_index)
            .collect();
        idx.sort_unstable();
        idx.dedup();
        idx.len()
    }

    pub fn duality_gap(&self) -> f64 {
        self.dual_value - self.rate
    }

    pub fn locations(&self) -> Vec<Point> {
        self.points
            .iter()
            .map(|p| Point::new(p.location[0], p.location[1]))
            .collect()
    }

    /// Same plan stretched to another mission length (rates do not depend on `T`).
    pub fn rescaled(&self, horizon: f64) -> Self {
        let mut out = self.clone();
        let f = horizon / self.horizon;
        for p in &mut out.points {
            p.duration *= f;
        }
        out.horizon = horizon;
        out
    }
}

#[derive(Debug, Clone)]
struct Column {
    grid_index: usize,
    active: Vec<usize>,
    kappa: f64,
    power: Vec<f64>,
    rate: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Sharing {
    /// (column, fraction of T)
    shares: Vec<(Column, f64)>,
    sn_rates: Vec<f64>,
    rate: f64,
}

struct P2Oracle<'a> {
    scenario: &'a Scenario,
    grid: &'a HoverGrid,
    options: ScheduleOptions,
    columns: Vec<Column>,
    index: HashMap<(usize, Vec<usize>), usize>,
    best_primal: Option<Sharing>,
    gap_tolerance: f64,
    last_lp_size: usize,
}

impl P2Oracle<'_> {
    fn add(&mut self, c: Column) {
        let key = (c.grid_index, c.active.clone());
        match self.index.get(&key) {
            Some(&i) => self.columns[i] = c,
            None => {
                self.index.insert(key, self.columns.len());
                self.columns.push(c);
            }
        }
    }

    fn record(&mut self, s: Sharing) {
        if self.best_primal.as_ref().map_or(true, |b| s.rate > b.rate) {
            self.best_primal = Some(s);
        }
    }
}

impl DualOracle for P2Oracle<'_> {
    fn evaluate(&mut self, point: &DualPoint) -> DualEval {
        let sol = inner_search_on(self.scenario, self.grid, point, &self.options);
        let rep = sol.report(point, self.scenario.slots, self.scenario.radio.pbar);
        if !sol.active.is_empty() {
            self.add(Column {
                grid_index: sol.grid_index,
                active: sol.active,
                kappa: sol.kappa,
                power: sol.power,
                rate: sol.rate,
            });
        }
        DualEval {
            value: rep.value,
            grad_lambda: rep.grad_lambda,
            grad_mu: rep.grad_mu,
        }
    }

    fn primal_check(&mut self, _iter: usize, best_value: f64, _best: &DualPoint) -> bool {
        if self.columns.len() == self.last_lp_size {
            return self
                .best_primal
                .as_ref()
                .map_or(false, |b| best_value - b.rate <= self.gap_tolerance);
        }
        self.last_lp_size = self.columns.len();
        if let Some(s) = time_share(self.scenario, self.grid, &self.columns, 0.0) {
            self.record(s);
        }
        self.best_primal
            .as_ref()
            .map_or(false, |b| best_value - b.rate <= self.gap_tolerance)
    }
}

/// Per-SN max of `sum_c t_c log2(1 + g_c p_c)` subject to `sum_c t_c p_c <= P`.
fn polish(scenario: &Scenario, grid: &HoverGrid, shares: &mut [(Column, f64)]) -> Vec<f64> {
    let kk = scenario.num_sns();
    let gamma0 = scenario.radio.gamma0;
    let mut sn_rates = vec![0.0; kk];
    for k in 0..kk {
        let members: Vec<usize> = (0..shares.len())
            .filter(|&c| shares[c].0.active.contains(&k))
            .collect();
        let weights: Vec<f64> = members.iter().map(|&c| shares[c].1).collect();
        let gains: Vec<f64> = members
            .iter()
            .map(|&c| shares[c].0.kappa * gamma0 / grid.dist_pow(shares[c].0.grid_index, k))
            .collect();
        let p = water_fill_budget(&weights, &gains, scenario.radio.pbar);
        for (j, &c) in members.iter().enumerate() {
            let r = (gains[j] * p[j]).ln_1p() / LN_2;
            shares[c].0.power[k] = p[j];
            shares[c].0.rate[k] = r;
            sn_rates[k] += shares[c].1 * r;
        }
    }
    sn_rates
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Time-sharing LP over `columns` (with the average-power rows), then per-SN power
/// re-optimization on the chosen shares. Shares below `prune` are dropped first.
fn time_share(scenario: &Scenario, grid: &HoverGrid, columns: &[Column], prune: f64) -> Option<Sharing> {
    let kk = scenario.num_sns();
    let pbar = scenario.radio.pbar;
    let mut pool: Vec<Column> = columns.to_vec();
    let mut best: Option<Sharing> = None;
    for _round in 0..3 {
        let c = pool.len();
        if c == 0 {
            return best;
        }
        let mut obj = vec![0.0; c + 1];
        obj[c] = 1.0;
        let mut lp = LpProblem::new(obj);
        for k in 0..kk {
            let mut row: Vec<f64> = pool.iter().map(|col| -col.rate[k]).collect();
            row.push(1.0);
            lp.leq(row, 0.0);
        }
        for k in 0..kk {
            let mut row: Vec<f64> = pool.iter().map(|col| col.power[k] / pbar).collect();
            row.push(0.0);
            lp.leq(row, 1.0);
        }
        // idle time is allowed; shares are renormalized and powers re-filled afterwards
        let mut ones = vec![1.0; c];
        ones.push(0.0);
        lp.leq(ones, 1.0);
        let sol = match lp_solve(&lp) {
            Ok(s) => s,
            Err(e) => {
                warn!("time-sharing LP failed: {e}");
                return best;
            }
        };
        let mut shares: Vec<(Column, f64)> = pool
            .iter()
            .zip(&sol.x)
            .filter(|(_, &t)| t > prune.max(1e-15))
            .map(|(col, &t)| (col.clone(), t))
            .collect();
        let total: f64 = shares.iter().map(|s| s.1).sum();
        if total <= 0.0 {
            return best;
        }
        for s in &mut shares {
            s.1 /= total;
        }
        let sn_rates = polish(scenario, grid, &mut shares);
        let rate = min_of(&sn_rates);
        debug!("time sharing: {} columns, lp r = {:.9}, polished r = {:.9}", c, sol.value, rate);
        let improved = best.as_ref().map_or(true, |b| rate > b.rate + 1e-12);
        if improved {
            pool = shares.iter().map(|s| s.0.clone()).collect();
            best = Some(Sharing {
                shares,
                sn_rates,
                rate,
            });
        } else {
            break;
        }
    }
    best
}

/// Near-optimal inner solutions at `point` across the whole grid.
fn tie_columns(scenario: &Scenario, grid: &HoverGrid, point: &DualPoint, options: &ScheduleOptions, rel: f64) -> Vec<Column> {
    let slots = scenario.slots;
    let gamma0 = scenario.radio.gamma0;
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| best_schedule(&sn_terms(point, slots, gamma0, |k| grid.dist_pow(i, k)), options).value)
        .collect();
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eta = rel * (1.0 + top.abs());
    let mut out = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if v < top - eta {
            continue;
        }
        let terms = sn_terms(point, slots, gamma0, |k| grid.dist_pow(i, k));
        for choice in near_optimal_schedules(&terms, options, eta) {
            if choice.active.is_empty() || choice.value < top - eta {
                continue;
            }
            let (power, rate) = fill_choice(&choice, point, slots, gamma0, |k| grid.dist_pow(i, k));
            out.push(Column {
                grid_index: i,
                active: choice.active,
                kappa: choice.kappa,
                power,
                rate,
            });
        }
    }
    out
}

/// Greedy backward elimination of whole hover locations while the max-min rate stays
/// within `budget` of the starting plan.
fn compact(scenario: &Scenario, grid: &HoverGrid, plan: &Sharing, budget: f64) -> Sharing {
    let floor = plan.rate - budget;
    let mut current = plan.clone();
    loop {
        let mut locations: Vec<usize> = current.shares.iter().map(|s| s.0.grid_index).collect();
        locations.sort_unstable();
        locations.dedup();
        if locations.len() <= 1 {
            return current;
        }
        let mut best: Option<Sharing> = None;
        for &loc in &locations {
            let pool: Vec<Column> = current
                .shares
                .iter()
                .filter(|s| s.0.grid_index != loc)
                .map(|s| s.0.clone())
                .collect();
            if let Some(s) = time_share(scenario, grid, &pool, 0.0) {
                if s.rate >= floor && best.as_ref().map_or(true, |b| s.rate > b.rate) {
                    best = Some(s);
                }
            }
        }
        match best {
            Some(b) => current = b,
            None => return current,
        }
    }
}

pub fn solve_p2_on(scenario: &Scenario, grid: &HoverGrid, mode: Mode, config: &HoverConfig) -> Result<HoverPlan> {
    if grid.is_empty() {
        return Err(Error::Invariant {
            field: "grid".into(),
        });
    }
    let kk = scenario.num_sns();
    let options = mode.schedule_options(kk, scenario.radio.antennas);
    let mut oracle = P2Oracle {
        scenario,
        grid,
        options: options.clone(),
        columns: Vec::new(),
        index: HashMap::new(),
        best_primal: None,
        gap_tolerance: config.gap_tolerance,
        last_lp_size: 0,
    };
    let outcome = minimize_dual(kk, scenario.slots, scenario.radio.pbar, &mut oracle, &config.dual);
    for c in tie_columns(scenario, grid, &outcome.point, &options, config.tie_tolerance) {
        oracle.add(c);
    }
    if let Some(s) = time_share(scenario, grid, &oracle.columns, config.prune) {
        oracle.record(s);
    }
    let columns = oracle.columns.len();
    let Some(mut best) = oracle.best_primal.take() else {
        return Err(Error::LpInfeasible);
    };
    // enforce the pruning rule on whichever plan won, then re-balance power
    if best.shares.iter().any(|s| s.1 < config.prune) {
        best.shares.retain(|s| s.1 >= config.prune);
        let total: f64 = best.shares.iter().map(|s| s.1).sum();
        for s in &mut best.shares {
            s.1 /= total;
        }
        best.sn_rates = polish(scenario, grid, &mut best.shares);
        best.rate = min_of(&best.sn_rates);
    }
    if config.compaction > 0.0 {
        best = compact(scenario, grid, &best, config.compaction);
    }
    if !outcome.converged {
        warn!("dual search did not converge in {} iterations", outcome.iterations);
    }
    if outcome.floored > 0 {
        debug!("power price floored in {} oracle calls", outcome.floored);
    }
    let horizon = scenario.horizon;
    let points = best
        .shares
        .iter()
        .map(|(c, t)| HoverPoint {
            location: [grid.points[c.grid_index][0], grid.points[c.grid_index][1]],
            grid_index: c.grid_index,
            duration: t * horizon,
            active: c.active.clone(),
            kappa: c.kappa,
            power: c.power.clone(),
            rate: c.rate.clone(),
        })
        .collect();
    Ok(HoverPlan {
        mode,
        antennas: scenario.radio.antennas,
        horizon,
        points,
        rate: best.rate,
        sn_rates: best.sn_rates,
        dual_value: outcome.value,
        dual_lower_bound: outcome.lower_bound,
        lambda: outcome.point.lambda,
        mu: outcome.point.mu,
        iterations: outcome.iterations,
        converged: outcome.converged,
        floored: outcome.floored,
        columns,
        dual_trace: outcome.trace,
    })
}

pub fn solve_p2(scenario: &Scenario, region: &BoxRegion, config: &HoverConfig) -> Result<HoverPlan> {
    solve_p2_on(scenario, &HoverGrid::new(scenario, region), Mode::Proposed, config)
}

pub fn solve_p2_benchmark(scenario: &Scenario, mode: Mode, config: &HoverConfig) -> Result<HoverPlan> {
    let region = BoxRegion::from_scenario(scenario);
    solve_p2_on(scenario, &HoverGrid::new(scenario, &region), mode, config)
}

/// Dual value at an arbitrary point (no side effects).
pub fn dual_value(scenario: &Scenario, grid: &HoverGrid, mode: Mode, point: &DualPoint) -> f64 {
    let options = mode.schedule_options(scenario.num_sns(), scenario.radio.antennas);
    let sol = inner_search_on(scenario, grid, point, &options);
    sol.report(point, scenario.slots, scenario.radio.pbar).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, MissionTemplate};

    fn tiny(positions: Vec<[f64; 2]>, antennas: usize) -> Scenario {
        let mut f = generate_scenario(1, 1, 100.0, &MissionTemplate::default()).unwrap().to_file();
        f.sns.positions = positions;
        f.uav.m = antennas;
        f.uav.t = 10.0;
        Scenario::from_file(&f).unwrap()
    }

    #[test]
    fn single_sn_hovers_on_top() {
        let s = tiny(vec![[120.0, 40.0]], 12);
        let plan = solve_p2_benchmark(&s, Mode::Proposed, &HoverConfig::default()).unwrap();
        assert_eq!(plan.hover_count(), 1);
        assert_eq!(plan.points[0].location, [120.0, 40.0]);
        assert!((plan.points[0].duration - s.horizon).abs() < 1e-9);
        let link = crate::channel::Link::new(s.sns[0], s.altitude, s.sns[0]);
        let full = crate::channel::rate_closed_form(&link, s.radio.pbar, 12.0, &s.radio);
        assert!((plan.rate - full).abs() < 1e-6, "{} vs {}", plan.rate, full);
        assert!(plan.duality_gap().abs() < 1e-5);
    }

    #[test]
    fn inner_solution_fields_agree() {
        let s = tiny(vec![[0.0, 0.0], [300.0, 100.0], [150.0, 400.0]], 4);
        let region = BoxRegion::from_scenario(&s);
        let lambda = [0.2, 0.5, 0.3];
        let mu = [3.0, 40.0, 7.0];
        let sol = inner_search(&s, &region, &lambda, &mu);
        let point = DualPoint {
            lambda: lambda.to_vec(),
            mu: mu.to_vec(),
        };
        let direct = sol.objective_from_fields(&point, s.slots);
        assert!((direct - sol.objective).abs() <= 1e-10 * (1.0 + sol.objective.abs()));
        let rep = sol.report(&point, s.slots, s.radio.pbar);
        for k in 0..3 {
            assert_eq!(rep.grad_lambda[k], sol.rate[k]);
            let expect = s.slots as f64 * (s.radio.pbar - sol.power[k]);
            assert!((rep.grad_mu[k] - expect).abs() <= 1e-10 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn zero_weight_sn_never_served() {
        let s = tiny(vec![[0.0, 0.0], [300.0, 100.0]], 4);
        let region = BoxRegion::from_scenario(&s);
        let sol = inner_search(&s, &region, &[0.0, 1.0], &[1.0, 1.0]);
        assert!(!sol.active.contains(&0));
    }
}
