//! Scheduling and power allocation along a fixed trajectory.
//!
//! The dual decouples over slots: each slot picks the schedule maximizing
//! `sum_k a_k ((nu_k/N) r_k - phi_k p_k)` with water-filled powers. Slots at identical
//! positions share one evaluation. The primal is read off the per-slot solutions at the
//! dual optimum; slots whose choice is tied there are resolved by a small LP over the tied
//! options, rounded to whole slots, followed by per-SN power re-filling.

use std::collections::HashMap;
use std::f64::consts::LN_2;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::kappa;
use crate::error::{Error, Result};
use crate::hover::{fill_choice, sn_terms, Scales};
use crate::opt_kernels::dual::{
    best_schedule, minimize_dual, near_optimal_schedules, DualConfig, DualEval, DualOracle,
    DualPoint, Mode, ScheduleChoice, ScheduleOptions,
};
use crate::opt_kernels::lp::{lp_solve, LpProblem};
use crate::opt_kernels::water_fill::water_fill_budget;
use crate::scenario::{Point, RadioParams, Scenario};

/// Solution of one slot's subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSolution {
    pub active: Vec<usize>,
    pub kappa: f64,
    pub power: Vec<f64>,
    pub rate: Vec<f64>,
    /// `sum_k a_k ((nu_k/N) r_k - phi_k p_k)`
    pub objective: f64,
}

/// Best schedule and powers for one slot with SN distances `dist_pow[k] = d_k^alpha`.
pub fn per_slot_inner(
    dist_pow: &[f64],
    nu: &[f64],
    phi: &[f64],
    slots: usize,
    radio: &RadioParams,
    options: &ScheduleOptions,
) -> SlotSolution {
    let point = DualPoint {
        lambda: nu.to_vec(),
        mu: phi.to_vec(),
    };
    let terms = sn_terms(&point, slots, radio.gamma0, |k| dist_pow[k]);
    let choice = best_schedule(&terms, options);
    let (power, rate) = fill_choice(&choice, &point, slots, radio.gamma0, |k| dist_pow[k]);
    SlotSolution {
        active: choice.active,
        kappa: choice.kappa,
        power,
        rate,
        objective: choice.value / slots as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub dual: DualConfig,
    /// Stop the dual search once a primal schedule is this close (bps/Hz).
    pub gap_tolerance: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            // each check solves a small LP, so run it less often than for hover plans
            dual: DualConfig {
                check_every: 200,
                ..DualConfig::default()
            },
            gap_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePower {
    pub mode: Mode,
    pub antennas: usize,
    /// Served SNs per slot, ascending.
    pub active: Vec<Vec<usize>>,
    /// Per-slot multiplexing coefficient (0 for idle slots).
    pub kappa: Vec<f64>,
    /// `power[n][k]`, W.
    pub power: Vec<Vec<f64>>,
    pub sn_rates: Vec<f64>,
    pub rate: f64,
    /// Dual bound from the solve that produced this schedule; `None` once powers have been
    /// re-filled on a different trajectory.
    pub dual_value: Option<f64>,
    pub nu: Vec<f64>,
    pub phi: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Slots whose choice was tied at the dual optimum.
    pub ties: usize,
}

impl SchedulePower {
    pub fn slots(&self) -> usize {
        self.active.len()
    }

    /// `a_k[n]` as a dense mask.
    pub fn mask(&self, sns: usize) -> Vec<Vec<bool>> {
        self.active
            .iter()
            .map(|set| {
                let mut row = vec![false; sns];
                for &k in set {
                    row[k] = true;
                }
                row
            })
            .collect()
    }

    pub fn duality_gap(&self) -> Option<f64> {
        self.dual_value.map(|g| g - self.rate)
    }

    /// Checks the per-slot and average-power constraints.
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let kk = scenario.num_sns();
        let m = scenario.radio.antennas;
        let n = self.slots();
        let mut energy = vec![0.0; kk];
        for slot in 0..n {
            let set = &self.active[slot];
            if set.len() > m {
                return Err(Error::Invariant {
                    field: format!("slot {slot} serves {} SNs", set.len()),
                });
            }
            let expect = kappa(set.len(), m).unwrap_or(0.0);
            if set.len() > 0 && self.kappa[slot] > expect {
                return Err(Error::Invariant {
                    field: format!("slot {slot} kappa"),
                });
            }
            for k in 0..kk {
                let p = self.power[slot][k];
                if p < 0.0 || (p > 0.0 && !set.contains(&k)) {
                    return Err(Error::Invariant {
                        field: format!("power of SN {k} in slot {slot}"),
                    });
                }
                energy[k] += p;
            }
        }
        for (k, e) in energy.iter().enumerate() {
            if e / n as f64 > scenario.radio.pbar + 1e-9 {
                return Err(Error::Invariant {
                    field: format!("average power of SN {k}"),
                });
            }
        }
        Ok(())
    }
}

/// Slots sharing one position.
#[derive(Debug, Clone)]
struct Group {
    slots: Vec<usize>,
    dist_pow: Vec<f64>,
    ln_d: Vec<f64>,
    inv_d: Vec<f64>,
}

fn group_slots(scenario: &Scenario, trajectory: &[Point]) -> Vec<Group> {
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    for (n, q) in trajectory.iter().enumerate() {
        let key = (q[0].to_bits(), q[1].to_bits());
        match index.get(&key) {
            Some(&g) => groups[g].slots.push(n),
            None => {
                index.insert(key, groups.len());
                let dist_pow: Vec<f64> = (0..scenario.num_sns()).map(|k| scenario.dist_pow(q, k)).collect();
                groups.push(Group {
                    slots: vec![n],
                    ln_d: dist_pow.iter().map(|d| d.ln()).collect(),
                    inv_d: dist_pow.iter().map(|d| d.recip()).collect(),
                    dist_pow,
                });
            }
        }
    }
    groups
}

/// A concrete per-slot assignment with powers.
#[derive(Debug, Clone)]
struct Assignment {
    active: Vec<Vec<usize>>,
    kappa: Vec<f64>,
    power: Vec<Vec<f64>>,
    sn_rates: Vec<f64>,
    rate: f64,
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Per-SN water-filling over its scheduled slots with budget `N P`; SNs left without
/// power are dropped from their slots (which can only raise the others' kappa).
fn refill(
    scenario: &Scenario,
    dist: &[&[f64]],
    mode: Mode,
    mut active: Vec<Vec<usize>>,
) -> Assignment {
    let kk = scenario.num_sns();
    let n = active.len();
    let m = scenario.radio.antennas;
    let budget = n as f64 * scenario.radio.pbar;
    let kappa_of = |set: &[usize]| -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        match mode {
            Mode::SingleAntenna => 1.0,
            _ => kappa(set.len(), m).unwrap_or(0.0),
        }
    };
    let mut power = vec![vec![0.0; kk]; n];
    let mut kap: Vec<f64> = active.iter().map(|s| kappa_of(s)).collect();
    for _pass in 0..3 {
        for row in power.iter_mut() {
            row.iter_mut().for_each(|p| *p = 0.0);
        }
        kap = active.iter().map(|s| kappa_of(s)).collect();
        for k in 0..kk {
            let members: Vec<usize> = (0..n).filter(|&s| active[s].contains(&k)).collect();
            let gains: Vec<f64> = members
                .iter()
                .map(|&s| kap[s] * scenario.radio.gamma0 / dist[s][k])
                .collect();
            let p = water_fill_budget(&vec![1.0; members.len()], &gains, budget);
            for (j, &s) in members.iter().enumerate() {
                power[s][k] = p[j];
            }
        }
        let mut changed = false;
        for s in 0..n {
            let before = active[s].len();
            let row = &power[s];
            active[s].retain(|&k| row[k] > 0.0);
            changed |= active[s].len() != before;
        }
        if !changed {
            break;
        }
    }
    let mut sn_rates = vec![0.0; kk];
    for s in 0..n {
        for &k in &active[s] {
            let snr = kap[s] * power[s][k] * scenario.radio.gamma0 / dist[s][k];
            sn_rates[k] += snr.ln_1p() / LN_2;
        }
    }
    for r in &mut sn_rates {
        *r /= n as f64;
    }
    let rate = min_of(&sn_rates);
    Assignment {
        active,
        kappa: kap,
        power,
        sn_rates,
        rate,
    }
}

struct P3Oracle<'a> {
    scenario: &'a Scenario,
    groups: &'a [Group],
    dist: Vec<&'a [f64]>,
    options: ScheduleOptions,
    mode: Mode,
    best_primal: Option<Assignment>,
    gap_tolerance: f64,
}

impl P3Oracle<'_> {
    fn choices(&self, point: &DualPoint) -> Vec<ScheduleChoice> {
        let scales = Scales::new(point, self.dist.len(), self.scenario.radio.gamma0);
        self.groups
            .par_iter()
            .map_init(Vec::new, |buf, g| {
                scales.fill(&g.ln_d, &g.inv_d, buf);
                best_schedule(buf, &self.options)
            })
            .collect()
    }

    fn simple_primal(&self, point: &DualPoint) -> Assignment {
        let choices = self.choices(point);
        let mut active = vec![Vec::new(); self.dist.len()];
        for (g, c) in self.groups.iter().zip(&choices) {
            for &s in &g.slots {
                active[s] = c.active.clone();
            }
        }
        refill(self.scenario, &self.dist, self.mode, active)
    }
}

impl DualOracle for P3Oracle<'_> {
    fn evaluate(&mut self, point: &DualPoint) -> DualEval {
        let n = self.dist.len();
        let nf = n as f64;
        let kk = point.sns();
        let gamma0 = self.scenario.radio.gamma0;
        let scales = Scales::new(point, n, gamma0);
        let per_group: Vec<(f64, Vec<f64>, Vec<f64>)> = self
            .groups
            .par_iter()
            .map_init(Vec::new, |buf, g| {
                scales.fill(&g.ln_d, &g.inv_d, buf);
                let choice = best_schedule(buf, &self.options);
                let (p, r) = fill_choice(&choice, point, n, gamma0, |k| g.dist_pow[k]);
                (choice.value / nf, p, r)
            })
            .collect();
        let mut value = nf * self.scenario.radio.pbar * point.mu.iter().sum::<f64>();
        let mut grad_lambda = vec![0.0; kk];
        let mut grad_mu = vec![nf * self.scenario.radio.pbar; kk];
        for (g, (v, p, r)) in self.groups.iter().zip(per_group) {
            let c = g.slots.len() as f64;
            value += c * v;
            for k in 0..kk {
                grad_lambda[k] += c * r[k] / nf;
                grad_mu[k] -= c * p[k];
            }
        }
        DualEval {
            value,
            grad_lambda,
            grad_mu,
        }
    }

    fn primal_check(&mut self, _iter: usize, best_value: f64, best: &DualPoint) -> bool {
        let mut a = self.simple_primal(best);
        let gap = best_value - a.rate;
        if gap > self.gap_tolerance {
            if let Some((t, _)) = tie_recovery(self, best, gap / self.dist.len() as f64, 24, false) {
                if t.rate > a.rate {
                    a = t;
                }
            }
        }
        if self.best_primal.as_ref().map_or(true, |b| a.rate > b.rate) {
            self.best_primal = Some(a);
        }
        best_value - self.best_primal.as_ref().map_or(f64::NEG_INFINITY, |b| b.rate) <= self.gap_tolerance
    }
}

/// Resolves slots whose per-slot choice is (nearly) tied at the dual point.
fn tie_recovery(
    oracle: &P3Oracle<'_>,
    point: &DualPoint,
    eta: f64,
    max_groups: usize,
    polish: bool,
) -> Option<(Assignment, usize)> {
    let scenario = oracle.scenario;
    let n = oracle.dist.len();
    let kk = scenario.num_sns();
    let gamma0 = scenario.radio.gamma0;
    let pbar = scenario.radio.pbar;
    // per group: candidate choices with their water-filled powers and rates
    let cands: Vec<Vec<(ScheduleChoice, Vec<f64>, Vec<f64>)>> = oracle
        .groups
        .par_iter()
        .map(|g| {
            let terms = sn_terms(point, n, gamma0, |k| g.dist_pow[k]);
            near_optimal_schedules(&terms, &oracle.options, eta * n as f64)
                .into_iter()
                .map(|c| {
                    let (p, r) = fill_choice(&c, point, n, gamma0, |k| g.dist_pow[k]);
                    (c, p, r)
                })
                .collect()
        })
        .collect();
    // the argmax candidate of each group (first on equal values)
    let top: Vec<usize> = cands
        .iter()
        .map(|c| (0..c.len()).fold(0, |b, o| if c[o].0.value > c[b].0.value { o } else { b }))
        .collect();
    let margin = |g: usize| -> f64 {
        let best = cands[g][top[g]].0.value;
        (0..cands[g].len())
            .filter(|&o| o != top[g])
            .map(|o| best - cands[g][o].0.value)
            .fold(f64::INFINITY, f64::min)
    };
    let mut tied: Vec<usize> = (0..oracle.groups.len()).filter(|&g| cands[g].len() > 1).collect();
    if tied.is_empty() {
        return None;
    }
    if tied.len() > max_groups {
        // keep the closest ties, larger groups first on equal margins
        let sizes = |g: usize| oracle.groups[g].slots.len();
        tied.sort_by(|&a, &b| margin(a).total_cmp(&margin(b)).then(sizes(b).cmp(&sizes(a))).then(a.cmp(&b)));
        tied.truncate(max_groups);
        tied.sort_unstable();
    }
    let mut is_tied = vec![false; oracle.groups.len()];
    for &g in &tied {
        is_tied[g] = true;
    }
    // fixed contribution of the other groups at their argmax
    let mut fixed_rate = vec![0.0; kk];
    let mut fixed_power = vec![0.0; kk];
    for (g, group) in oracle.groups.iter().enumerate() {
        if !is_tied[g] {
            let c = group.slots.len() as f64;
            let (_, p, r) = &cands[g][top[g]];
            for k in 0..kk {
                fixed_rate[k] += c * r[k];
                fixed_power[k] += c * p[k];
            }
        }
    }
    let mut vars: Vec<(usize, usize)> = Vec::new();
    for &g in &tied {
        for o in 0..cands[g].len() {
            vars.push((g, o));
        }
    }
    let nv = vars.len();
    let mut obj = vec![0.0; nv + 1];
    obj[nv] = 1.0;
    let mut lp = LpProblem::new(obj);
    let nf = n as f64;
    for k in 0..kk {
        // r - (1/N) sum x r <= fixed/N
        let mut row: Vec<f64> = vars.iter().map(|&(g, o)| -cands[g][o].2[k] / nf).collect();
        row.push(1.0);
        lp.leq(row, fixed_rate[k] / nf);
    }
    for k in 0..kk {
        let mut row: Vec<f64> = vars.iter().map(|&(g, o)| cands[g][o].1[k] / (nf * pbar)).collect();
        row.push(0.0);
        lp.leq(row, ((nf * pbar - fixed_power[k]) / (nf * pbar)).max(0.0));
    }
    for &g in &tied {
        let mut row: Vec<f64> = vars.iter().map(|&(h, _)| if h == g { 1.0 } else { 0.0 }).collect();
        row.push(0.0);
        lp.leq(row, oracle.groups[g].slots.len() as f64);
    }
    let sol = match lp_solve(&lp) {
        Ok(s) => s,
        Err(e) => {
            debug!("tie LP failed: {e}");
            return None;
        }
    };
    // largest-remainder rounding of slot counts per group, then per-slot assignment
    let mut active = vec![Vec::new(); n];
    for (g, group) in oracle.groups.iter().enumerate() {
        if !is_tied[g] {
            for &s in &group.slots {
                active[s] = cands[g][top[g]].0.active.clone();
            }
        }
    }
    let mut counts: Vec<Vec<usize>> = Vec::new();
    for &g in &tied {
        let size = oracle.groups[g].slots.len();
        let xs: Vec<f64> = vars
            .iter()
            .zip(&sol.x)
            .filter(|((h, _), _)| *h == g)
            .map(|(_, &x)| x.max(0.0))
            .collect();
        let total: f64 = xs.iter().sum();
        let scaled: Vec<f64> = if total > 0.0 {
            xs.iter().map(|x| x * size as f64 / total).collect()
        } else {
            let mut v = vec![0.0; xs.len()];
            v[0] = size as f64;
            v
        };
        counts.push(largest_remainder(&scaled, size));
    }
    let assign = |counts: &[Vec<usize>], active: &mut Vec<Vec<usize>>| {
        for (i, &g) in tied.iter().enumerate() {
            let mut slots = oracle.groups[g].slots.iter();
            for (o, &c) in counts[i].iter().enumerate() {
                for _ in 0..c {
                    if let Some(&s) = slots.next() {
                        active[s] = cands[g][o].0.active.clone();
                    }
                }
            }
        }
    };
    assign(&counts, &mut active);
    let mut best = refill(scenario, &oracle.dist, oracle.mode, active.clone());

    // one-slot moves between tied options, first improvement, bounded effort
    let mut budget = if polish { 400 } else { 0 };
    'search: while budget > 0 {
        for i in 0..tied.len() {
            let opts = counts[i].len();
            for from in 0..opts {
                for to in 0..opts {
                    if to == from || counts[i][from] == 0 {
                        continue;
                    }
                    if budget == 0 {
                        break 'search;
                    }
                    budget -= 1;
                    let mut c2 = counts.clone();
                    c2[i][from] -= 1;
                    c2[i][to] += 1;
                    let mut a2 = active.clone();
                    assign(&c2, &mut a2);
                    let cand = refill(scenario, &oracle.dist, oracle.mode, a2.clone());
                    if cand.rate > best.rate + 1e-12 {
                        counts = c2;
                        active = a2;
                        best = cand;
                        continue 'search;
                    }
                }
            }
        }
        break;
    }
    let split: usize = tied
        .iter()
        .zip(&counts)
        .filter(|(_, c)| c.iter().filter(|&&x| x > 0).count() > 1)
        .map(|(&g, _)| oracle.groups[g].slots.len())
        .sum();
    Some((best, split))
}

/// Rate of one SN served in `slots` (slot, kappa) with its power budget water-filled.
fn sn_rate(scenario: &Scenario, dist: &[&[f64]], k: usize, slots: &[(usize, f64)]) -> f64 {
    let gains: Vec<f64> = slots
        .iter()
        .map(|&(s, kap)| kap * scenario.radio.gamma0 / dist[s][k])
        .collect();
    let n = dist.len();
    let p = water_fill_budget(&vec![1.0; gains.len()], &gains, n as f64 * scenario.radio.pbar);
    gains.iter().zip(&p).map(|(g, p)| (g * p).ln_1p()).sum::<f64>() / (LN_2 * n as f64)
}

/// `a` strictly better than `b` in the leximin order (sorted ascending, compared in turn).
fn leximin_better(a: &[f64], b: &[f64]) -> bool {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    for (u, v) in x.iter().zip(&y) {
        if u > &(v + 1e-12) {
            return true;
        }
        if u < &(v - 1e-12) {
            return false;
        }
    }
    false
}

/// Hill climbing on the schedule, one slot at a time: the weakest SNs are added to a
/// slot, take another SN's place, or have a co-scheduled SN dropped. Moves are accepted
/// on leximin improvement; `budget` bounds the number of evaluated moves.
fn rebalance(
    scenario: &Scenario,
    dist: &[&[f64]],
    mode: Mode,
    options: &ScheduleOptions,
    start: Assignment,
    budget: usize,
) -> Assignment {
    let kk = scenario.num_sns();
    let n = dist.len();
    let kappa_of = |size: usize| -> Option<f64> {
        if size == 0 {
            return Some(0.0);
        }
        options.0.iter().find(|o| o.0 == size).map(|o| o.1)
    };
    let mut active = start.active.clone();
    let mut kap: Vec<f64> = active.iter().map(|a| kappa_of(a.len()).unwrap_or(0.0)).collect();
    let mut rates = start.sn_rates.clone();
    // slots of each SN, nearest first so promising moves come early
    let by_distance: Vec<Vec<usize>> = (0..kk)
        .map(|k| {
            let mut v: Vec<usize> = (0..n).collect();
            v.sort_by(|&a, &b| dist[a][k].total_cmp(&dist[b][k]).then(a.cmp(&b)));
            v
        })
        .collect();
    let served = |active: &[Vec<usize>], kap: &[f64], k: usize, s: usize, set: &[usize], ks: f64| -> Vec<(usize, f64)> {
        (0..n)
            .filter_map(|t| {
                if t == s {
                    set.contains(&k).then_some((t, ks))
                } else {
                    active[t].contains(&k).then_some((t, kap[t]))
                }
            })
            .collect()
    };
    let mut evals = 0;
    let mut improved = false;
    'climb: loop {
        let mut order: Vec<usize> = (0..kk).collect();
        order.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]).then(a.cmp(&b)));
        for &k in &order {
            for &s in &by_distance[k] {
                let cur = &active[s];
                let mut moves: Vec<Vec<usize>> = Vec::new();
                if cur.contains(&k) {
                    for &j in cur.iter().filter(|&&j| j != k) {
                        moves.push(cur.iter().copied().filter(|&x| x != j).collect());
                    }
                } else {
                    let mut add = cur.clone();
                    add.push(k);
                    moves.push(add);
                    for &j in cur {
                        moves.push(cur.iter().map(|&x| if x == j { k } else { x }).collect());
                    }
                }
                for mut set in moves {
                    let Some(ks) = kappa_of(set.len()) else { continue };
                    if evals >= budget {
                        break 'climb;
                    }
                    evals += 1;
                    set.sort_unstable();
                    let mut trial = rates.clone();
                    for &j in cur.iter().chain(set.iter()) {
                        trial[j] = sn_rate(scenario, dist, j, &served(&active, &kap, j, s, &set, ks));
                    }
                    if leximin_better(&trial, &rates) {
                        active[s] = set;
                        kap[s] = ks;
                        rates = trial;
                        improved = true;
                        continue 'climb;
                    }
                }
            }
        }
        break;
    }
    if improved {
        let a = refill(scenario, dist, mode, active);
        if a.rate > start.rate {
            return a;
        }
    }
    start
}

fn largest_remainder(shares: &[f64], total: usize) -> Vec<usize> {
    let mut base: Vec<usize> = shares.iter().map(|s| s.floor().max(0.0) as usize).collect();
    let assigned: usize = base.iter().sum();
    let mut rest: Vec<(f64, usize)> = shares
        .iter()
        .enumerate()
        .map(|(i, s)| (s - s.floor(), i))
        .collect();
    rest.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = total.saturating_sub(assigned);
    for &(_, i) in rest.iter().cycle().take(left.max(0) * 2 + rest.len()) {
        if left == 0 {
            break;
        }
        base[i] += 1;
        left -= 1;
    }
    base
}

/// Moves evaluated by the final schedule hill climb.
const REBALANCE_BUDGET: usize = 50_000;

pub fn solve_p3_mode(
    scenario: &Scenario,
    trajectory: &[Point],
    mode: Mode,
    config: &ScheduleConfig,
) -> Result<SchedulePower> {
    let n = scenario.slots;
    if trajectory.len() != n {
        return Err(Error::Dimension(format!(
            "trajectory has {} slots, scenario {n}",
            trajectory.len()
        )));
    }
    let kk = scenario.num_sns();
    let groups = group_slots(scenario, trajectory);
    let mut slot_group = vec![0; n];
    for (g, group) in groups.iter().enumerate() {
        for &s in &group.slots {
            slot_group[s] = g;
        }
    }
    let dist: Vec<&[f64]> = slot_group.iter().map(|&g| groups[g].dist_pow.as_slice()).collect();
    let mut oracle = P3Oracle {
        scenario,
        groups: &groups,
        dist,
        options: mode.schedule_options(kk, scenario.radio.antennas),
        mode,
        best_primal: None,
        gap_tolerance: config.gap_tolerance,
    };
    let outcome = minimize_dual(kk, n, scenario.radio.pbar, &mut oracle, &config.dual);
    if !outcome.converged {
        warn!("schedule dual search did not converge in {} iterations", outcome.iterations);
    }
    let simple = oracle.simple_primal(&outcome.point);
    let mut best = match oracle.best_primal.take() {
        Some(b) if b.rate > simple.rate => b,
        _ => simple,
    };
    let gap = (outcome.value - best.rate).max(0.0);
    let mut ties = 0;
    if gap > 1e-9 {
        let eta = gap.max(1e-9) / n as f64;
        if let Some((a, t)) = tie_recovery(&oracle, &outcome.point, eta, 48, true) {
            ties = t;
            if a.rate > best.rate {
                best = a;
            }
        }
    }
    if ties > 0 {
        debug!("{ties} slots tied at the dual optimum");
    }
    if outcome.value - best.rate > config.gap_tolerance {
        best = rebalance(scenario, &oracle.dist, mode, &oracle.options, best, REBALANCE_BUDGET);
    }
    Ok(SchedulePower {
        mode,
        antennas: scenario.radio.antennas,
        active: best.active,
        kappa: best.kappa,
        power: best.power,
        sn_rates: best.sn_rates,
        rate: best.rate,
        dual_value: Some(outcome.value),
        nu: outcome.point.lambda,
        phi: outcome.point.mu,
        iterations: outcome.iterations,
        converged: outcome.converged,
        ties,
    })
}

pub fn solve_p3(scenario: &Scenario, trajectory: &[Point]) -> Result<SchedulePower> {
    solve_p3_mode(scenario, trajectory, Mode::Proposed, &ScheduleConfig::default())
}

/// Rates of a fixed schedule on another trajectory, with powers re-filled there.
pub fn reevaluate(scenario: &Scenario, trajectory: &[Point], schedule: &SchedulePower) -> SchedulePower {
    let dists: Vec<Vec<f64>> = trajectory
        .iter()
        .map(|q| (0..scenario.num_sns()).map(|k| scenario.dist_pow(q, k)).collect())
        .collect();
    let refs: Vec<&[f64]> = dists.iter().map(|d| d.as_slice()).collect();
    let a = refill(scenario, &refs, schedule.mode, schedule.active.clone());
    SchedulePower {
        active: a.active,
        kappa: a.kappa,
        power: a.power,
        sn_rates: a.sn_rates,
        rate: a.rate,
        dual_value: None,
        ..schedule.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, MissionTemplate};

    fn scenario(positions: Vec<[f64; 2]>, antennas: usize, horizon: f64) -> Scenario {
        let mut f = generate_scenario(1, 1, 100.0, &MissionTemplate::default()).unwrap().to_file();
        f.sns.positions = positions;
        f.uav.m = antennas;
        f.uav.t = horizon;
        f.uav.q_i = [0.0, 0.0];
        f.uav.q_f = [0.0, 0.0];
        Scenario::from_file(&f).unwrap()
    }

    #[test]
    fn only_weighted_sn_is_served() {
        let s = scenario(vec![[0.0, 0.0], [50.0, 0.0], [0.0, 80.0]], 12, 10.0);
        let d: Vec<f64> = (0..3).map(|k| s.dist_pow(&Point::new(10.0, 10.0), k)).collect();
        let opts = Mode::Proposed.schedule_options(3, 12);
        let sol = per_slot_inner(&d, &[1.0, 0.0, 0.0], &[1e-3; 3], s.slots, &s.radio, &opts);
        assert!(sol.active.iter().all(|&k| k == 0));
    }

    #[test]
    fn equidistant_tie_goes_to_lower_index() {
        let s = scenario(vec![[-100.0, 0.0], [100.0, 0.0]], 12, 10.0);
        let d: Vec<f64> = (0..2).map(|k| s.dist_pow(&Point::new(0.0, 0.0), k)).collect();
        let opts = Mode::Mrc.schedule_options(2, 12);
        let sol = per_slot_inner(&d, &[0.5, 0.5], &[1e-2; 2], s.slots, &s.radio, &opts);
        assert_eq!(sol.active, vec![0]);
    }

    #[test]
    fn symmetric_pair_gets_equal_rates() {
        let s = scenario(vec![[-100.0, 0.0], [100.0, 0.0]], 2, 1.0);
        assert_eq!(s.slots, 2);
        let traj = vec![Point::new(0.0, 0.0); 2];
        let sp = solve_p3(&s, &traj).unwrap();
        assert!((sp.sn_rates[0] - sp.sn_rates[1]).abs() <= 1e-6, "{:?}", sp.sn_rates);
        sp.validate(&s).unwrap();
    }

    #[test]
    fn remainder_rounding_preserves_total() {
        assert_eq!(largest_remainder(&[1.5, 1.5, 2.0], 5), vec![2, 1, 2]);
        assert_eq!(largest_remainder(&[0.2, 0.3, 0.5], 1), vec![0, 0, 1]);
        let r = largest_remainder(&[3.3, 3.3, 3.4], 10);
        assert_eq!(r.iter().sum::<usize>(), 10);
    }
}

