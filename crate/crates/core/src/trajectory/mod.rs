//! Full mission: hover plan, tour, initial trajectory, then alternating
//! schedule/power and trajectory updates.

mod init;
pub mod tour;

use std::fmt::Write as _;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hover::{solve_p2_benchmark, HoverConfig, HoverPlan};
use crate::opt_kernels::dual::Mode;
use crate::opt_kernels::sca::{sca_solve, ScaSubproblem};
use crate::scenario::{Point, Scenario};
use crate::schedule::{reevaluate, solve_p3_mode, ScheduleConfig, SchedulePower};

pub use init::{apportion, initial_trajectory};
pub use tour::{tsp_order, TourPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<Point>,
    pub altitude: f64,
    /// Slot length, s.
    pub delta: f64,
}

impl Trajectory {
    pub fn new(points: Vec<Point>, scenario: &Scenario) -> Self {
        Self {
            points,
            altitude: scenario.altitude,
            delta: scenario.delta,
        }
    }

    /// Hovering at `q` for all slots.
    pub fn stationary(q: Point, scenario: &Scenario) -> Self {
        Self::new(vec![q; scenario.slots], scenario)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Horizontal speed between consecutive slots, m/s (`N - 1` values).
    pub fn speeds(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm() / self.delta).collect()
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.len() != scenario.slots {
            return Err(Error::Dimension(format!(
                "trajectory has {} slots, scenario {}",
                self.len(),
                scenario.slots
            )));
        }
        let cap = scenario.step_cap() + 1e-9;
        for (n, w) in self.points.windows(2).enumerate() {
            if (w[1] - w[0]).norm() > cap {
                return Err(Error::Invariant {
                    field: format!("speed between slots {n} and {}", n + 1),
                });
            }
        }
        if (self.points[0] - scenario.q_init).norm() > 1e-9 {
            return Err(Error::Invariant { field: "q[1]".into() });
        }
        if (self.points[self.len() - 1] - scenario.q_final).norm() > 1e-9 {
            return Err(Error::Invariant { field: "q[N]".into() });
        }
        Ok(())
    }

    /// One row per slot: `slot,x_m,y_m`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("slot,x_m,y_m\n");
        for (n, q) in self.points.iter().enumerate() {
            let _ = writeln!(s, "{n},{},{}", q.x, q.y);
        }
        s
    }

    pub fn from_csv(text: &str, scenario: &Scenario) -> Result<Self> {
        let mut points = Vec::new();
        for (line_no, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Parse(format!("trajectory line {}", line_no + 1));
            if cols.len() != 3 {
                return Err(bad());
            }
            let x: f64 = cols[1].parse().map_err(|_| bad())?;
            let y: f64 = cols[2].parse().map_err(|_| bad())?;
            points.push(Point::new(x, y));
        }
        let t = Self::new(points, scenario);
        t.validate(scenario)?;
        Ok(t)
    }
}

/// Distinct hover locations of a plan with their total dwell time (order of first use).
pub fn hover_sites(plan: &HoverPlan) -> (Vec<Point>, Vec<f64>) {
    let mut index: Vec<usize> = Vec::new();
    let mut points = Vec::new();
    let mut dwell = Vec::new();
    for p in plan.points.iter().filter(|p| p.duration > 0.0) {
        match index.iter().position(|&g| g == p.grid_index) {
            Some(i) => dwell[i] += p.duration,
            None => {
                index.push(p.grid_index);
                points.push(Point::new(p.location[0], p.location[1]));
                dwell.push(p.duration);
            }
        }
    }
    (points, dwell)
}

/// One trajectory update for a fixed schedule and powers.
pub fn sca_step(scenario: &Scenario, trajectory: &Trajectory, schedule: &SchedulePower, tolerance: f64) -> Result<Trajectory> {
    let gamma0 = scenario.radio.gamma0;
    let eps: Vec<Vec<f64>> = schedule
        .power
        .iter()
        .zip(&schedule.kappa)
        .map(|(row, &kap)| row.iter().map(|p| kap * p * gamma0).collect())
        .collect();
    let sub = ScaSubproblem::new(
        trajectory.points.clone(),
        scenario.sns.clone(),
        scenario.altitude,
        scenario.radio.alpha,
        eps,
        scenario.step_cap(),
    )?;
    let sol = sca_solve(&sub, tolerance)?;
    Ok(Trajectory::new(sol.trajectory, scenario))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcdConfig {
    pub mode: Mode,
    /// Stop when an iteration improves the rate by at most this (bps/Hz).
    pub tolerance: f64,
    pub max_iters: usize,
    pub sca_tolerance: f64,
    pub hover: HoverConfig,
    pub schedule: ScheduleConfig,
}

impl Default for BcdConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Proposed,
            tolerance: 1e-3,
            max_iters: 30,
            sca_tolerance: 1e-7,
            hover: HoverConfig::default(),
            schedule: ScheduleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    pub mode: Mode,
    pub trajectory: Trajectory,
    pub schedule: SchedulePower,
    pub rate: f64,
    pub sn_rates: Vec<f64>,
    /// Best rate after each iteration.
    pub trace: Vec<f64>,
    /// Max-min rate of the hover plan.
    pub upper_bound: f64,
    pub tour: TourPlan,
    pub iterations: usize,
    pub converged: bool,
}

pub fn solve_p1(scenario: &Scenario, config: &BcdConfig) -> Result<MissionPlan> {
    let plan = solve_p2_benchmark(scenario, config.mode, &config.hover)?;
    solve_p1_with_plan(scenario, &plan, config)
}

pub fn solve_p1_with_plan(scenario: &Scenario, plan: &HoverPlan, config: &BcdConfig) -> Result<MissionPlan> {
    let (sites, dwell) = hover_sites(plan);
    let tour = tsp_order(&sites, scenario.q_init, scenario.q_final, scenario.v_max).with_dwell(scenario.horizon, &dwell);
    let start = initial_trajectory(scenario, &tour)?;
    start.validate(scenario)?;
    let schedule = solve_p3_mode(scenario, &start.points, config.mode, &config.schedule)?;
    bcd(scenario, plan.rate, tour, start, schedule, config)
}

/// Alternation from a given trajectory and schedule; the incumbent only changes when the
/// rate improves, so the trace is non-decreasing.
fn bcd(
    scenario: &Scenario,
    upper_bound: f64,
    tour: TourPlan,
    trajectory: Trajectory,
    schedule: SchedulePower,
    config: &BcdConfig,
) -> Result<MissionPlan> {
    let mut best = (trajectory, schedule);
    let mut trace = vec![best.1.rate];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let before = best.1.rate;
        let moved = match sca_step(scenario, &best.0, &best.1, config.sca_tolerance) {
            Ok(t) => t,
            Err(e) => {
                warn!("trajectory update failed: {e}");
                break;
            }
        };
        let carried = reevaluate(scenario, &moved.points, &best.1);
        if carried.rate > best.1.rate {
            best = (moved.clone(), carried);
        }
        let fresh = solve_p3_mode(scenario, &moved.points, config.mode, &config.schedule)?;
        if fresh.rate > best.1.rate {
            best = (moved, fresh);
        }
        trace.push(best.1.rate);
        debug!("iteration {iterations}: r = {:.6}", best.1.rate);
        if best.1.rate - before <= config.tolerance {
            converged = true;
            break;
        }
    }
    let (trajectory, schedule) = best;
    trajectory.validate(scenario)?;
    Ok(MissionPlan {
        mode: config.mode,
        rate: schedule.rate,
        sn_rates: schedule.sn_rates.clone(),
        trajectory,
        schedule,
        trace,
        upper_bound,
        tour,
        iterations,
        converged,
    })
}

/// Restarts the alternation from an existing plan.
pub fn resume_p1(scenario: &Scenario, plan: &MissionPlan, config: &BcdConfig) -> Result<MissionPlan> {
    bcd(
        scenario,
        plan.upper_bound,
        plan.tour.clone(),
        plan.trajectory.clone(),
        plan.schedule.clone(),
        config,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputPlan {
    /// Smallest mission time meeting the demand, s.
    pub t_min: f64,
    pub mission: MissionPlan,
}

/// Shortest slot-quantized mission in which every SN delivers `bits`.
pub fn min_time_for_throughput(scenario: &Scenario, bits: f64, t_max: f64, config: &BcdConfig) -> Result<ThroughputPlan> {
    if !(bits > 0.0) {
        return Err(Error::Invariant { field: "throughput".into() });
    }
    let plan = solve_p2_benchmark(scenario, config.mode, &config.hover)?;
    min_time_with_plan(scenario, &plan, bits, t_max, config)
}

pub fn min_time_with_plan(
    scenario: &Scenario,
    plan: &HoverPlan,
    bits: f64,
    t_max: f64,
    config: &BcdConfig,
) -> Result<ThroughputPlan> {
    let delta = scenario.delta;
    let bandwidth = scenario.radio.bandwidth_hz;
    let n_max = (t_max / delta).floor() as usize;
    let connect = (scenario.q_final - scenario.q_init).norm();
    let n_min = ((connect / scenario.step_cap() - 1e-12).ceil().max(0.0) as usize + 1).max(2);
    if n_min > n_max {
        return Err(Error::HorizonExceeded { t_max });
    }
    let attempt = |n: usize| -> Result<Option<MissionPlan>> {
        let s = scenario.with_slots(n)?;
        let mission = solve_p1_with_plan(&s, &plan.rescaled(s.horizon), config)?;
        let delivered = mission.rate * bandwidth * s.horizon;
        debug!("T = {:.1} s: r = {:.4}, {delivered:.3e} bits", s.horizon, mission.rate);
        Ok((delivered >= bits).then_some(mission))
    };
    // bracket: grow from the connect time
    let mut lo = n_min - 1;
    let mut hi = n_min;
    let mut found = loop {
        if let Some(m) = attempt(hi)? {
            break m;
        }
        if hi >= n_max {
            return Err(Error::HorizonExceeded { t_max });
        }
        lo = hi;
        hi = (hi * 2).min(n_max);
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match attempt(mid)? {
            Some(m) => {
                hi = mid;
                found = m;
            }
            None => lo = mid,
        }
    }
    Ok(ThroughputPlan {
        t_min: hi as f64 * delta,
        mission: found,
    })
}
