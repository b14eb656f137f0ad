//! Rotary-wing propulsion power and the SN-power / UAV-energy trade-off.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hover::solve_p2_benchmark;
use crate::scenario::Scenario;
use crate::trajectory::{min_time_with_plan, BcdConfig, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropulsionParams {
    /// Blade profile power in hover, W.
    pub p0: f64,
    /// Induced power in hover, W.
    pub pi: f64,
    pub u_tip: f64,
    /// Mean rotor induced velocity in hover, m/s.
    pub v0: f64,
    /// Fuselage drag ratio.
    pub d1: f64,
    /// Rotor solidity.
    pub s: f64,
    pub rho: f64,
    /// Rotor disc area, m^2.
    pub area: f64,
}

impl Default for PropulsionParams {
    fn default() -> Self {
        Self {
            p0: 79.8563,
            pi: 88.6279,
            u_tip: 120.0,
            v0: 4.03,
            d1: 0.6,
            s: 0.05,
            rho: 1.225,
            area: 0.503,
        }
    }
}

pub fn propulsion_power(v: f64, p: &PropulsionParams) -> f64 {
    let v2 = v * v;
    let v04 = p.v0.powi(4);
    let blade = p.p0 * (1.0 + 3.0 * v2 / (p.u_tip * p.u_tip));
    let induced = p.pi * ((1.0 + v2 * v2 / (4.0 * v04)).sqrt() - v2 / (2.0 * p.v0 * p.v0)).sqrt();
    let parasite = 0.5 * p.d1 * p.rho * p.s * p.area * v2 * v;
    blade + induced + parasite
}

/// Energy of flying `trajectory`; the last slot is charged at hover power.
pub fn mission_energy(trajectory: &Trajectory, params: &PropulsionParams) -> f64 {
    if trajectory.is_empty() {
        return 0.0;
    }
    let moving: f64 = trajectory.speeds().iter().map(|&v| propulsion_power(v, params)).sum();
    trajectory.delta * (moving + propulsion_power(0.0, params))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub pbar: f64,
    /// `None` when the demand cannot be met within the time limit.
    pub t_min: Option<f64>,
    pub energy: Option<f64>,
}

impl TradeoffPoint {
    pub fn feasible(&self) -> bool {
        self.t_min.is_some()
    }
}

/// For each average-power limit: the shortest mission delivering `bits` per SN and the
/// propulsion energy it takes.
pub fn power_energy_tradeoff(
    scenario: &Scenario,
    pbars: &[f64],
    bits: f64,
    t_max: f64,
    config: &BcdConfig,
    params: &PropulsionParams,
) -> Result<Vec<TradeoffPoint>> {
    pbars
        .par_iter()
        .map(|&pbar| {
            let s = scenario.with_pbar(pbar)?;
            let plan = solve_p2_benchmark(&s, config.mode, &config.hover)?;
            match min_time_with_plan(&s, &plan, bits, t_max, config) {
                Ok(tp) => Ok(TradeoffPoint {
                    pbar,
                    t_min: Some(tp.t_min),
                    energy: Some(mission_energy(&tp.mission.trajectory, params)),
                }),
                Err(crate::Error::HorizonExceeded { .. }) => Ok(TradeoffPoint {
                    pbar,
                    t_min: None,
                    energy: None,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}
