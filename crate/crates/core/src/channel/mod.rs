//! Rate models.
//!
//! The solvers only ever use [`rate_closed_form`]. The Monte Carlo path in
//! [`monte_carlo`] simulates the Rician channel with ZF/MRC combining and exists to
//! check that approximation independently.

pub mod monte_carlo;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Point, RadioParams, Scenario};

pub use monte_carlo::{
    draw_channel, rate_monte_carlo, zf_beamformers, ArrayPlane, ChannelDraw, LosModel, RateReport, SnRate, UraGeometry,
};

/// One UAV-to-SN link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub uav_xy: Point,
    pub altitude: f64,
    pub sn_xy: Point,
}

impl Link {
    pub fn new(uav_xy: Point, altitude: f64, sn_xy: Point) -> Self {
        Self {
            uav_xy,
            altitude,
            sn_xy,
        }
    }

    pub fn distance_sq(&self) -> f64 {
        self.altitude * self.altitude + (self.uav_xy - self.sn_xy).norm_squared()
    }

    pub fn distance(&self) -> f64 {
        self.distance_sq().sqrt()
    }

    /// `d^alpha`.
    pub fn dist_pow(&self, alpha: f64) -> f64 {
        let d2 = self.distance_sq();
        if alpha == 2.0 {
            d2
        } else {
            d2.powf(alpha / 2.0)
        }
    }
}

/// Multiplexing coefficient for `active` simultaneously scheduled SNs on an
/// `antennas`-element array: `M` for a single SN, `M - K_n` for ZF with two or more.
/// `None` when nothing is scheduled or ZF is infeasible (`K_n >= M`).
pub fn kappa(active: usize, antennas: usize) -> Option<f64> {
    match active {
        0 => None,
        1 => Some(antennas as f64),
        k if k < antennas => Some((antennas - k) as f64),
        _ => None,
    }
}

/// Set of SNs sharing a slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotSchedule {
    pub active: Vec<usize>,
    pub antennas: usize,
}

impl SlotSchedule {
    pub fn new(mut active: Vec<usize>, antennas: usize) -> Result<Self> {
        active.sort_unstable();
        active.dedup();
        if active.len() >= 2 && active.len() >= antennas {
            return Err(Error::Invariant {
                field: format!("schedule ({} SNs on {} antennas)", active.len(), antennas),
            });
        }
        Ok(Self { active, antennas })
    }

    pub fn kappa(&self) -> Option<f64> {
        kappa(self.active.len(), self.antennas)
    }
}

/// Approximate ergodic rate in bps/Hz:
/// `log2(1 + kappa p gamma0 / d^alpha)`.
pub fn rate_closed_form(link: &Link, power: f64, kappa: f64, radio: &RadioParams) -> f64 {
    debug_assert!(power >= 0.0 && kappa >= 1.0);
    if power <= 0.0 {
        return 0.0;
    }
    let snr = kappa * power * radio.gamma0 / link.dist_pow(radio.alpha);
    snr.ln_1p() / std::f64::consts::LN_2
}

/// Per-SN average rate `(1/N) sum_n r_k[n]` for a full schedule.
///
/// `active[n][k]` marks SN k as scheduled in slot n; `power[n][k]` is its transmit power.
pub fn mission_rates(
    scenario: &Scenario,
    trajectory: &[Point],
    active: &[Vec<bool>],
    power: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let n = trajectory.len();
    let k = scenario.num_sns();
    if active.len() != n || power.len() != n {
        return Err(Error::Dimension(format!(
            "trajectory has {n} slots, schedule {} and power {}",
            active.len(),
            power.len()
        )));
    }
    let mut acc = vec![0.0; k];
    for (slot, (q, (a, p))) in trajectory.iter().zip(active.iter().zip(power)).enumerate() {
        if a.len() != k || p.len() != k {
            return Err(Error::Dimension(format!("slot {slot} does not cover {k} SNs")));
        }
        let count = a.iter().filter(|&&x| x).count();
        if p.iter().zip(a).any(|(&pw, &on)| pw > 0.0 && !on) {
            return Err(Error::Dimension(format!(
                "slot {slot} assigns power to an unscheduled SN"
            )));
        }
        let Some(kap) = kappa(count, scenario.radio.antennas) else {
            if count > 0 {
                return Err(Error::Invariant {
                    field: format!("slot {slot} schedules {count} SNs"),
                });
            }
            continue;
        };
        for sn in (0..k).filter(|&sn| a[sn]) {
            let link = Link::new(*q, scenario.altitude, scenario.sns[sn]);
            acc[sn] += rate_closed_form(&link, p[sn], kap, &scenario.radio);
        }
    }
    Ok(acc.into_iter().map(|r| r / n as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, MissionTemplate};

    fn baseline() -> Scenario {
        generate_scenario(11, 2, 1000.0, &MissionTemplate::default()).unwrap()
    }

    #[test]
    fn closed_form_hand_values() {
        let s = baseline();
        let link = Link::new(Point::new(0.0, 0.0), 130.0, Point::new(0.0, 0.0));
        assert_eq!(rate_closed_form(&link, 0.0, 1.0, &s.radio), 0.0);
        // log2(1 + 0.01 * 10^7.4 / 16900)
        let mrc1 = rate_closed_form(&link, 0.01, 1.0, &s.radio);
        let expect1 = (1.0 + 0.01 * 10f64.powf(7.4) / 16900.0).log2();
        assert!((mrc1 - expect1).abs() < 1e-12);
        assert!((mrc1 - 3.99).abs() < 0.01);
        let mrc12 = rate_closed_form(&link, 0.01, 12.0, &s.radio);
        assert!((mrc12 - 7.49).abs() < 0.01);
    }

    #[test]
    fn kappa_rule() {
        assert_eq!(kappa(0, 12), None);
        assert_eq!(kappa(1, 12), Some(12.0));
        assert_eq!(kappa(2, 12), Some(10.0));
        assert_eq!(kappa(11, 12), Some(1.0));
        assert_eq!(kappa(12, 12), None);
        assert_eq!(kappa(1, 1), Some(1.0));
        assert!(SlotSchedule::new(vec![0, 1], 2).is_err());
    }

    #[test]
    fn mission_rates_cases() {
        let s = baseline().with_horizon(2.0).unwrap();
        let traj = vec![s.sns[0]; s.slots];
        let idle = vec![vec![false; 2]; s.slots];
        let zero = vec![vec![0.0; 2]; s.slots];
        assert_eq!(mission_rates(&s, &traj, &idle, &zero).unwrap(), vec![0.0, 0.0]);

        let mut a = idle.clone();
        let mut p = zero.clone();
        a[0][0] = true;
        p[0][0] = 0.01;
        let r = mission_rates(&s, &traj, &a, &p).unwrap();
        let link = Link::new(traj[0], s.altitude, s.sns[0]);
        let single = rate_closed_form(&link, 0.01, s.radio.antennas as f64, &s.radio);
        assert!((r[0] - single / s.slots as f64).abs() < 1e-12);
        assert_eq!(r[1], 0.0);

        assert!(mission_rates(&s, &traj[..1], &a, &p).is_err());
        let mut bad = zero;
        bad[1][1] = 0.01;
        assert!(mission_rates(&s, &traj, &idle, &bad).is_err());
    }

    #[test]
    fn round_robin_symmetric() {
        let mut file = baseline().to_file();
        file.sns.positions = vec![[-100.0, 0.0], [100.0, 0.0]];
        file.uav.t = 2.0;
        let s = Scenario::from_file(&file).unwrap();
        let traj = vec![Point::new(0.0, 0.0); 4];
        let a: Vec<Vec<bool>> = (0..4).map(|n| vec![n % 2 == 0, n % 2 == 1]).collect();
        let p: Vec<Vec<f64>> = a
            .iter()
            .map(|row| row.iter().map(|&on| if on { 0.01 } else { 0.0 }).collect())
            .collect();
        let r = mission_rates(&s, &traj, &a, &p).unwrap();
        assert!((r[0] - r[1]).abs() < 1e-15);
    }
}
