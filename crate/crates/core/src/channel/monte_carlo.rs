//! Monte Carlo oracle for the closed-form rate.
//!
//! Each draw builds `H = [sqrt(beta_k) g_k]` with Rician `g_k` (LoS steering vector of a
//! uniform rectangular array plus i.i.d. CN(0, I) scatter), then evaluates the
//! ZF post-processing SNR `p_k / ([(H^H H)^-1]_kk sigma^2)` for two or more SNs, or the MRC
//! SNR `p ||h||^2 / sigma^2` for a single SN. Every draw owns a ChaCha stream keyed by
//! `(seed, draw index)`, so results do not depend on the thread count.

use std::f64::consts::{LN_2, PI};

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kappa, rate_closed_form, Link};
use crate::error::{Error, Result};
use crate::scenario::RadioParams;

type C64 = Complex<f64>;

const MAX_CONSECUTIVE_REDRAWS: usize = 8;

/// Plane holding the array elements; rows run along the first axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrayPlane {
    Horizontal,
    VerticalXZ,
    VerticalYZ,
}

/// How the LoS phases of each draw are produced. The closed form assumes the LoS
/// components of different SNs are independent, which a fixed geometric steering vector
/// does not give when SNs sit in similar directions; the default keeps the array response
/// but draws the direction independently per SN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LosModel {
    /// Far-field steering vector toward the SN.
    Geometric,
    /// Steering vector toward a uniformly random direction, drawn per SN and per draw.
    RandomDirection,
    /// i.i.d. uniform phase per element, per SN and per draw.
    RandomPhase,
}

/// Uniform rectangular array, `per_row` elements per row, rows filled in order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UraGeometry {
    pub per_row: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    pub plane: ArrayPlane,
    pub los: LosModel,
}

impl Default for UraGeometry {
    fn default() -> Self {
        Self {
            per_row: 4,
            spacing: 0.5,
            plane: ArrayPlane::Horizontal,
            los: LosModel::RandomDirection,
        }
    }
}

impl UraGeometry {
    /// Element coordinates in wavelengths.
    pub fn element_positions(&self, antennas: usize) -> Vec<(f64, f64)> {
        (0..antennas)
            .map(|m| {
                let col = (m % self.per_row) as f64;
                let row = (m / self.per_row) as f64;
                (col * self.spacing, row * self.spacing)
            })
            .collect()
    }

    /// Far-field LoS phases toward the SN of `link`.
    pub fn los_phases(&self, antennas: usize, link: &Link) -> Vec<f64> {
        let d = link.distance();
        let ux = (link.sn_xy.x - link.uav_xy.x) / d;
        let uy = (link.sn_xy.y - link.uav_xy.y) / d;
        let uz = -link.altitude / d;
        self.phases_toward(antennas, ux, uy, uz)
    }

    /// Far-field phases for the unit direction `(ux, uy, uz)`.
    pub fn phases_toward(&self, antennas: usize, ux: f64, uy: f64, uz: f64) -> Vec<f64> {
        let (u1, u2) = match self.plane {
            ArrayPlane::Horizontal => (ux, uy),
            ArrayPlane::VerticalXZ => (ux, uz),
            ArrayPlane::VerticalYZ => (uy, uz),
        };
        self.element_positions(antennas)
            .into_iter()
            .map(|(a, b)| 2.0 * PI * (a * u1 + b * u2))
            .collect()
    }
}

/// One realization of the active SNs' channels.
#[derive(Debug, Clone)]
pub struct ChannelDraw {
    /// Small-scale fading, `M x K_n`, column k is `g_k`.
    pub g: DMatrix<C64>,
    /// Full channel, column k is `sqrt(beta_k) g_k`.
    pub h: DMatrix<C64>,
}

pub fn draw_channel(
    links: &[Link],
    radio: &RadioParams,
    geometry: &UraGeometry,
    rng: &mut ChaCha8Rng,
) -> ChannelDraw {
    let m = radio.antennas;
    let g_factor = radio.rician_g;
    let los_w = (g_factor / (g_factor + 1.0)).sqrt();
    let nlos_w = (1.0 / (g_factor + 1.0)).sqrt();
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = DMatrix::<C64>::zeros(m, links.len());
    let mut h = DMatrix::<C64>::zeros(m, links.len());
    for (col, link) in links.iter().enumerate() {
        let phases = match geometry.los {
            LosModel::Geometric => geometry.los_phases(m, link),
            LosModel::RandomDirection => {
                let az = rng.gen_range(0.0..2.0 * PI);
                let cos_el: f64 = rng.gen_range(-1.0..1.0);
                let sin_el = (1.0 - cos_el * cos_el).sqrt();
                geometry.phases_toward(m, sin_el * az.cos(), sin_el * az.sin(), cos_el)
            }
            LosModel::RandomPhase => (0..m).map(|_| rng.gen_range(0.0..2.0 * PI)).collect(),
        };
        let beta = radio.beta0 / link.dist_pow(radio.alpha);
        for (row, theta) in phases.into_iter().enumerate() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let scatter = C64::new(re * half, im * half);
            let los = C64::from_polar(1.0, theta);
            let entry = los * los_w + scatter * nlos_w;
            g[(row, col)] = entry;
            h[(row, col)] = entry * beta.sqrt();
        }
    }
    ChannelDraw { g, h }
}

/// Unit-norm ZF combiners `w_k = wbar_k / ||wbar_k||`, `Wbar = H (H^H H)^-1`.
/// `None` when the Gram matrix does not factor.
pub fn zf_beamformers(h: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    let gram = h.adjoint() * h;
    let inv = gram.cholesky()?.inverse();
    let mut w = h * inv;
    for mut col in w.column_iter_mut() {
        let n = col.norm();
        col /= C64::new(n, 0.0);
    }
    Some(w)
}

/// Post-combining SNR per active SN, or `None` if the Gram matrix is singular.
fn draw_snrs(draw: &ChannelDraw, powers: &[f64], sigma2: f64) -> Option<Vec<f64>> {
    let h = &draw.h;
    if h.ncols() == 1 {
        let gain = h.column(0).norm_squared();
        return Some(vec![powers[0] * gain / sigma2]);
    }
    let gram = h.adjoint() * h;
    let inv = gram.cholesky()?.inverse();
    let snrs = (0..h.ncols())
        .map(|k| {
            let diag = inv[(k, k)].re;
            powers[k] / (diag * sigma2)
        })
        .collect::<Vec<_>>();
    if snrs.iter().all(|s| s.is_finite() && *s >= 0.0) {
        Some(snrs)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnRate {
    pub closed_form: f64,
    pub mc_mean: f64,
    /// Standard error of `mc_mean`.
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rates: Vec<SnRate>,
    pub draws: usize,
    /// Draws that had to be repeated because the Gram matrix failed to factor.
    pub redraws: usize,
}

/// Sample mean and standard error of the per-slot rate of every link in `links`,
/// all served in the same slot with transmit powers `powers`.
pub fn rate_monte_carlo(
    links: &[Link],
    powers: &[f64],
    radio: &RadioParams,
    geometry: &UraGeometry,
    n_draws: usize,
    seed: u64,
) -> Result<RateReport> {
    let kn = links.len();
    if kn == 0 || powers.len() != kn {
        return Err(Error::Dimension(format!(
            "{kn} links with {} powers",
            powers.len()
        )));
    }
    let Some(kap) = kappa(kn, radio.antennas) else {
        return Err(Error::Invariant {
            field: format!("{kn} SNs cannot be zero-forced with {} antennas", radio.antennas),
        });
    };
    if n_draws < 2 {
        return Err(Error::Invariant {
            field: "n_draws".into(),
        });
    }

    let per_draw: Vec<Result<(Vec<f64>, usize)>> = (0..n_draws)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let mut redraws = 0;
            loop {
                let draw = draw_channel(links, radio, geometry, &mut rng);
                if let Some(snrs) = draw_snrs(&draw, powers, radio.sigma2) {
                    let rates = snrs.iter().map(|s| s.ln_1p() / LN_2).collect();
                    return Ok((rates, redraws));
                }
                redraws += 1;
                if redraws >= MAX_CONSECUTIVE_REDRAWS {
                    return Err(Error::SingularGram(redraws));
                }
            }
        })
        .collect();

    let mut sum = vec![0.0; kn];
    let mut sum_sq = vec![0.0; kn];
    let mut redraws = 0;
    for item in per_draw {
        let (rates, extra) = item?;
        redraws += extra;
        for (k, r) in rates.into_iter().enumerate() {
            sum[k] += r;
            sum_sq[k] += r * r;
        }
    }
    let n = n_draws as f64;
    let rates = (0..kn)
        .map(|k| {
            let mean = sum[k] / n;
            let var = ((sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0);
            SnRate {
                closed_form: rate_closed_form(&links[k], powers[k], kap, radio),
                mc_mean: mean,
                mc_se: (var / n).sqrt(),
            }
        })
        .collect();
    Ok(RateReport {
        rates,
        draws: n_draws,
        redraws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Point, RadioParams};

    fn radio(m: usize, g: f64) -> RadioParams {
        RadioParams::from_primitives(-60.0, 2.0, g, 1e5, -154.0, 0.01, m).unwrap()
    }

    fn links(n: usize) -> Vec<Link> {
        let sns = [
            Point::new(150.0, 40.0),
            Point::new(-120.0, 200.0),
            Point::new(60.0, -260.0),
        ];
        sns[..n]
            .iter()
            .map(|&p| Link::new(Point::new(0.0, 0.0), 130.0, p))
            .collect()
    }

    fn norm_sq_samples(g: f64, m: usize, draws: usize) -> Vec<f64> {
        let r = radio(m, g);
        let l = links(1);
        (0..draws)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(5);
                rng.set_stream(i as u64);
                draw_channel(&l, &r, &UraGeometry::default(), &mut rng)
                    .g
                    .column(0)
                    .norm_squared()
            })
            .collect()
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn pure_los_has_no_spread() {
        let xs = norm_sq_samples(1e9, 12, 500);
        let (mean, var) = mean_var(&xs);
        assert!((mean / 12.0 - 1.0).abs() < 1e-4);
        assert!(var < 1e-6);
    }

    #[test]
    fn per_antenna_power_normalized() {
        for (g, m) in [(0.0, 12), (0.94, 12), (0.94, 4)] {
            let xs: Vec<f64> = norm_sq_samples(g, m, 10_000)
                .into_iter()
                .map(|x| x / m as f64)
                .collect();
            let (mean, var) = mean_var(&xs);
            let se = (var / xs.len() as f64).sqrt();
            assert!((mean - 1.0).abs() <= 3.0 * se, "G={g} M={m}: {mean} +- {se}");
        }
    }

    #[test]
    fn zf_nulls_interference() {
        let r = radio(12, 0.94);
        let l = links(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let d = draw_channel(&l, &r, &UraGeometry::default(), &mut rng);
            let w = zf_beamformers(&d.h).unwrap();
            // compare against the per-column gain so the check is scale free
            for k in 0..3 {
                assert!((w.column(k).norm() - 1.0).abs() < 1e-12);
                let own = (w.column(k).adjoint() * d.h.column(k))[(0, 0)].norm();
                for j in (0..3).filter(|&j| j != k) {
                    let leak = (w.column(k).adjoint() * d.h.column(j))[(0, 0)].norm();
                    assert!(leak <= 1e-9 * own.max(d.h.column(j).norm()));
                }
            }
        }
    }

    #[test]
    fn deterministic_channel_matches_closed_form() {
        let r = radio(12, 1e9);
        let l = links(1);
        let rep = rate_monte_carlo(&l, &[0.01], &r, &UraGeometry::default(), 1000, 3).unwrap();
        let s = &rep.rates[0];
        assert!((s.mc_mean - s.closed_form).abs() / s.closed_form < 1e-6);
    }

    #[test]
    fn zf_closed_form_is_lower_bound() {
        let r = radio(12, 0.94);
        let l = links(2);
        let rep =
            rate_monte_carlo(&l, &[0.01, 0.01], &r, &UraGeometry::default(), 10_000, 1).unwrap();
        for s in &rep.rates {
            assert!(s.closed_form <= s.mc_mean + 3.0 * s.mc_se, "{s:?}");
        }
    }

    #[test]
    fn zf_gap_small_for_large_arrays() {
        let r = radio(20, 0.94);
        let l = links(3);
        let rep = rate_monte_carlo(&l, &[0.01; 3], &r, &UraGeometry::default(), 2000, 4).unwrap();
        for s in &rep.rates {
            assert!((s.mc_mean - s.closed_form).abs() / s.mc_mean <= 0.05, "{s:?}");
        }
    }

    #[test]
    fn seeded_runs_reproduce_bitwise() {
        let r = radio(12, 0.94);
        let l = links(3);
        let a = rate_monte_carlo(&l, &[0.01; 3], &r, &UraGeometry::default(), 300, 8).unwrap();
        let b = rate_monte_carlo(&l, &[0.01; 3], &r, &UraGeometry::default(), 300, 8).unwrap();
        assert_eq!(a, b);
    }

    /// Normalized LoS correlation `|g1^H g2| / M` between two SNs in the same direction.
    fn same_direction_correlation(los: LosModel) -> f64 {
        let r = radio(12, 1e9);
        let uav = Point::new(0.0, 0.0);
        let l = [Link::new(uav, 100.0, Point::new(300.0, 0.0)), Link::new(uav, 100.0, Point::new(600.0, 0.0))];
        let geometry = UraGeometry { los, ..UraGeometry::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 400;
        (0..draws)
            .map(|_| {
                let g = draw_channel(&l, &r, &geometry, &mut rng).g;
                (g.column(0).adjoint() * g.column(1))[(0, 0)].norm() / 12.0
            })
            .sum::<f64>()
            / draws as f64
    }

    #[test]
    fn random_direction_decorrelates_los() {
        // same azimuth, different elevation: geometric steering vectors stay aligned
        assert!(same_direction_correlation(LosModel::Geometric) > 0.5);
        assert!(same_direction_correlation(LosModel::RandomDirection) < 0.4);
        assert!(same_direction_correlation(LosModel::RandomPhase) < 0.4);
    }

    #[test]
    fn geometric_phases_follow_planar_wavefront() {
        let geometry = UraGeometry::default();
        let link = Link::new(Point::new(0.0, 0.0), 100.0, Point::new(300.0, 400.0));
        let d = link.distance();
        let phases = geometry.los_phases(8, &link);
        for (m, theta) in phases.iter().enumerate() {
            let (x, y) = ((m % 4) as f64 * 0.5, (m / 4) as f64 * 0.5);
            let expect = 2.0 * PI * (x * 300.0 + y * 400.0) / d;
            assert!((theta - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn zf_infeasible_rejected() {
        let r = radio(2, 0.94);
        assert!(rate_monte_carlo(&links(2), &[0.01; 2], &r, &UraGeometry::default(), 10, 0).is_err());
    }
}
