//! Problem description shared by every solver.
//!
//! A [`Scenario`] is built from a [`ScenarioFile`] (the on-disk TOML layout) and is
//! immutable afterwards. Decibel inputs are converted to linear units once, here;
//! nothing downstream ever sees dB or dBm.
//!
//! ```toml
//! [sns]
//! positions = [[120.0, 40.0], [800.0, 910.0]]
//!
//! [uav]
//! H_min = 130.0
//! v_h = 20.0
//! delta = 0.5
//! T = 100.0
//! q_I = [400.0, 0.0]
//! q_F = [1000.0, 500.0]
//! M = 12
//!
//! [radio]
//! beta0_db = -60.0
//! alpha = 2.0
//! rician_G = 0.94
//! bandwidth_hz = 100000.0
//! noise_psd_dbm_hz = -154.0
//! pbar_w = 0.01
//!
//! [grid]
//! delta_g = 20.0
//! ```

use std::fs;
use std::path::Path;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invariant, Error, Result};

pub type Point = Vector2<f64>;

/// Radio parameters in linear units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub beta0_db: f64,
    /// Power gain at the 1 m reference distance.
    pub beta0: f64,
    pub alpha: f64,
    pub rician_g: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    /// Receiver noise power in W.
    pub sigma2: f64,
    /// Reference SNR `beta0 / sigma2`.
    pub gamma0: f64,
    /// Average transmit power limit of every SN, W.
    pub pbar: f64,
    pub antennas: usize,
}

impl RadioParams {
    pub fn from_primitives(
        beta0_db: f64,
        alpha: f64,
        rician_g: f64,
        bandwidth_hz: f64,
        noise_psd_dbm_hz: f64,
        pbar: f64,
        antennas: usize,
    ) -> Result<Self> {
        check_finite("beta0_db", beta0_db)?;
        check_finite("noise_psd_dbm_hz", noise_psd_dbm_hz)?;
        if !(alpha.is_finite() && alpha >= 2.0) {
            return Err(invariant("alpha"));
        }
        if !(rician_g.is_finite() && rician_g >= 0.0) {
            return Err(invariant("rician_G"));
        }
        if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
            return Err(invariant("bandwidth_hz"));
        }
        if !(pbar.is_finite() && pbar > 0.0) {
            return Err(invariant("pbar_w"));
        }
        if antennas < 1 {
            return Err(invariant("M"));
        }
        let beta0 = db_to_linear(beta0_db);
        let sigma2 = dbm_to_watt(noise_psd_dbm_hz + 10.0 * bandwidth_hz.log10());
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(invariant("sigma2"));
        }
        Ok(Self {
            beta0_db,
            beta0,
            alpha,
            rician_g,
            bandwidth_hz,
            noise_psd_dbm_hz,
            sigma2,
            gamma0: beta0 / sigma2,
            pbar,
            antennas,
        })
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn check_finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invariant(field))
    }
}

/// Validated problem instance. Construct through [`Scenario::from_file`],
/// [`load_scenario`] or [`generate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sns: Vec<Point>,
    /// Flight altitude `H_min`, m.
    pub altitude: f64,
    pub q_init: Point,
    pub q_final: Point,
    /// Maximum horizontal speed, m/s.
    pub v_max: f64,
    /// Slot length, s.
    pub delta: f64,
    /// Mission duration `T`, s.
    pub horizon: f64,
    /// Slot count `N = round(T / delta)`.
    pub slots: usize,
    pub radio: RadioParams,
    /// 2D search granularity, m.
    pub grid_step: f64,
}

impl Scenario {
    pub fn num_sns(&self) -> usize {
        self.sns.len()
    }

    /// Per-slot displacement cap `V_h = v_h * delta`.
    pub fn step_cap(&self) -> f64 {
        self.v_max * self.delta
    }

    pub fn from_file(file: &ScenarioFile) -> Result<Self> {
        let sns: Vec<Point> = file
            .sns
            .positions
            .iter()
            .map(|p| Point::new(p[0], p[1]))
            .collect();
        if sns.is_empty() {
            return Err(invariant("sns"));
        }
        if sns.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(invariant("sns"));
        }
        for i in 0..sns.len() {
            for j in i + 1..sns.len() {
                if sns[i] == sns[j] {
                    return Err(invariant(format!("sns (SN {i} and SN {j} coincide)")));
                }
            }
        }
        let uav = &file.uav;
        if !(uav.h_min.is_finite() && uav.h_min > 0.0) {
            return Err(invariant("H_min"));
        }
        if !(uav.v_h.is_finite() && uav.v_h > 0.0) {
            return Err(invariant("v_h"));
        }
        if !(uav.delta.is_finite() && uav.delta > 0.0) {
            return Err(invariant("delta"));
        }
        if !(uav.t.is_finite() && uav.t > 0.0) {
            return Err(invariant("T"));
        }
        for (name, q) in [("q_I", uav.q_i), ("q_F", uav.q_f)] {
            if !(q[0].is_finite() && q[1].is_finite()) {
                return Err(invariant(name));
            }
        }
        let slots = (uav.t / uav.delta).round();
        if slots < 1.0 || (slots * uav.delta - uav.t).abs() > uav.delta / 2.0 {
            return Err(invariant("T"));
        }
        let r = &file.radio;
        let radio = RadioParams::from_primitives(
            r.beta0_db,
            r.alpha,
            r.rician_g,
            r.bandwidth_hz,
            r.noise_psd_dbm_hz,
            r.pbar_w,
            uav.m,
        )?;
        if !(file.grid.delta_g.is_finite() && file.grid.delta_g > 0.0) {
            return Err(invariant("delta_g"));
        }
        Ok(Self {
            sns,
            altitude: uav.h_min,
            q_init: Point::new(uav.q_i[0], uav.q_i[1]),
            q_final: Point::new(uav.q_f[0], uav.q_f[1]),
            v_max: uav.v_h,
            delta: uav.delta,
            horizon: uav.t,
            slots: slots as usize,
            radio,
            grid_step: file.grid.delta_g,
        })
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            sns: SnSection {
                positions: self.sns.iter().map(|p| [p.x, p.y]).collect(),
            },
            uav: self.uav_section(),
            radio: RadioSection {
                beta0_db: self.radio.beta0_db,
                alpha: self.radio.alpha,
                rician_g: self.radio.rician_g,
                bandwidth_hz: self.radio.bandwidth_hz,
                noise_psd_dbm_hz: self.radio.noise_psd_dbm_hz,
                pbar_w: self.radio.pbar,
            },
            grid: GridSection {
                delta_g: self.grid_step,
            },
        }
    }

    fn uav_section(&self) -> UavSection {
        UavSection {
            h_min: self.altitude,
            v_h: self.v_max,
            delta: self.delta,
            t: self.horizon,
            q_i: [self.q_init.x, self.q_init.y],
            q_f: [self.q_final.x, self.q_final.y],
            m: self.radio.antennas,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("scenario serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn rebuild(&self, edit: impl FnOnce(&mut ScenarioFile)) -> Result<Self> {
        let mut file = self.to_file();
        edit(&mut file);
        Self::from_file(&file)
    }

    /// Same scenario with mission duration `horizon` (N re-derived).
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        self.rebuild(|f| f.uav.t = horizon)
    }

    pub fn with_slots(&self, slots: usize) -> Result<Self> {
        let delta = self.delta;
        self.rebuild(|f| f.uav.t = slots as f64 * delta)
    }

    pub fn with_antennas(&self, antennas: usize) -> Result<Self> {
        self.rebuild(|f| f.uav.m = antennas)
    }

    pub fn with_pbar(&self, pbar: f64) -> Result<Self> {
        self.rebuild(|f| f.radio.pbar_w = pbar)
    }

    pub fn with_endpoints(&self, q_init: Point, q_final: Point) -> Result<Self> {
        self.rebuild(|f| {
            f.uav.q_i = [q_init.x, q_init.y];
            f.uav.q_f = [q_final.x, q_final.y];
        })
    }

    /// `d^alpha` for the UAV at horizontal position `q`.
    pub fn dist_pow(&self, q: &Point, sn: usize) -> f64 {
        let h2 = self.altitude * self.altitude + (q - self.sns[sn]).norm_squared();
        if self.radio.alpha == 2.0 {
            h2
        } else {
            h2.powf(self.radio.alpha / 2.0)
        }
    }
}

/// On-disk layout. Field names follow the documented section keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub sns: SnSection,
    pub uav: UavSection,
    pub radio: RadioSection,
    #[serde(default)]
    pub grid: GridSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnSection {
    pub positions: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavSection {
    #[serde(rename = "H_min")]
    pub h_min: f64,
    pub v_h: f64,
    pub delta: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "q_I")]
    pub q_i: [f64; 2],
    #[serde(rename = "q_F")]
    pub q_f: [f64; 2],
    #[serde(rename = "M")]
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSection {
    pub beta0_db: f64,
    pub alpha: f64,
    #[serde(rename = "rician_G")]
    pub rician_g: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub pbar_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub delta_g: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { delta_g: 20.0 }
    }
}

/// Everything except SN positions; the input to [`generate_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionTemplate {
    pub uav: UavSection,
    pub radio: RadioSection,
    pub grid: GridSection,
}

impl Default for MissionTemplate {
    /// The reference setup: 130 m altitude, 20 m/s, 0.5 s slots, -60 dB reference gain,
    /// 0.1 MHz at -154 dBm/Hz, 10 mW average power, free-space exponent, G = 0.94.
    fn default() -> Self {
        Self {
            uav: UavSection {
                h_min: 130.0,
                v_h: 20.0,
                delta: 0.5,
                t: 100.0,
                q_i: [400.0, 0.0],
                q_f: [1000.0, 500.0],
                m: 12,
            },
            radio: RadioSection {
                beta0_db: -60.0,
                alpha: 2.0,
                rician_g: 0.94,
                bandwidth_hz: 1e5,
                noise_psd_dbm_hz: -154.0,
                pbar_w: 0.01,
            },
            grid: GridSection::default(),
        }
    }
}

impl From<&Scenario> for MissionTemplate {
    fn from(s: &Scenario) -> Self {
        let f = s.to_file();
        Self {
            uav: f.uav,
            radio: f.radio,
            grid: f.grid,
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    Scenario::from_file(&file)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

/// K SNs drawn i.i.d. uniform over `[0, side]^2`. Deterministic in `seed`.
pub fn generate_scenario(
    seed: u64,
    k: usize,
    side: f64,
    template: &MissionTemplate,
) -> Result<Scenario> {
    if k < 1 {
        return Err(invariant("K"));
    }
    if !(side.is_finite() && side > 0.0) {
        return Err(invariant("side"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..k)
        .map(|_| [rng.gen::<f64>() * side, rng.gen::<f64>() * side])
        .collect();
    Scenario::from_file(&ScenarioFile {
        sns: SnSection { positions },
        uav: template.uav.clone(),
        radio: template.radio.clone(),
        grid: template.grid.clone(),
    })
}

/// Bounding box of the SNs, discretized for the 2D hover search.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub grid_step: f64,
}

impl BoxRegion {
    pub fn from_scenario(s: &Scenario) -> Self {
        let fold = |f: fn(&Point) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
            s.sns.iter().map(f).fold(init, pick)
        };
        Self {
            x_lo: fold(|p| p.x, f64::INFINITY, f64::min),
            x_hi: fold(|p| p.x, f64::NEG_INFINITY, f64::max),
            y_lo: fold(|p| p.y, f64::INFINITY, f64::min),
            y_hi: fold(|p| p.y, f64::NEG_INFINITY, f64::max),
            grid_step: s.grid_step,
        }
    }

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let span = hi - lo;
        if span <= 0.0 {
            return vec![lo];
        }
        // evenly spaced, both ends included, spacing <= step
        let n = (span / step - 1e-9).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| if i == n { hi } else { lo + span * i as f64 / n as f64 })
            .collect()
    }

    pub fn x_axis(&self) -> Vec<f64> {
        Self::axis(self.x_lo, self.x_hi, self.grid_step)
    }

    pub fn y_axis(&self) -> Vec<f64> {
        Self::axis(self.y_lo, self.y_hi, self.grid_step)
    }

    /// Grid points in lexicographic (x, then y) order.
    pub fn grid_points(&self) -> Vec<Point> {
        let ys = self.y_axis();
        self.x_axis()
            .into_iter()
            .flat_map(|x| ys.iter().map(move |&y| Point::new(x, y)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline_text() -> String {
        let mut t = MissionTemplate::default();
        t.uav.t = 100.0;
        let s = generate_scenario(3, 8, 1000.0, &t).unwrap();
        s.to_toml()
    }

    #[test]
    fn baseline_units() {
        let s = parse_scenario(&baseline_text()).unwrap();
        // -104 dBm
        let sigma2_mw = s.radio.sigma2 * 1e3;
        assert!((sigma2_mw / 10f64.powf(-10.4) - 1.0).abs() < 1e-12);
        assert!((s.radio.gamma0 / 10f64.powf(7.4) - 1.0).abs() < 1e-12);
        assert!((s.radio.gamma0 - 2.512e7).abs() / 2.512e7 < 1e-3);
        assert!((s.radio.gamma0 - s.radio.beta0 / s.radio.sigma2).abs() / s.radio.gamma0 < 1e-12);
        assert_eq!(s.slots, 200);
    }

    #[test]
    fn alpha_below_two_rejected() {
        let text = baseline_text().replace("alpha = 2.0", "alpha = 1.5");
        let err = parse_scenario(&text).unwrap_err();
        assert_eq!(err.to_string(), "invariant violation: alpha");
    }

    #[test]
    fn single_sn_minimal() {
        let mut f = MissionTemplate::default();
        f.uav.t = 10.0;
        let file = ScenarioFile {
            sns: SnSection {
                positions: vec![[0.0, 0.0]],
            },
            uav: f.uav,
            radio: f.radio,
            grid: f.grid,
        };
        let s = Scenario::from_file(&file).unwrap();
        assert_eq!(s.slots, 20);
        assert_eq!(s.num_sns(), 1);
    }

    #[test]
    fn coincident_sns_rejected() {
        let mut file = parse_scenario(&baseline_text()).unwrap().to_file();
        file.sns.positions[1] = file.sns.positions[0];
        assert!(matches!(
            Scenario::from_file(&file),
            Err(Error::Invariant { .. })
        ));
    }

    #[test]
    fn generation_deterministic() {
        let t = MissionTemplate::default();
        let a = generate_scenario(7, 8, 1000.0, &t).unwrap();
        let b = generate_scenario(7, 8, 1000.0, &t).unwrap();
        assert_eq!(a.to_toml(), b.to_toml());
        let c = generate_scenario(8, 8, 1000.0, &t).unwrap();
        assert_ne!(a.sns, c.sns);
        let d = generate_scenario(1, 2, 100.0, &t).unwrap();
        assert!(d
            .sns
            .iter()
            .all(|p| (0.0..=100.0).contains(&p.x) && (0.0..=100.0).contains(&p.y)));
    }

    #[test]
    fn grid_covers_box() {
        let s = parse_scenario(&baseline_text()).unwrap();
        let b = BoxRegion::from_scenario(&s);
        let xs = b.x_axis();
        assert_eq!(xs[0], b.x_lo);
        assert_eq!(*xs.last().unwrap(), b.x_hi);
        assert!(xs.windows(2).all(|w| w[1] - w[0] <= b.grid_step + 1e-9));
        let pts = b.grid_points();
        assert_eq!(pts.len(), xs.len() * b.y_axis().len());
    }
}
