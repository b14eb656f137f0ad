//! Exhaustive and brute-force reference solvers. Deliberately naive: they re-derive
//! everything from the rate formula and share no code paths with the solvers under test
//! beyond the scenario type.

use uavdh::opt_kernels::Mode;
use uavdh::{Point, Scenario};

/// Multiplexing coefficient of serving `n` SNs with `m` antennas in `mode`, if allowed.
pub fn mode_kappa(mode: Mode, n: usize, m: usize, sns: usize) -> Option<f64> {
    match (mode, n) {
        (_, 0) => None,
        (Mode::Proposed, 1) | (Mode::Mrc, 1) => Some(m as f64),
        (Mode::SingleAntenna, 1) => Some(1.0),
        (Mode::Proposed, n) if n <= sns && n + 1 <= m => Some((m - n) as f64),
        _ => None,
    }
}

/// All non-empty subsets of `0..k` as sorted index lists, in increasing bitmask order.
pub fn subsets(k: usize) -> Vec<Vec<usize>> {
    (1u32..1 << k)
        .map(|mask| (0..k).filter(|&i| mask & (1 << i) != 0).collect())
        .collect()
}

/// One SN's water-filled power and rate, straight from the definition:
/// maximize `w log2(1 + g p) - c p` over `p >= 0`.
pub fn best_power(w: f64, c: f64, g: f64) -> (f64, f64) {
    if w <= 0.0 {
        return (0.0, 0.0);
    }
    // stationarity: w g / ((1 + g p) ln 2) = c
    let p = (w / (c * std::f64::consts::LN_2) - 1.0 / g).max(0.0);
    (p, (1.0 + g * p).log2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumerated {
    pub value: f64,
    pub active: Vec<usize>,
    pub kappa: f64,
}

/// Best schedule at one location by trying every subset. Per-SN value is
/// `rate_weight_k r_k - power_price_k p_k`.
pub fn enumerate_schedules(
    dist_pow: &[f64],
    rate_weight: &[f64],
    power_price: &[f64],
    gamma0: f64,
    antennas: usize,
    mode: Mode,
) -> Enumerated {
    let k = dist_pow.len();
    let mut best = Enumerated {
        value: 0.0,
        active: Vec::new(),
        kappa: 0.0,
    };
    for set in subsets(k) {
        let Some(kappa) = mode_kappa(mode, set.len(), antennas, k) else {
            continue;
        };
        let mut value = 0.0;
        for &i in &set {
            let (p, r) = best_power(rate_weight[i], power_price[i], kappa * gamma0 / dist_pow[i]);
            value += rate_weight[i] * r - power_price[i] * p;
        }
        if value > best.value {
            best = Enumerated {
                value,
                active: set,
                kappa,
            };
        }
    }
    best
}

/// Hover-problem inner maximum over explicit candidate points: returns (value, point index).
pub fn enumerate_hover_inner(
    scenario: &Scenario,
    points: &[Point],
    lambda: &[f64],
    mu: &[f64],
    mode: Mode,
) -> (f64, usize, Enumerated) {
    let n = scenario.slots as f64;
    let price: Vec<f64> = mu.iter().map(|m| n * m).collect();
    let mut best: Option<(f64, usize, Enumerated)> = None;
    for (i, q) in points.iter().enumerate() {
        let d: Vec<f64> = (0..scenario.num_sns()).map(|k| scenario.dist_pow(q, k)).collect();
        let e = enumerate_schedules(&d, lambda, &price, scenario.radio.gamma0, scenario.radio.antennas, mode);
        if best.as_ref().map_or(true, |b| e.value > b.0) {
            best = Some((e.value, i, e));
        }
    }
    best.expect("at least one point")
}

/// Hover dual function `max_q sum_k a_k (lambda_k r_k - N mu_k p_k) + N P sum_k mu_k`.
pub fn hover_dual(scenario: &Scenario, points: &[Point], lambda: &[f64], mu: &[f64], mode: Mode) -> f64 {
    let n = scenario.slots as f64;
    enumerate_hover_inner(scenario, points, lambda, mu, mode).0 + n * scenario.radio.pbar * mu.iter().sum::<f64>()
}

/// Minimum of the two-SN hover dual over a `(lambda_1, mu_1, mu_2)` grid, refined by
/// a shrinking pattern search around the best grid node.
pub fn dual_grid_search_two_sns(scenario: &Scenario, points: &[Point], mode: Mode, mu_max: f64) -> f64 {
    assert_eq!(scenario.num_sns(), 2);
    let eval = |l: f64, m1: f64, m2: f64| hover_dual(scenario, points, &[l, 1.0 - l], &[m1, m2], mode);
    let lam: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
    let mus: Vec<f64> = (0..=48).map(|i| mu_max * 10f64.powf(-6.0 * (1.0 - i as f64 / 48.0))).collect();
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    for &l in &lam {
        for &a in &mus {
            for &b in &mus {
                let v = eval(l, a, b);
                if v < best.0 {
                    best = (v, l, a, b);
                }
            }
        }
    }
    // pattern search: lambda additive, mu multiplicative steps
    let (mut v, mut l, mut a, mut b) = best;
    let mut dl = 1.0 / 40.0;
    let mut fm = 10f64.powf(6.0 / 48.0);
    while dl > 1e-7 {
        let mut moved = false;
        for (cl, ca, cb) in [
            (l + dl, a, b),
            (l - dl, a, b),
            (l, a * fm, b),
            (l, a / fm, b),
            (l, a, b * fm),
            (l, a, b / fm),
            (l + dl, a * fm, b * fm),
            (l - dl, a / fm, b / fm),
            (l + dl, a / fm, b * fm),
            (l - dl, a * fm, b / fm),
        ] {
            if !(0.0..=1.0).contains(&cl) {
                continue;
            }
            let c = eval(cl, ca, cb);
            if c < v {
                (v, l, a, b) = (c, cl, ca, cb);
                moved = true;
            }
        }
        if !moved {
            dl *= 0.5;
            fm = fm.sqrt();
        }
    }
    v
}

/// Per-SN maximum of `sum_c t_c log2(1 + g_c p_c)` subject to `sum_c t_c p_c <= budget`,
/// by bisection on the water level.
pub fn shared_rate(t: &[f64], g: &[f64], budget: f64) -> f64 {
    let used = |level: f64| -> f64 {
        t.iter()
            .zip(g)
            .map(|(&ti, &gi)| if gi > 0.0 { ti * (level - 1.0 / gi).max(0.0) } else { 0.0 })
            .sum()
    };
    if t.iter().zip(g).all(|(&ti, &gi)| ti <= 0.0 || gi <= 0.0) {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while used(hi) < budget {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if used(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let level = 0.5 * (lo + hi);
    t.iter()
        .zip(g)
        .map(|(&ti, &gi)| if gi > 0.0 && ti > 0.0 { ti * (1.0 + gi * (level - 1.0 / gi).max(0.0)).log2() } else { 0.0 })
        .sum()
}

/// A hover location with a fixed served set; `gain[k] = kappa gamma0 / d_k^alpha` for
/// served SNs and 0 otherwise.
#[derive(Debug, Clone)]
pub struct Column {
    pub point: usize,
    pub active: Vec<usize>,
    pub gain: Vec<f64>,
}

fn max_min_for(columns: &[&Column], t: &[f64], pbar: f64, sns: usize) -> f64 {
    (0..sns)
        .map(|k| {
            let g: Vec<f64> = columns.iter().map(|c| c.gain[k]).collect();
            shared_rate(t, &g, pbar)
        })
        .fold(f64::INFINITY, f64::min)
}

fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..60 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    let candidates = [(f(lo), lo), (f(hi), hi), (f1, x1), (f2, x2)];
    let best = candidates.iter().fold(candidates[0], |b, c| if c.0 > b.0 { *c } else { b });
    (best.0, best.1)
}

/// Best max-min rate of one column set with time shares optimized (concave, so nested
/// golden-section searches over the simplex are exact up to tolerance).
pub fn best_sharing(columns: &[&Column], pbar: f64, sns: usize) -> f64 {
    match columns.len() {
        1 => max_min_for(columns, &[1.0], pbar, sns),
        2 => golden_max(|a| max_min_for(columns, &[a, 1.0 - a], pbar, sns), 0.0, 1.0).0,
        3 => {
            golden_max(
                |a| golden_max(|b| max_min_for(columns, &[a, b, (1.0 - a - b).max(0.0)], pbar, sns), 0.0, 1.0 - a).0,
                0.0,
                1.0,
            )
            .0
        }
        _ => panic!("at most three columns"),
    }
}

/// Columns on `points` for every allowed served set, keeping only those not dominated
/// (another column with the same set and gains at least as large for every served SN).
pub fn undominated_columns(scenario: &Scenario, points: &[Point], mode: Mode) -> Vec<Column> {
    let k = scenario.num_sns();
    let m = scenario.radio.antennas;
    let mut out: Vec<Column> = Vec::new();
    for set in subsets(k) {
        let Some(kappa) = mode_kappa(mode, set.len(), m, k) else {
            continue;
        };
        let cols: Vec<Column> = points
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let mut gain = vec![0.0; k];
                for &s in &set {
                    gain[s] = kappa * scenario.radio.gamma0 / scenario.dist_pow(q, s);
                }
                Column {
                    point: i,
                    active: set.clone(),
                    gain,
                }
            })
            .collect();
        for (i, c) in cols.iter().enumerate() {
            let dominated = cols.iter().enumerate().any(|(j, o)| {
                j != i
                    && set.iter().all(|&s| o.gain[s] >= c.gain[s])
                    && (set.iter().any(|&s| o.gain[s] > c.gain[s]) || j < i)
            });
            if !dominated {
                out.push(c.clone());
            }
        }
    }
    out
}

/// Exhaustive hover plan: every set of at most three undominated columns, with shares and
/// per-SN powers optimized. Returns the best max-min rate.
pub fn brute_force_hover(scenario: &Scenario, points: &[Point], mode: Mode) -> f64 {
    let cols = undominated_columns(scenario, points, mode);
    let k = scenario.num_sns();
    let pbar = scenario.radio.pbar;
    let mut best = 0.0f64;
    for a in 0..cols.len() {
        best = best.max(best_sharing(&[&cols[a]], pbar, k));
        for b in a + 1..cols.len() {
            best = best.max(best_sharing(&[&cols[a], &cols[b]], pbar, k));
            for c in b + 1..cols.len() {
                best = best.max(best_sharing(&[&cols[a], &cols[b], &cols[c]], pbar, k));
            }
        }
    }
    best
}

/// Shortest open path through all points by trying every permutation.
pub fn brute_force_path(points: &[Point], start: Point, end: Point) -> (f64, Vec<usize>) {
    fn length(points: &[Point], start: Point, end: Point, order: &[usize]) -> f64 {
        let mut prev = start;
        let mut l = 0.0;
        for &i in order {
            l += (points[i] - prev).norm();
            prev = points[i];
        }
        l + (end - prev).norm()
    }
    fn permute(k: usize, a: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if k == a.len() {
            f(a);
            return;
        }
        for i in k..a.len() {
            a.swap(k, i);
            permute(k + 1, a, f);
            a.swap(k, i);
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    let mut best = (f64::INFINITY, order.clone());
    permute(0, &mut order, &mut |o| {
        let l = length(points, start, end, o);
        if l < best.0 {
            best = (l, o.to_vec());
        }
    });
    best
}
