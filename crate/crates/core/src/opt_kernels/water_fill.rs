use std::f64::consts::LN_2;

use crate::error::{Error, Result};

/// Optimal power and rate of one SN on one link for dual prices `(lambda, mu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterFill {
    pub power: f64,
    pub rate: f64,
}

/// Water level `lambda / (N mu ln 2)`.
pub fn water_level(lambda: f64, mu: f64, slots: usize) -> f64 {
    lambda / (slots as f64 * mu * LN_2)
}

/// Maximizer of `lambda/N * log2(1 + kappa gamma0 p / d^alpha) - mu p` over `p >= 0`:
///
/// `p* = [lambda/(N mu ln2) - d^alpha/(kappa gamma0)]^+`,
/// `r* = [log2(lambda kappa gamma0 / (N mu ln2 d^alpha))]^+`.
pub fn water_fill(
    lambda: f64,
    mu: f64,
    dist_pow: f64,
    kappa: f64,
    gamma0: f64,
    slots: usize,
) -> Result<WaterFill> {
    debug_assert!(lambda >= 0.0 && dist_pow > 0.0 && kappa >= 1.0 && slots > 0);
    if lambda <= 0.0 {
        return Ok(WaterFill {
            power: 0.0,
            rate: 0.0,
        });
    }
    if mu <= 0.0 {
        return Err(Error::WaterFillUnbounded);
    }
    let level = water_level(lambda, mu, slots);
    let floor = dist_pow / (kappa * gamma0);
    if level <= floor {
        return Ok(WaterFill {
            power: 0.0,
            rate: 0.0,
        });
    }
    Ok(WaterFill {
        power: level - floor,
        rate: (level / floor).log2(),
    })
}

/// Maximizes `sum_i w_i log(1 + g_i p_i)` subject to `sum_i w_i p_i <= budget`, `p >= 0`.
///
/// The optimum is `p_i = [L - 1/g_i]^+` with one common level `L`. Entries with zero
/// weight or zero gain get no power.
pub fn water_fill_budget(weights: &[f64], gains: &[f64], budget: f64) -> Vec<f64> {
    assert_eq!(weights.len(), gains.len());
    let mut out = vec![0.0; gains.len()];
    if budget <= 0.0 {
        return out;
    }
    let mut idx: Vec<usize> = (0..gains.len())
        .filter(|&i| weights[i] > 0.0 && gains[i] > 0.0)
        .collect();
    if idx.is_empty() {
        return out;
    }
    // cheapest floors first
    idx.sort_by(|&a, &b| (1.0 / gains[a]).total_cmp(&(1.0 / gains[b])).then(a.cmp(&b)));
    let mut wsum = 0.0;
    let mut wfloor = 0.0;
    let mut level = 0.0;
    for (pos, &i) in idx.iter().enumerate() {
        wsum += weights[i];
        wfloor += weights[i] / gains[i];
        level = (budget + wfloor) / wsum;
        let next_floor = idx.get(pos + 1).map(|&j| 1.0 / gains[j]);
        if next_floor.map_or(true, |f| level <= f) {
            break;
        }
    }
    for &i in &idx {
        out[i] = (level - 1.0 / gains[i]).max(0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weight_gives_nothing() {
        let wf = water_fill(0.0, 1.0, 1.0, 1.0, 1.0, 10).unwrap();
        assert_eq!((wf.power, wf.rate), (0.0, 0.0));
    }

    #[test]
    fn level_at_floor_gives_nothing() {
        // level = 1/(N mu ln2) = 0.5, floor = d^a / (kappa gamma0) = 0.5
        let n = 7;
        let mu = 1.0 / (n as f64 * LN_2 * 0.5);
        let wf = water_fill(1.0, mu, 0.5, 1.0, 1.0, n).unwrap();
        assert_eq!(wf.power, 0.0);
        assert_eq!(wf.rate, 0.0);
    }

    #[test]
    fn hand_value() {
        for n in [1, 3, 200] {
            let mu = 1.0 / (n as f64 * LN_2);
            let wf = water_fill(1.0, mu, 0.5, 2.0, 0.5, n).unwrap();
            assert!((wf.power - 0.5).abs() < 1e-12);
            assert!((wf.rate - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_price_is_unbounded() {
        assert!(matches!(
            water_fill(0.3, 0.0, 1.0, 1.0, 1.0, 4),
            Err(Error::WaterFillUnbounded)
        ));
    }

    #[test]
    fn budget_fill_spends_budget() {
        let w = [1.0, 2.0, 1.0, 0.0];
        let g = [10.0, 1.0, 0.01, 5.0];
        let p = water_fill_budget(&w, &g, 1.0);
        let spent: f64 = w.iter().zip(&p).map(|(a, b)| a * b).sum();
        assert!((spent - 1.0).abs() < 1e-12);
        assert_eq!(p[2], 0.0);
        assert_eq!(p[3], 0.0);
        // common level on the active entries
        assert!(((p[0] + 0.1) - (p[1] + 1.0)).abs() < 1e-12);
    }
}
