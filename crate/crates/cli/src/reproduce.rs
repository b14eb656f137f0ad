//! End-to-end experiment on one seeded scenario: rate-model accuracy, hover plans,
//! rate versus mission time, shortest missions and the power/energy trade-off.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use log::info;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use uavdh::channel::{rate_monte_carlo, Link, UraGeometry};
use uavdh::energy::{power_energy_tradeoff, PropulsionParams};
use uavdh::hover::{solve_p2_benchmark, HoverPlan};
use uavdh::opt_kernels::Mode;
use uavdh::scenario::{generate_scenario, MissionTemplate};
use uavdh::trajectory::{min_time_with_plan, solve_p1_with_plan, BcdConfig};
use uavdh::{Point, Scenario};

use crate::output::{scenario_hash, CliResult, Run, Table};

#[derive(Args)]
pub struct ReproduceArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long = "K", alias = "k", default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 1000.0)]
    side: f64,
    /// Demand per SN for the shortest-mission runs, Mbit.
    #[arg(long, default_value_t = 4.0)]
    throughput_mbits: f64,
    /// Fewer draws, horizons and power levels.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value = "reproduce")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct Config {
    label: &'static str,
    mode: Mode,
    antennas: usize,
}

const CONFIGS: [Config; 6] = [
    Config { label: "proposed_m20", mode: Mode::Proposed, antennas: 20 },
    Config { label: "proposed_m12", mode: Mode::Proposed, antennas: 12 },
    Config { label: "mrc_m12", mode: Mode::Mrc, antennas: 12 },
    Config { label: "single", mode: Mode::SingleAntenna, antennas: 12 },
    Config { label: "mrc_m4", mode: Mode::Mrc, antennas: 4 },
    Config { label: "mrc_m20", mode: Mode::Mrc, antennas: 20 },
];

/// The first four configurations are the headline comparison.
const MAIN: usize = 4;

#[derive(Debug, Serialize)]
struct ConfigSummary {
    label: &'static str,
    mode: Mode,
    antennas: usize,
    hover_rate_bpshz: f64,
    hover_points: usize,
    dual_gap_bpshz: f64,
    mission_rate_bpshz: f64,
    t_min_s: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RateApprox {
    antennas: usize,
    max_rel_err: f64,
    /// Multi-SN cases where the closed form exceeds the sample mean by more than 3 SE.
    jensen_violations: usize,
}

#[derive(Debug, Serialize)]
struct EnergyRow {
    mode: Mode,
    pbar_w: f64,
    t_min_s: Option<f64>,
    energy_j: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    seed: u64,
    sns: usize,
    side_m: f64,
    horizon_s: f64,
    scenario_hash: String,
    throughput_mbits: f64,
    rate_approx: Vec<RateApprox>,
    configs: Vec<ConfigSummary>,
    energy: Vec<EnergyRow>,
    checks: BTreeMap<&'static str, bool>,
}

fn rate_approximation(s: &Scenario, side: f64, draws: usize, seed: u64, table: &mut Table) -> CliResult<Vec<RateApprox>> {
    let geometry = UraGeometry::default();
    let positions: Vec<Point> = (0..5)
        .flat_map(|i| (0..5).map(move |j| Point::new(side * (0.1 + 0.2 * i as f64), side * (0.1 + 0.2 * j as f64))))
        .collect();
    let mut out = Vec::new();
    for m in [12usize, 20] {
        let sm = s.with_antennas(m)?;
        let mut cases = Vec::new();
        for (pi, q) in positions.iter().enumerate() {
            // nearest SNs first
            let mut by_dist: Vec<usize> = (0..s.num_sns()).collect();
            by_dist.sort_by(|&a, &b| (s.sns[a] - q).norm().total_cmp(&(s.sns[b] - q).norm()).then(a.cmp(&b)));
            for kn in 1..=3.min(s.num_sns()) {
                let mut set = by_dist[..kn].to_vec();
                set.sort_unstable();
                cases.push((pi, *q, set));
            }
        }
        let reports: Vec<_> = cases
            .par_iter()
            .enumerate()
            .map(|(ci, (_, q, set))| {
                let links: Vec<Link> = set.iter().map(|&k| Link::new(*q, sm.altitude, sm.sns[k])).collect();
                let case_seed = seed.wrapping_mul(1_000_003).wrapping_add((m * 1000 + ci) as u64);
                rate_monte_carlo(&links, &vec![sm.radio.pbar; links.len()], &sm.radio, &geometry, draws, case_seed)
            })
            .collect::<Result<_, _>>()?;
        let mut max_rel: f64 = 0.0;
        let mut violations = 0;
        for ((_, q, set), rep) in cases.iter().zip(&reports) {
            for (k, r) in set.iter().zip(&rep.rates) {
                let rel = (r.closed_form - r.mc_mean).abs() / r.mc_mean;
                max_rel = max_rel.max(rel);
                if set.len() >= 2 && r.closed_form > r.mc_mean + 3.0 * r.mc_se {
                    violations += 1;
                }
                table.row([
                    m.to_string(),
                    q.x.to_string(),
                    q.y.to_string(),
                    set.len().to_string(),
                    k.to_string(),
                    r.closed_form.to_string(),
                    r.mc_mean.to_string(),
                    r.mc_se.to_string(),
                    rel.to_string(),
                ]);
            }
        }
        out.push(RateApprox {
            antennas: m,
            max_rel_err: max_rel,
            jensen_violations: violations,
        });
    }
    Ok(out)
}

/// Missions of equal length may differ in energy at the level of solver noise.
const ENERGY_NOISE: f64 = 1e-6;

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + ENERGY_NOISE))
}

pub fn run(args: &ReproduceArgs, run: &mut Run) -> CliResult<PathBuf> {
    let base = generate_scenario(args.seed, args.k, args.side, &MissionTemplate::default())?;
    let hash = scenario_hash(&base);
    run.scenario_hash = Some(hash.clone());
    run.seeds = vec![args.seed];
    let bcd = BcdConfig::default();
    let draws = if args.quick { 200 } else { 1000 };
    let horizons: Vec<f64> = if args.quick { vec![50.0, 100.0] } else { vec![50.0, 100.0, 200.0, 400.0] };
    let pbars: Vec<f64> = if args.quick { vec![0.005, 0.02] } else { vec![0.002, 0.005, 0.01, 0.02] };
    let bits = args.throughput_mbits * 1e6;
    let t_max = 2000.0;
    run.settings = json!({
        "K": args.k, "side_m": args.side, "quick": args.quick, "draws": draws,
        "horizons_s": horizons, "pbar_w": pbars, "throughput_mbits": args.throughput_mbits,
        "t_max_s": t_max, "bcd": bcd,
    });
    let dir = &args.out_dir;
    run.write(&dir.join("scenario.toml"), base.to_toml().as_bytes())?;

    info!("rate model accuracy");
    let mut approx_table = Table::new(&[
        "antennas", "x_m", "y_m", "active_count", "sn_id", "closed_form_bpshz", "mc_mean_bpshz", "mc_se_bpshz", "rel_err",
    ]);
    let rate_approx = rate_approximation(&base, args.side, draws, args.seed, &mut approx_table)?;
    run.write_csv(&dir.join("rate_approx.csv"), approx_table)?;

    info!("hover plans");
    let scenarios: Vec<Scenario> = CONFIGS.iter().map(|c| base.with_antennas(c.antennas)).collect::<Result<_, _>>()?;
    let plans: Vec<HoverPlan> = CONFIGS
        .par_iter()
        .zip(&scenarios)
        .map(|(c, s)| solve_p2_benchmark(s, c.mode, &bcd.hover))
        .collect::<Result<_, _>>()?;
    let mut hover_table = Table::new(&["config", "x_m", "y_m", "duration_s", "active_sns", "kappa"]);
    for (c, plan) in CONFIGS.iter().zip(&plans) {
        for p in &plan.points {
            let active: Vec<String> = p.active.iter().map(|k| k.to_string()).collect();
            hover_table.row([
                c.label.to_string(),
                p.location[0].to_string(),
                p.location[1].to_string(),
                p.duration.to_string(),
                active.join(";"),
                p.kappa.to_string(),
            ]);
        }
    }
    run.write_csv(&dir.join("hover_points.csv"), hover_table)?;

    info!("rate versus mission time");
    let jobs: Vec<(usize, f64)> = (0..CONFIGS.len()).flat_map(|c| horizons.iter().map(move |&t| (c, t))).collect();
    let missions: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let s = scenarios[c].with_horizon(t)?;
            let cfg = BcdConfig { mode: CONFIGS[c].mode, ..bcd };
            let m = solve_p1_with_plan(&s, &plans[c].rescaled(t), &cfg)?;
            Ok((m.rate, m.upper_bound))
        })
        .collect::<uavdh::Result<_>>()?;
    let mut horizon_table = Table::new(&["config", "t_s", "rate_bpshz", "upper_bound_bpshz"]);
    for (&(c, t), (r, ub)) in jobs.iter().zip(&missions) {
        horizon_table.row([CONFIGS[c].label.to_string(), t.to_string(), r.to_string(), ub.to_string()]);
    }
    run.write_csv(&dir.join("rate_vs_horizon.csv"), horizon_table)?;
    let mission_at = |c: usize, t: f64| -> Option<f64> {
        jobs.iter().position(|&(jc, jt)| jc == c && jt == t).map(|i| missions[i].0)
    };
    let base_rate = |c: usize| -> f64 {
        mission_at(c, base.horizon).unwrap_or_else(|| {
            let cfg = BcdConfig { mode: CONFIGS[c].mode, ..bcd };
            solve_p1_with_plan(&scenarios[c], &plans[c], &cfg).map(|m| m.rate).unwrap_or(f64::NAN)
        })
    };

    info!("shortest missions");
    let t_min: Vec<Option<f64>> = (0..MAIN)
        .into_par_iter()
        .map(|c| {
            let cfg = BcdConfig { mode: CONFIGS[c].mode, ..bcd };
            match min_time_with_plan(&scenarios[c], &plans[c], bits, t_max, &cfg) {
                Ok(tp) => Ok(Some(tp.t_min)),
                Err(uavdh::Error::HorizonExceeded { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<uavdh::Result<_>>()?;
    let mut tmin_table = Table::new(&["config", "throughput_mbits", "t_min_s", "feasible"]);
    for (c, t) in t_min.iter().enumerate() {
        tmin_table.row([
            CONFIGS[c].label.to_string(),
            args.throughput_mbits.to_string(),
            t.map(|v| v.to_string()).unwrap_or_default(),
            t.is_some().to_string(),
        ]);
    }
    run.write_csv(&dir.join("min_time.csv"), tmin_table)?;

    info!("power / energy trade-off");
    let params = PropulsionParams::default();
    let mut energy = Vec::new();
    let mut energy_table = Table::new(&["mode", "pbar_w", "t_min_s", "energy_j", "feasible"]);
    for mode in [Mode::Proposed, Mode::Mrc] {
        let cfg = BcdConfig { mode, ..bcd };
        for p in power_energy_tradeoff(&base, &pbars, bits, t_max, &cfg, &params)? {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            energy_table.row([mode.name().to_string(), p.pbar.to_string(), opt(p.t_min), opt(p.energy), p.feasible().to_string()]);
            energy.push(EnergyRow {
                mode,
                pbar_w: p.pbar,
                t_min_s: p.t_min,
                energy_j: p.energy,
            });
        }
    }
    run.write_csv(&dir.join("energy_tradeoff.csv"), energy_table)?;

    let configs: Vec<ConfigSummary> = CONFIGS
        .iter()
        .enumerate()
        .map(|(c, cfg)| ConfigSummary {
            label: cfg.label,
            mode: cfg.mode,
            antennas: cfg.antennas,
            hover_rate_bpshz: plans[c].rate,
            hover_points: plans[c].hover_count(),
            dual_gap_bpshz: plans[c].duality_gap(),
            mission_rate_bpshz: base_rate(c),
            t_min_s: t_min.get(c).copied().flatten(),
        })
        .collect();

    let r: Vec<f64> = configs.iter().map(|c| c.mission_rate_bpshz).collect();
    let mut checks = BTreeMap::new();
    checks.insert("mission_rate_ordering", r[0] > r[1] && r[1] > r[2] && r[2] > r[3]);
    let tm: Vec<f64> = t_min.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
    checks.insert("t_min_ordering", tm[0] <= tm[1] && tm[1] <= tm[2] && tm[2] <= tm[3]);
    let omega: Vec<usize> = configs.iter().map(|c| c.hover_points).collect();
    checks.insert("hover_contraction", omega[0] <= omega[1] && omega[1] <= omega[2] && omega[2] == args.k);
    for mode in [Mode::Proposed, Mode::Mrc] {
        let e: Vec<f64> = energy
            .iter()
            .filter(|e| e.mode == mode)
            .map(|e| e.energy_j.unwrap_or(f64::INFINITY))
            .collect();
        let key = if mode == Mode::Proposed { "energy_non_increasing_proposed" } else { "energy_non_increasing_mrc" };
        checks.insert(key, non_increasing(&e));
    }
    let below = pbars.iter().all(|&p| {
        let get = |m: Mode| energy.iter().find(|e| e.mode == m && e.pbar_w == p).and_then(|e| e.energy_j);
        match (get(Mode::Proposed), get(Mode::Mrc)) {
            (Some(a), Some(b)) => a <= b * (1.0 + ENERGY_NOISE),
            (Some(_), None) => true,
            _ => false,
        }
    });
    checks.insert("energy_proposed_below_mrc", below);

    let summary = Summary {
        seed: args.seed,
        sns: args.k,
        side_m: args.side,
        horizon_s: base.horizon,
        scenario_hash: hash,
        throughput_mbits: args.throughput_mbits,
        rate_approx,
        configs,
        energy,
        checks,
    };

    let mut text = String::new();
    let _ = writeln!(text, "seed {}  K = {}  T = {} s  demand {} Mbit/SN", args.seed, args.k, base.horizon, args.throughput_mbits);
    let _ = writeln!(text, "{:<14} {:>10} {:>8} {:>12} {:>10}", "config", "r_P2", "hovers", "r_mission", "T_min_s");
    for c in &summary.configs {
        let tmin = c.t_min_s.map(|t| format!("{t:.1}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            text,
            "{:<14} {:>10.4} {:>8} {:>12.4} {:>10}",
            c.label, c.hover_rate_bpshz, c.hover_points, c.mission_rate_bpshz, tmin
        );
    }
    for (name, ok) in &summary.checks {
        let _ = writeln!(text, "{name}: {}", if *ok { "ok" } else { "VIOLATED" });
    }
    run.write(&dir.join("summary.txt"), text.as_bytes())?;
    let primary = dir.join("summary.json");
    run.write_json(&primary, &summary)?;
    Ok(primary)
}
