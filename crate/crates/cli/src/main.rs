mod output;
mod reproduce;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;
use uavdh::channel::{rate_monte_carlo, Link, LosModel, UraGeometry};
use uavdh::energy::{power_energy_tradeoff, PropulsionParams};
use uavdh::hover::{solve_p2_benchmark, HoverConfig};
use uavdh::opt_kernels::Mode;
use uavdh::scenario::{generate_scenario, load_scenario, MissionTemplate};
use uavdh::schedule::{solve_p3_mode, ScheduleConfig};
use uavdh::trajectory::{solve_p1, BcdConfig, Trajectory};
use uavdh::{Point, Scenario};

use output::{scenario_hash, CliError, CliResult, Run, Table};

#[derive(Parser)]
#[command(name = "uavdh", version, about = "Max-min rate data harvesting with a multi-antenna UAV")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log level filter, e.g. info or debug.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a seeded scenario and write it as TOML.
    Generate(GenerateArgs),
    /// Hover-point plan (upper bound on the mission rate).
    SolveP2(SolveP2Args),
    /// Schedule and powers along a given trajectory.
    SolveP3(SolveP3Args),
    /// Full mission: trajectory, schedule and powers.
    SolveP1(SolveP1Args),
    /// Closed-form rate against Monte Carlo ZF/MRC rates at one UAV position.
    SimulateRate(SimulateArgs),
    /// Shortest mission and propulsion energy across SN power limits.
    EnergyTradeoff(TradeoffArgs),
    /// Whole experiment pipeline on a seeded scenario.
    Reproduce(reproduce::ReproduceArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long = "K", alias = "k", default_value_t = 8)]
    k: usize,
    /// Side of the square SN area, m.
    #[arg(long, default_value_t = 1000.0)]
    side: f64,
    /// Antennas M (default from the reference template).
    #[arg(long)]
    antennas: Option<usize>,
    /// Mission time T, s.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value = "scenario.toml")]
    out: PathBuf,
}

#[derive(Args)]
struct ScenarioArg {
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Args)]
struct SolveP2Args {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, default_value = "proposed", value_parser = parse_mode)]
    mode: Mode,
    #[arg(long, default_value = "plan.json")]
    out: PathBuf,
    /// Exit with status 3 when the dual search stops before converging.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SolveP3Args {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// CSV with columns slot,x_m,y_m.
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, default_value = "proposed", value_parser = parse_mode)]
    mode: Mode,
    #[arg(long, default_value = "sched.json")]
    out: PathBuf,
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SolveP1Args {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, default_value = "proposed", value_parser = parse_mode)]
    mode: Mode,
    /// Convergence tolerance on the rate, bps/Hz.
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
    #[arg(long, default_value_t = 30)]
    max_iters: usize,
    #[arg(long, default_value = "mission.json")]
    out: PathBuf,
    /// Rate per iteration.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Per-slot trajectory CSV.
    #[arg(long)]
    trajectory_out: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// UAV horizontal position, m.
    #[arg(long, value_parser = parse_xy)]
    uav_xy: Point,
    /// Served SN indices (0-based).
    #[arg(long, value_delimiter = ',', required = true)]
    active: Vec<usize>,
    /// Transmit power per SN, W (default: the average-power limit).
    #[arg(long)]
    power: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// LoS model: steering vector toward a random direction per SN, the SN's actual
    /// direction, or i.i.d. random phases.
    #[arg(long, value_enum, default_value_t = Los::RandomDirection)]
    los: Los,
    #[arg(long, default_value = "rates.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Los {
    RandomDirection,
    Geometric,
    RandomPhase,
}

impl From<Los> for LosModel {
    fn from(l: Los) -> Self {
        match l {
            Los::RandomDirection => LosModel::RandomDirection,
            Los::Geometric => LosModel::Geometric,
            Los::RandomPhase => LosModel::RandomPhase,
        }
    }
}

#[derive(Args)]
struct TradeoffArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Average SN power limits, W.
    #[arg(long, value_delimiter = ',', default_value = "0.002,0.005,0.01,0.02")]
    pbar: Vec<f64>,
    #[arg(long, default_value_t = 4.0)]
    throughput_mbits: f64,
    /// Longest mission considered, s.
    #[arg(long, default_value_t = 2000.0)]
    t_max: f64,
    #[arg(long, default_value = "proposed", value_parser = parse_mode)]
    mode: Mode,
    #[arg(long, default_value = "tradeoff.csv")]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("unknown mode '{s}' (expected proposed, mrc or single)"))
}

fn parse_xy(s: &str) -> Result<Point, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [x, y] => {
            let x: f64 = x.parse().map_err(|_| format!("bad x in '{s}'"))?;
            let y: f64 = y.parse().map_err(|_| format!("bad y in '{s}'"))?;
            Ok(Point::new(x, y))
        }
        _ => Err(format!("expected X,Y, got '{s}'")),
    }
}

fn load(run: &mut Run, path: &Path) -> CliResult<Scenario> {
    let s = load_scenario(path)?;
    run.scenario_hash = Some(scenario_hash(&s));
    Ok(s)
}

fn check(strict: bool, converged: bool, what: &str) -> CliResult<()> {
    if strict && !converged {
        return Err(CliError::NotConverged(format!("{what} stopped before converging")));
    }
    if !converged {
        log::warn!("{what} stopped before converging; writing the best iterate");
    }
    Ok(())
}

fn generate(args: &GenerateArgs, run: &mut Run) -> CliResult<PathBuf> {
    let mut template = MissionTemplate::default();
    if let Some(m) = args.antennas {
        template.uav.m = m;
    }
    if let Some(t) = args.horizon {
        template.uav.t = t;
    }
    let s = generate_scenario(args.seed, args.k, args.side, &template)?;
    run.scenario_hash = Some(scenario_hash(&s));
    run.seeds = vec![args.seed];
    run.settings = json!({ "K": args.k, "side_m": args.side });
    run.write(&args.out, s.to_toml().as_bytes())?;
    Ok(args.out.clone())
}

fn solve_p2(args: &SolveP2Args, run: &mut Run) -> CliResult<PathBuf> {
    let s = load(run, &args.scenario.scenario)?;
    let cfg = HoverConfig::default();
    run.settings = json!({ "mode": args.mode, "hover": cfg });
    let plan = solve_p2_benchmark(&s, args.mode, &cfg)?;
    info!("r = {:.6} bps/Hz at {} hover points", plan.rate, plan.hover_count());
    run.write_json(&args.out, &plan)?;
    check(args.strict, plan.converged, "dual search")?;
    Ok(args.out.clone())
}

fn solve_p3(args: &SolveP3Args, run: &mut Run) -> CliResult<PathBuf> {
    let s = load(run, &args.scenario.scenario)?;
    let text = std::fs::read_to_string(&args.trajectory).map_err(|source| uavdh::Error::Io {
        path: args.trajectory.clone(),
        source,
    })?;
    let traj = Trajectory::from_csv(&text, &s)?;
    traj.validate(&s)?;
    let cfg = ScheduleConfig::default();
    run.settings = json!({ "mode": args.mode, "schedule": cfg });
    let sched = solve_p3_mode(&s, &traj.points, args.mode, &cfg)?;
    info!("r = {:.6} bps/Hz", sched.rate);
    run.write_json(&args.out, &sched)?;
    check(args.strict, sched.converged, "dual search")?;
    Ok(args.out.clone())
}

fn solve_p1_cmd(args: &SolveP1Args, run: &mut Run) -> CliResult<PathBuf> {
    let s = load(run, &args.scenario.scenario)?;
    if !(args.tolerance > 0.0) || args.max_iters == 0 {
        return Err(CliError::Input("tolerance and max-iters must be positive".into()));
    }
    let cfg = BcdConfig {
        mode: args.mode,
        tolerance: args.tolerance,
        max_iters: args.max_iters,
        ..BcdConfig::default()
    };
    run.settings = json!({ "bcd": cfg });
    let mission = solve_p1(&s, &cfg)?;
    info!("r = {:.6} bps/Hz (bound {:.6})", mission.rate, mission.upper_bound);
    run.write_json(&args.out, &mission)?;
    if let Some(p) = &args.trace {
        let mut t = Table::new(&["iteration", "rate_bpshz", "upper_bound_bpshz"]);
        for (i, r) in mission.trace.iter().enumerate() {
            t.row([i.to_string(), r.to_string(), mission.upper_bound.to_string()]);
        }
        run.write_csv(p, t)?;
    }
    if let Some(p) = &args.trajectory_out {
        run.write(p, mission.trajectory.to_csv().as_bytes())?;
    }
    check(args.strict, mission.converged, "alternating optimization")?;
    Ok(args.out.clone())
}

fn simulate(args: &SimulateArgs, run: &mut Run) -> CliResult<PathBuf> {
    let s = load(run, &args.scenario.scenario)?;
    if let Some(&bad) = args.active.iter().find(|&&k| k >= s.num_sns()) {
        return Err(CliError::Input(format!("SN index {bad} out of range (K = {})", s.num_sns())));
    }
    let power = args.power.unwrap_or(s.radio.pbar);
    let links: Vec<Link> = args.active.iter().map(|&k| Link::new(args.uav_xy, s.altitude, s.sns[k])).collect();
    let geometry = UraGeometry {
        los: args.los.into(),
        ..UraGeometry::default()
    };
    run.seeds = vec![args.seed];
    run.settings = json!({ "draws": args.draws, "power_w": power, "geometry": geometry });
    let report = rate_monte_carlo(&links, &vec![power; links.len()], &s.radio, &geometry, args.draws, args.seed)?;
    let mut t = Table::new(&["sn_id", "closed_form_bpshz", "mc_mean_bpshz", "mc_se_bpshz"]);
    for (k, r) in args.active.iter().zip(&report.rates) {
        t.row([k.to_string(), r.closed_form.to_string(), r.mc_mean.to_string(), r.mc_se.to_string()]);
    }
    run.write_csv(&args.out, t)?;
    Ok(args.out.clone())
}

fn tradeoff(args: &TradeoffArgs, run: &mut Run) -> CliResult<PathBuf> {
    let s = load(run, &args.scenario.scenario)?;
    if args.pbar.iter().any(|p| !(*p > 0.0)) || !(args.throughput_mbits > 0.0) {
        return Err(CliError::Input("power limits and throughput must be positive".into()));
    }
    let cfg = BcdConfig {
        mode: args.mode,
        ..BcdConfig::default()
    };
    let params = PropulsionParams::default();
    run.settings = json!({ "bcd": cfg, "throughput_mbits": args.throughput_mbits, "t_max_s": args.t_max, "propulsion": params });
    let curve = power_energy_tradeoff(&s, &args.pbar, args.throughput_mbits * 1e6, args.t_max, &cfg, &params)?;
    let mut t = Table::new(&["pbar_w", "t_min_s", "energy_j", "feasible"]);
    for p in &curve {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        t.row([p.pbar.to_string(), opt(p.t_min), opt(p.energy), p.feasible().to_string()]);
    }
    run.write_csv(&args.out, t)?;
    Ok(args.out.clone())
}

fn dispatch(cli: &Cli, run: &mut Run) -> CliResult<PathBuf> {
    match &cli.command {
        Command::Generate(a) => generate(a, run),
        Command::SolveP2(a) => solve_p2(a, run),
        Command::SolveP3(a) => solve_p3(a, run),
        Command::SolveP1(a) => solve_p1_cmd(a, run),
        Command::SimulateRate(a) => simulate(a, run),
        Command::EnergyTradeoff(a) => tradeoff(a, run),
        Command::Reproduce(a) => reproduce::run(a, run),
    }
}

fn name(c: &Command) -> &'static str {
    match c {
        Command::Generate(_) => "generate",
        Command::SolveP2(_) => "solve-p2",
        Command::SolveP3(_) => "solve-p3",
        Command::SolveP1(_) => "solve-p1",
        Command::SimulateRate(_) => "simulate-rate",
        Command::EnergyTradeoff(_) => "energy-tradeoff",
        Command::Reproduce(_) => "reproduce",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error[bad_input]: --threads must be at least 1");
            return ExitCode::from(output::EXIT_BAD_INPUT as u8);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool set once");
    }
    let mut run = Run::new(name(&cli.command));
    let result = dispatch(&cli, &mut run).and_then(|primary| run.finish(&primary).map(|_| primary));
    match result {
        Ok(primary) => {
            println!("{}", primary.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            run.abort();
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(e.code() as u8)
        }
    }
}
