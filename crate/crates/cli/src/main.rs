use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use maketake::io::{
    load_config, load_options, read_trade_report, read_value_grid, write_events, write_incentives,
    write_json, write_probes, write_spread_table, write_value_grid, ProbeRow, RunConfig,
    StrikesReport,
};
use maketake::simulator::Simulator;
use maketake::{
    build_empirical_distribution, derived_constants, estimate_exchange_utility,
    estimate_mm_utility, lloyd_best_of, solve_value_grid, spread_surface, value_monte_carlo_with,
    Error, Estimate, IncentiveSurface, ModelParams, OptionSpec, Result, ValueGrid,
};

#[derive(Parser)]
#[command(
    name = "maketake",
    version,
    about = "Strike selection and make-take contract design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choose strikes per maturity bucket from a trade report.
    Quantize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the contract: value grid, incentives and optional Monte Carlo probes.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Spread-versus-inventory table at t = 0 from a solved value grid.
    Spreads {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate the market under the optimal contract.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Quantize { config } => with_config(config, quantize),
        Command::Solve { config } => with_config(config, solve),
        Command::Spreads { config } => with_config(config, spreads),
        Command::Simulate { config } => with_config(config, simulate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn with_config(path: &Path, run: fn(&RunConfig) -> Result<()>) -> Result<()> {
    let cfg = load_config(path)?;
    let out = &cfg.paths.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    run(&cfg)
}

fn specs(cfg: &RunConfig) -> Result<Vec<OptionSpec>> {
    match &cfg.paths.options {
        Some(path) => load_options(path, &cfg.model),
        None => Ok(OptionSpec::reference_book()),
    }
}

fn quantize(cfg: &RunConfig) -> Result<()> {
    let trades = cfg
        .paths
        .trades
        .as_ref()
        .ok_or_else(|| Error::Config("[paths] trades is required by quantize".into()))?;
    let rows = read_trade_report(trades)?;
    let q = &cfg.quantizer;
    let buckets = q.maturity_buckets()?;
    let mut written = 0;
    for (label, points) in buckets.group(&rows) {
        if points.iter().all(|&(_, c)| c == 0) {
            info!("bucket {label}: no trades, skipped");
            continue;
        }
        let dist = build_empirical_distribution(&points, None, q.upper)?;
        let best = lloyd_best_of(&dist, q.n, q.p, &q.lloyd(), q.seed)?;
        if !best.converged {
            warn!(
                "bucket {label}: no convergence after {} iterations",
                best.iterations
            );
        }
        let report = StrikesReport {
            maturity_bucket: label.clone(),
            p: q.p,
            epsilon: q.epsilon,
            n: q.n,
            strikes: best.strikes,
            regret: best.regret,
            iterations: best.iterations,
            converged: best.converged,
        };
        write_json(
            &cfg.paths.output_dir.join(format!("strikes_{label}.json")),
            &report,
        )?;
        written += 1;
    }
    if written == 0 {
        return Err(Error::Invalid(
            "empty distribution: no trades in any bucket".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveSummary {
    time_step: f64,
    h_q: f64,
    q_edge: f64,
    u_tilde_0_0: f64,
    exchange_value_0_0: f64,
    bound_audit: f64,
    delta_max: f64,
    constants: maketake::DerivedConstants,
}

fn solved_surface(cfg: &RunConfig, specs: &[OptionSpec]) -> Result<IncentiveSurface> {
    let grid = solve_value_grid(&cfg.model, specs, &cfg.solver.grid())?;
    IncentiveSurface::new(grid, &cfg.model, specs)
}

fn default_probes(params: &ModelParams) -> Vec<[f64; 2]> {
    let half = params.q_bar_f64() / 2.0;
    let mut out = Vec::new();
    for t in [0.0, params.horizon / 4.0, params.horizon / 2.0] {
        for q in [-half, 0.0, half] {
            out.push([t, q]);
        }
    }
    out
}

fn solve(cfg: &RunConfig) -> Result<()> {
    let specs = specs(cfg)?;
    let surface = solved_surface(cfg, &specs)?;
    let grid = surface.grid();
    let out = &cfg.paths.output_dir;
    write_value_grid(&out.join("value_grid.csv"), grid)?;
    let rows = write_incentives(&out.join("incentives.csv"), &surface, cfg.solver.export_dt)?;
    info!("{rows} incentive rows");
    let u00 = grid.value_at(0.0, 0.0)?;
    let summary = SolveSummary {
        time_step: grid.step(),
        h_q: grid.h_q(),
        q_edge: grid.q_edge(),
        u_tilde_0_0: u00,
        exchange_value_0_0: surface.consts().exchange_value(u00),
        bound_audit: surface.bound_audit(),
        delta_max: cfg.model.delta_max,
        constants: surface.consts().clone(),
    };
    write_json(&out.join("solve.json"), &summary)?;

    let s = &cfg.solver;
    if s.n_paths > 0 {
        let probes = if s.probes.is_empty() {
            default_probes(&cfg.model)
        } else {
            s.probes.clone()
        };
        let consts = derived_constants(&cfg.model, &specs)?;
        let rows = probes
            .iter()
            .map(|&[t, q]| {
                let mc =
                    value_monte_carlo_with(&consts, &cfg.model, &specs, t, q, s.n_paths, s.seed)?;
                Ok(ProbeRow {
                    t,
                    q,
                    u_fd: grid.value_at(t, q)?,
                    u_mc: mc.mean,
                    stderr: mc.stderr,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        write_probes(&out.join("probes.csv"), &rows)?;
    }
    Ok(())
}

fn spreads(cfg: &RunConfig) -> Result<()> {
    let specs = specs(cfg)?;
    let out = &cfg.paths.output_dir;
    let grid: ValueGrid = read_value_grid(&out.join("value_grid.csv"), cfg.model.q_bar_f64())?;
    if (grid.horizon() - cfg.model.horizon).abs() > 1e-9 * cfg.model.horizon {
        return Err(Error::Invalid(format!(
            "value grid horizon {} differs from configured horizon {}; run solve first",
            grid.horizon(),
            cfg.model.horizon
        )));
    }
    let surface = IncentiveSurface::new(grid, &cfg.model, &specs)?;
    let table = spread_surface(&surface, 0.0)?;
    write_spread_table(&out.join("spreads_t0.csv"), &table)
}

#[derive(Serialize)]
struct SimulationSummary {
    n_paths: usize,
    seed: u64,
    micro_dt: f64,
    thinning_bound: f64,
    y0: f64,
    mm_utility: Estimate,
    mm_target: f64,
    mm_z_score: f64,
    exchange_utility: Estimate,
    exchange_value_from_grid: f64,
    mean_y_t: f64,
    mean_pnl: f64,
    mean_flow_value: f64,
    mean_penalty: f64,
    mean_events: f64,
    max_abs_agg_q: f64,
    max_contract_reconstruction_error: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    s / n as f64
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let specs = specs(cfg)?;
    let surface = solved_surface(cfg, &specs)?;
    let m = &cfg.simulation;
    let sim = Simulator::new(&surface, &m.sim())?;
    let paths = sim.run_batch(m.n_paths, m.seed)?;
    let params = &cfg.model;
    let out = &cfg.paths.output_dir;
    write_events(
        &out.join("events.csv"),
        &paths[..m.export_paths.min(paths.len())],
    )?;

    let mm = estimate_mm_utility(&paths, params);
    let target = -(-params.gamma * params.initial_contract_value()).exp();
    let u00 = surface.grid().value_at(0.0, 0.0)?;
    let summary = SimulationSummary {
        n_paths: m.n_paths,
        seed: m.seed,
        micro_dt: sim.micro_dt(),
        thinning_bound: sim.bound(),
        y0: params.initial_contract_value(),
        mm_utility: mm,
        mm_target: target,
        mm_z_score: (mm.mean - target) / mm.stderr,
        exchange_utility: estimate_exchange_utility(&paths, params),
        exchange_value_from_grid: surface.consts().exchange_value(u00)
            * (params.eta * params.initial_contract_value()).exp(),
        mean_y_t: mean(paths.iter().map(|p| p.y_t)),
        mean_pnl: mean(paths.iter().map(|p| p.pnl())),
        mean_flow_value: mean(paths.iter().map(|p| p.flow_value)),
        mean_penalty: mean(paths.iter().map(|p| p.penalty)),
        mean_events: mean(paths.iter().map(|p| p.n_events() as f64)),
        max_abs_agg_q: paths.iter().map(|p| p.max_abs_agg_q).fold(0.0, f64::max),
        max_contract_reconstruction_error: paths
            .iter()
            .map(|p| (p.reconstructed_y() - p.y_t).abs())
            .fold(0.0, f64::max),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(())
}
