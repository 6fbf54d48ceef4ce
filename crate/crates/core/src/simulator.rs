//! Full market simulation under a solved contract.
//!
//! Order flow is generated by thinning: candidate arrivals at a constant
//! bound rate are accepted with probability `lambda / bound`. Quotes are
//! refreshed at every event and on a fixed `micro_dt` grid and held constant
//! in between, so the contract's Hamiltonian accrual integrates exactly the
//! intensities that drive the flow. Positions only change at events, so the
//! underlying is sampled exactly at candidate arrivals and nowhere else.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contract::{inventory_incentive, path_rng, IncentiveSurface};
use crate::error::{Error, Result};
use crate::market::{
    bachelier_price, base_intensity, cap_open, mm_optimal_spread, side_gain, MarketState,
    ModelParams, Side,
};
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Quote refresh step; `None` means `T / 10^4`.
    pub micro_dt: Option<f64>,
    /// Added to every optimal half-spread (0 for the best response).
    pub quote_offset: f64,
    /// Pay no per-trade incentives (`Z = 0`), keeping the risk-sharing part.
    pub zero_trade_incentives: bool,
    /// Keep `(t, S)` at every candidate arrival.
    pub record_spot: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            micro_dt: None,
            quote_offset: 0.0,
            zero_trade_incentives: false,
            record_spot: false,
        }
    }
}

impl SimConfig {
    pub fn micro_dt_for(&self, horizon: f64) -> f64 {
        self.micro_dt.unwrap_or(horizon / 1e4)
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        let dt = self.micro_dt_for(horizon);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("micro_dt = {dt} must be > 0")));
        }
        if !self.quote_offset.is_finite() {
            return Err(Error::invalid("quote_offset must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub option: usize,
    pub side: Side,
    /// Position in `option` after the trade.
    pub inventory_after: i64,
    pub agg_q_after: f64,
    /// Trade incentive paid on this event.
    pub z: f64,
    /// Half-spread actually quoted.
    pub spread: f64,
}

/// One simulated path and everything accrued along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub events: Vec<Event>,
    pub spot_path: Vec<(f64, f64)>,
    pub final_state_inventories: Vec<i64>,
    pub counts: Vec<[u64; 2]>,
    pub final_agg_q: f64,
    pub max_abs_agg_q: f64,
    pub final_spot: f64,
    /// `Y_0 = -log(-R)`
    pub y0: f64,
    /// `sum Z dN`
    pub y_trades: f64,
    /// `sum_k Z^C_k dC_k`
    pub y_hedge: f64,
    /// `int 1/2 gamma sigma^2 (sum_k delta_k (Z^C_k + Q^k))^2 dr`
    pub y_quadratic: f64,
    /// `int H dr`
    pub y_hamiltonian: f64,
    /// Contract value accumulated step by step.
    pub y_t: f64,
    /// `sum delta dN`
    pub pnl_spread: f64,
    /// `int Q dS`
    pub pnl_inventory: f64,
    /// Cash account of the market maker.
    pub cash: f64,
    /// Cash plus marked-to-market positions.
    pub pnl_cash: f64,
    /// `N_T = sum_k c_k N^k`
    pub flow_value: f64,
    /// `L_T = int omega (delta - delta_inf) dN`
    pub penalty: f64,
}

impl Trajectory {
    pub fn pnl(&self) -> f64 {
        self.pnl_spread + self.pnl_inventory
    }

    /// `Y_T` rebuilt from its stored pieces.
    pub fn reconstructed_y(&self) -> f64 {
        self.y0 + self.y_trades + self.y_hedge + self.y_quadratic - self.y_hamiltonian
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }
}

#[derive(Debug, Clone)]
struct Quotes {
    /// `[option][side]`
    incentives: Vec<[Option<f64>; 2]>,
    z: Vec<[f64; 2]>,
    spread: Vec<[f64; 2]>,
    rate: Vec<[f64; 2]>,
    total_rate: f64,
    hamiltonian: f64,
}

impl Quotes {
    fn new(n: usize) -> Self {
        Quotes {
            incentives: vec![[None; 2]; n],
            z: vec![[0.0; 2]; n],
            spread: vec![[0.0; 2]; n],
            rate: vec![[0.0; 2]; n],
            total_rate: 0.0,
            hamiltonian: 0.0,
        }
    }
}

/// A surface prepared for simulation: thinning bound and initial option
/// prices are computed once and shared across paths.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    surface: &'a IncentiveSurface,
    cfg: SimConfig,
    micro_dt: f64,
    bound: f64,
    mids: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(surface: &'a IncentiveSurface, cfg: &SimConfig) -> Result<Self> {
        let params = surface.params();
        cfg.validate(params.horizon)?;
        let specs = surface.specs();
        let mids = specs
            .iter()
            .map(|s| bachelier_price(params.spot, s.strike, s.maturity, params.sigma))
            .collect::<Result<Vec<_>>>()?;
        let mut sim = Simulator {
            surface,
            cfg: cfg.clone(),
            micro_dt: cfg.micro_dt_for(params.horizon),
            bound: f64::INFINITY,
            mids,
        };
        sim.bound = sim.thinning_bound();
        if !sim.bound.is_finite() {
            return Err(Error::numerical("thinning bound is not finite"));
        }
        Ok(sim)
    }

    /// Candidate rate: twice the largest per-side intensity over the stored
    /// nodes, summed over options and sides. Quotes both with and without
    /// trade incentives are covered and widened quotes are ignored, so
    /// variants of one surface share the same candidate stream.
    fn thinning_bound(&self) -> f64 {
        let grid = self.surface.grid();
        let params = self.surface.params();
        let dm = params.delta_max;
        let shift = self.cfg.quote_offset.min(0.0);
        let mut bound = 0.0;
        for (k, spec) in self.surface.specs().iter().enumerate() {
            for side in Side::ALL {
                let mut best = base_intensity(
                    (mm_optimal_spread(0.0, params) + shift).clamp(-dm, dm),
                    spec.fee,
                    params,
                );
                for m in 0..grid.times().len() {
                    for j in 0..grid.n_q() {
                        if let Some(z) = self.surface.incentive_at_node(m, j, k, side) {
                            let d = (mm_optimal_spread(z, params) + shift).clamp(-dm, dm);
                            best = best.max(base_intensity(d, spec.fee, params));
                        }
                    }
                }
                bound += 2.0 * best;
            }
        }
        bound
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn micro_dt(&self) -> f64 {
        self.micro_dt
    }

    fn quoted(&self, optimal: f64) -> f64 {
        let dm = self.surface.params().delta_max;
        (optimal + self.cfg.quote_offset).clamp(-dm, dm)
    }

    fn refresh(&self, t: f64, agg_q: f64, out: &mut Quotes) -> Result<()> {
        let params = self.surface.params();
        let specs = self.surface.specs();
        if self.cfg.zero_trade_incentives {
            let q_bar = params.q_bar_f64();
            for slot in out.incentives.iter_mut() {
                *slot = Side::ALL.map(|s| cap_open(s, agg_q, q_bar).then_some(0.0));
            }
        } else {
            self.surface
                .trade_incentives_into(t, agg_q, &mut out.incentives)?;
        }
        out.total_rate = 0.0;
        out.hamiltonian = 0.0;
        out.z.fill([0.0; 2]);
        out.spread.fill([0.0; 2]);
        out.rate.fill([0.0; 2]);
        for (k, spec) in specs.iter().enumerate() {
            for side in Side::ALL {
                let i = side.index();
                let Some(z) = out.incentives[k][i] else {
                    continue;
                };
                let optimal = mm_optimal_spread(z, params);
                let spread = self.quoted(optimal);
                let rate = base_intensity(spread, spec.fee, params);
                let gain = if spread == optimal {
                    -(-params.gamma * (z + optimal)).exp_m1() / params.gamma * rate
                } else {
                    side_gain(optimal, z, spec.fee, params)
                };
                out.z[k][i] = z;
                out.spread[k][i] = spread;
                out.rate[k][i] = rate;
                out.total_rate += rate;
                out.hamiltonian += gain;
            }
        }
        if out.total_rate > self.bound {
            return Err(Error::numerical(format!(
                "intensity {} above thinning bound {} at t = {t}, Q = {agg_q}",
                out.total_rate, self.bound
            )));
        }
        Ok(())
    }

    /// Runs path `path` of the stream family `seed`.
    pub fn run(&self, seed: u64, path: u64) -> Result<Trajectory> {
        let mut rng = path_rng(seed, path);
        self.run_with(&mut rng)
    }

    /// Paths `0..n_paths` of `seed`, in path order whatever the thread layout.
    pub fn run_batch(&self, n_paths: usize, seed: u64) -> Result<Vec<Trajectory>> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| self.run(seed, i))
            .collect()
    }

    // Each candidate consumes one exponential, one normal and one uniform
    // whatever the refresh grid or quote offset, so runs that differ only in
    // those settings share their random numbers.
    fn run_with(&self, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
        let params = self.surface.params();
        let specs = self.surface.specs();
        let horizon = params.horizon;
        let mut state = MarketState::new(specs.len(), params.spot);
        let y0 = params.initial_contract_value();
        let mut tr = Trajectory {
            events: Vec::new(),
            spot_path: Vec::new(),
            final_state_inventories: Vec::new(),
            counts: Vec::new(),
            final_agg_q: 0.0,
            max_abs_agg_q: 0.0,
            final_spot: params.spot,
            y0,
            y_trades: 0.0,
            y_hedge: 0.0,
            y_quadratic: 0.0,
            y_hamiltonian: 0.0,
            y_t: y0,
            pnl_spread: 0.0,
            pnl_inventory: 0.0,
            cash: 0.0,
            pnl_cash: 0.0,
            flow_value: 0.0,
            penalty: 0.0,
        };
        if self.cfg.record_spot {
            tr.spot_path.push((0.0, state.spot));
        }
        let n_refresh = (horizon / self.micro_dt).ceil().max(1.0) as u64;
        let mut next = 1u64;
        let mut quoted_at = 0.0;
        let mut quotes = Quotes::new(specs.len());
        self.refresh(0.0, 0.0, &mut quotes)?;
        loop {
            let candidate = state.t + rng.sample::<f64, _>(Exp1) / self.bound;
            let stop = candidate.min(horizon);

            while next <= n_refresh {
                let r = if next == n_refresh {
                    horizon
                } else {
                    next as f64 * self.micro_dt
                };
                if r > stop {
                    break;
                }
                self.accrue_hamiltonian(&mut tr, &quotes, r - quoted_at);
                quoted_at = r;
                next += 1;
                if r < horizon {
                    self.refresh(r, state.agg_q, &mut quotes)?;
                }
            }
            self.accrue_hamiltonian(&mut tr, &quotes, stop - quoted_at);
            quoted_at = stop;
            self.diffuse(&mut state, &mut tr, stop, rng);
            if candidate >= horizon {
                break;
            }

            let u = rng.random::<f64>() * self.bound;
            if u >= quotes.total_rate {
                continue;
            }
            let (k, side) = pick(&quotes, u);
            let i = side.index();
            let spec = &specs[k];
            let z = quotes.z[k][i];
            let spread = quotes.spread[k][i];
            let mid = self.mids[k] + spec.delta * (state.spot - params.spot);

            tr.y_trades += z;
            tr.y_t += z;
            tr.pnl_spread += spread;
            tr.cash += side.phi() * mid + spread;
            tr.flow_value += spec.weight;
            tr.penalty += params.omega * (spread - spec.spread_threshold);
            state.apply_trade(k, side, specs);
            tr.max_abs_agg_q = tr.max_abs_agg_q.max(state.agg_q.abs());
            tr.events.push(Event {
                t: state.t,
                option: k,
                side,
                inventory_after: state.inventories[k],
                agg_q_after: state.agg_q,
                z,
                spread,
            });
            self.refresh(state.t, state.agg_q, &mut quotes)?;
        }

        tr.final_spot = state.spot;
        tr.final_agg_q = state.agg_q;
        tr.pnl_cash = tr.cash
            + specs
                .iter()
                .zip(&state.inventories)
                .zip(&self.mids)
                .map(|((s, &q), c0)| q as f64 * (c0 + s.delta * (state.spot - params.spot)))
                .sum::<f64>();
        tr.final_state_inventories = state.inventories;
        tr.counts = state.counts;
        Ok(tr)
    }

    fn accrue_hamiltonian(&self, tr: &mut Trajectory, quotes: &Quotes, dt: f64) {
        if dt > 0.0 {
            let h = quotes.hamiltonian * dt;
            tr.y_hamiltonian += h;
            tr.y_t -= h;
        }
    }

    /// Moves the clock to `t1` with positions frozen: Brownian move of the
    /// underlying and the accruals that depend on it.
    fn diffuse(&self, state: &mut MarketState, tr: &mut Trajectory, t1: f64, rng: &mut ChaCha8Rng) {
        let dt = t1 - state.t;
        let params = self.surface.params();
        let specs = self.surface.specs();
        let ds = params.sigma * dt.max(0.0).sqrt() * rng.sample::<f64, _>(StandardNormal);
        let mut hedge = 0.0;
        let mut exposure = 0.0;
        for (spec, &q) in specs.iter().zip(&state.inventories) {
            let zc = inventory_incentive(q as f64, params);
            hedge += zc * spec.delta * ds;
            exposure += spec.delta * (zc + q as f64);
        }
        let quadratic = 0.5 * params.gamma * params.sigma * params.sigma * exposure * exposure * dt;
        tr.y_hedge += hedge;
        tr.y_quadratic += quadratic;
        tr.y_t += hedge + quadratic;
        tr.pnl_inventory += state.agg_q * ds;
        state.spot += ds;
        state.t = t1;
        if self.cfg.record_spot {
            tr.spot_path.push((t1, state.spot));
        }
    }
}

fn pick(quotes: &Quotes, mut u: f64) -> (usize, Side) {
    let mut last = None;
    for (k, r) in quotes.rate.iter().enumerate() {
        for side in Side::ALL {
            let rate = r[side.index()];
            if rate > 0.0 {
                if u < rate {
                    return (k, side);
                }
                last = Some((k, side));
            }
            u -= rate;
        }
    }
    // u < total_rate, so only rounding reaches this point
    last.expect("accepted candidate with zero total rate")
}

/// One path under `surface` with the stream `(seed, 0)`.
pub fn simulate_trajectory(
    surface: &IncentiveSurface,
    cfg: &SimConfig,
    seed: u64,
) -> Result<Trajectory> {
    Simulator::new(surface, cfg)?.run(seed, 0)
}

/// `n_paths` independent paths; path `i` uses stream `(seed, i)` whatever the
/// thread layout, and results come back in path order.
pub fn simulate_batch(
    surface: &IncentiveSurface,
    cfg: &SimConfig,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    Simulator::new(surface, cfg)?.run_batch(n_paths, seed)
}

/// Market maker's expected utility `E[-exp(-gamma (Y_T + PnL_T))]`.
pub fn estimate_mm_utility(trajectories: &[Trajectory], params: &ModelParams) -> Estimate {
    let samples: Vec<f64> = trajectories
        .iter()
        .map(|t| -(-params.gamma * (t.y_t + t.pnl())).exp())
        .collect();
    Estimate::from_samples(&samples)
}

/// Exchange's expected utility `E[-exp(-eta (N_T - L_T - Y_T))]`.
pub fn estimate_exchange_utility(trajectories: &[Trajectory], params: &ModelParams) -> Estimate {
    let samples: Vec<f64> = trajectories
        .iter()
        .map(|t| -(-params.eta * (t.flow_value - t.penalty - t.y_t)).exp())
        .collect();
    Estimate::from_samples(&samples)
}
