use serde::{Deserialize, Serialize};

use super::{derived_constants, DerivedConstants, ValueGrid};
use crate::error::{Error, Result};
use crate::market::{cap_open, mm_optimal_spread, ModelParams, OptionSpec, Side};

/// Optimal per-trade incentive on `side` of `spec`:
///
/// `Z* = (1 / (a - b)) log(b x2 U(t, Q) / (a x1 U(t, Q - delta phi)))`
///
/// with `U = -U~^{-1/beta}`. Evaluated in log space; the two `U` values are
/// never formed explicitly.
pub fn optimal_trade_incentive(
    grid: &ValueGrid,
    consts: &DerivedConstants,
    option: usize,
    spec: &OptionSpec,
    side: Side,
    t: f64,
    agg_q: f64,
) -> Result<f64> {
    if !cap_open(side, agg_q, grid.q_bar()) {
        return Err(Error::invalid(format!(
            "{side} side of option {option} is shut at Q = {agg_q}"
        )));
    }
    let ln_here = grid.ln_value_at(t, agg_q)?;
    let ln_after = grid.ln_value_at(t, agg_q - spec.delta * side.phi())?;
    Ok(incentive_from_logs(consts, option, ln_here, ln_after))
}

#[inline]
fn incentive_from_logs(
    consts: &DerivedConstants,
    option: usize,
    ln_here: f64,
    ln_after: f64,
) -> f64 {
    // log(U / U') = -(1/beta) (log U~ - log U~'), and beta (a - b) = b
    consts.incentive_offset(option) - (ln_here - ln_after) / consts.b
}

/// Share of each option's price risk taken over by the exchange:
/// `Z*^C = -gamma / (gamma + eta) Q^k`.
#[inline]
pub fn inventory_incentive(q_option: f64, params: &ModelParams) -> f64 {
    -params.gamma / (params.gamma + params.eta) * q_option
}

/// The solved contract: value grid plus everything needed to turn it into
/// incentives and quotes.
#[derive(Debug, Clone)]
pub struct IncentiveSurface {
    grid: ValueGrid,
    consts: DerivedConstants,
    params: ModelParams,
    specs: Vec<OptionSpec>,
}

impl IncentiveSurface {
    /// Wraps a solved grid and audits the quote bound at every stored node:
    /// `max |-Z* + gamma^{-1} log(1 + sigma gamma / C)| < delta_max`.
    pub fn new(grid: ValueGrid, params: &ModelParams, specs: &[OptionSpec]) -> Result<Self> {
        let consts = derived_constants(params, specs)?;
        let surface = IncentiveSurface {
            grid,
            consts,
            params: params.clone(),
            specs: specs.to_vec(),
        };
        let worst = surface.bound_audit();
        if !(worst < params.delta_max) {
            return Err(Error::numerical(format!(
                "bound condition violated: max |-Z* + spread intercept| = {worst} >= delta_max = {}",
                params.delta_max
            )));
        }
        Ok(surface)
    }

    pub fn grid(&self) -> &ValueGrid {
        &self.grid
    }

    pub fn consts(&self) -> &DerivedConstants {
        &self.consts
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn specs(&self) -> &[OptionSpec] {
        &self.specs
    }

    pub fn trade_incentive(&self, option: usize, side: Side, t: f64, agg_q: f64) -> Result<f64> {
        optimal_trade_incentive(
            &self.grid,
            &self.consts,
            option,
            &self.specs[option],
            side,
            t,
            agg_q,
        )
    }

    /// Market maker's induced half-spread.
    pub fn spread(&self, option: usize, side: Side, t: f64, agg_q: f64) -> Result<f64> {
        Ok(mm_optimal_spread(
            self.trade_incentive(option, side, t, agg_q)?,
            &self.params,
        ))
    }

    pub fn inventory_incentive(&self, q_option: f64) -> f64 {
        inventory_incentive(q_option, &self.params)
    }

    /// `Z*` for every option and side at `(t, agg_q)`, `None` on shut sides.
    /// Shares the `log U~(t, agg_q)` lookup across options.
    pub fn trade_incentives_at(&self, t: f64, agg_q: f64) -> Result<Vec<[Option<f64>; 2]>> {
        let mut out = vec![[None; 2]; self.specs.len()];
        self.trade_incentives_into(t, agg_q, &mut out)?;
        Ok(out)
    }

    /// [`trade_incentives_at`](Self::trade_incentives_at) into a caller buffer
    /// of one entry per option.
    pub fn trade_incentives_into(
        &self,
        t: f64,
        agg_q: f64,
        out: &mut [[Option<f64>; 2]],
    ) -> Result<()> {
        let q_bar = self.grid.q_bar();
        out.fill([None; 2]);
        if !Side::ALL.iter().any(|&s| cap_open(s, agg_q, q_bar)) {
            return Ok(());
        }
        let ln_here = self.grid.ln_value_at(t, agg_q)?;
        for (k, spec) in self.specs.iter().enumerate() {
            for side in Side::ALL {
                if cap_open(side, agg_q, q_bar) {
                    let ln_after = self.grid.ln_value_at(t, agg_q - spec.delta * side.phi())?;
                    out[k][side.index()] =
                        Some(incentive_from_logs(&self.consts, k, ln_here, ln_after));
                }
            }
        }
        Ok(())
    }

    /// `Z*` at stored slice `m`, node `j`; `None` if the side is shut there.
    pub fn incentive_at_node(&self, m: usize, j: usize, option: usize, side: Side) -> Option<f64> {
        let q = self.grid.q_node(j);
        if !cap_open(side, q, self.grid.q_bar()) {
            return None;
        }
        let target = q - self.specs[option].delta * side.phi();
        let after = self.grid.value_in_slice(m, target).ok()?;
        Some(incentive_from_logs(
            &self.consts,
            option,
            self.grid.value(m, j).ln(),
            after.ln(),
        ))
    }

    /// Largest `|-Z* + gamma^{-1} log(1 + sigma gamma / C)|` over stored
    /// slices, nodes, options and open sides.
    pub fn bound_audit(&self) -> f64 {
        let intercept = self.params.spread_intercept();
        let mut worst: f64 = 0.0;
        for m in 0..self.grid.times().len() {
            for j in 0..self.grid.n_q() {
                for k in 0..self.specs.len() {
                    for side in Side::ALL {
                        if let Some(z) = self.incentive_at_node(m, j, k, side) {
                            worst = worst.max((intercept - z).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    /// Stored slice index closest to `t`.
    pub fn slice_index(&self, t: f64) -> usize {
        let times = self.grid.times();
        let mut best = 0;
        for (m, &s) in times.iter().enumerate() {
            if (s - t).abs() < (times[best] - t).abs() {
                best = m;
            }
        }
        best
    }
}

/// Induced half-spreads for one option over the inventory grid; `None` where
/// the side is shut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionSpreads {
    pub ask: Vec<Option<f64>>,
    pub bid: Vec<Option<f64>>,
}

impl OptionSpreads {
    /// Quoted bid-ask spread `delta^a + delta^b` at node `j`.
    pub fn total(&self, j: usize) -> Option<f64> {
        Some(self.ask[j]? + self.bid[j]?)
    }
}

/// Spread-versus-inventory table at one time slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadTable {
    pub t: f64,
    pub q: Vec<f64>,
    pub options: Vec<OptionSpreads>,
}

/// Half-spreads `delta^{k,i}(Q) = mm_optimal_spread(Z*^{k,i}(t, Q))` for every
/// option and side over the inventory nodes, at the stored slice nearest `t`.
pub fn spread_surface(surface: &IncentiveSurface, t: f64) -> Result<SpreadTable> {
    let m = surface.slice_index(t);
    let grid = surface.grid();
    let params = surface.params();
    let mut options = Vec::with_capacity(surface.specs().len());
    for k in 0..surface.specs().len() {
        let mut per_side = [Vec::new(), Vec::new()];
        for side in Side::ALL {
            per_side[side.index()] = (0..grid.n_q())
                .map(|j| {
                    surface
                        .incentive_at_node(m, j, k, side)
                        .map(|z| mm_optimal_spread(z, params))
                })
                .collect();
        }
        let [ask, bid] = per_side;
        options.push(OptionSpreads { ask, bid });
    }
    Ok(SpreadTable {
        t: grid.times()[m],
        q: grid.q_nodes().collect(),
        options,
    })
}
