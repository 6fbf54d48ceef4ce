//! Market primitives: option specifications, Bachelier deltas, order-flow
//! intensities and the market maker's Hamiltonian and best response.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inventory values within this distance of the cap count as sitting on it.
/// Aggregated inventories are sums of float deltas and pick up rounding.
pub const CAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Ask,
    Bid,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::Ask, Side::Bid];

    /// `+1` for the ask, `-1` for the bid.
    #[inline]
    pub fn phi(self) -> f64 {
        match self {
            Side::Ask => 1.0,
            Side::Bid => -1.0,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Side::Ask => 0,
            Side::Bid => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Ask => "ask",
            Side::Bid => "bid",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ask" | "a" => Ok(Side::Ask),
            "bid" | "b" => Ok(Side::Bid),
            _ => Err(Error::invalid(format!("unknown side {s:?}"))),
        }
    }
}

/// Whether order flow on `side` is allowed at aggregated inventory `agg_q`:
/// `phi(side) * agg_q > -q_bar`.
#[inline]
pub fn cap_open(side: Side, agg_q: f64, q_bar: f64) -> bool {
    side.phi() * agg_q > -q_bar + CAP_TOL
}

/// One listed call option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    /// Strike, in percent of spot.
    pub strike: f64,
    /// Time to maturity, same unit as the horizon.
    pub maturity: f64,
    /// Frozen delta, in (0, 1).
    pub delta: f64,
    /// Exchange fee per market order.
    pub fee: f64,
    /// Value the exchange attaches to one trade on this option.
    pub weight: f64,
    /// Spread level the exchange would like the market maker to beat.
    pub spread_threshold: f64,
}

impl OptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta {} must lie in (0, 1)",
                self.delta
            )));
        }
        if !(self.fee >= 0.0) {
            return Err(Error::invalid(format!("fee {} must be >= 0", self.fee)));
        }
        if !(self.weight >= 0.0) {
            return Err(Error::invalid(format!(
                "weight {} must be >= 0",
                self.weight
            )));
        }
        if !(self.spread_threshold > 0.0) {
            return Err(Error::invalid(format!(
                "spread threshold {} must be > 0",
                self.spread_threshold
            )));
        }
        Ok(())
    }

    /// The three-option book used in the numerical study: at, in and out of
    /// the money, with fees `[0.5, 0.8, 0.8]`, thresholds `[2, 3, 3]` and
    /// deltas `[0.5, 0.8, 0.2]`. Weights default to zero.
    pub fn reference_book() -> Vec<OptionSpec> {
        let make = |strike, delta, fee, spread_threshold| OptionSpec {
            strike,
            maturity: 2_592_000.0,
            delta,
            fee,
            weight: 0.0,
            spread_threshold,
        };
        vec![
            make(100.0, 0.5, 0.5, 2.0),
            make(90.0, 0.8, 0.8, 3.0),
            make(110.0, 0.2, 0.8, 3.0),
        ]
    }
}

/// Global market and preference parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// `A`: trades per unit time at zero spread-plus-fee.
    pub intensity_scale: f64,
    /// `C`: intensity decay, paired with `sigma` as `C / sigma`.
    pub intensity_decay: f64,
    pub sigma: f64,
    /// Market maker risk aversion.
    pub gamma: f64,
    /// Exchange risk aversion.
    pub eta: f64,
    /// Weight of the liquidity penalty, in `[0, 1)`.
    pub omega: f64,
    /// Critical absolute aggregated inventory.
    pub q_bar: u32,
    pub horizon: f64,
    /// Admissible quotes satisfy `|delta| <= delta_max`.
    pub delta_max: f64,
    /// Market maker reservation utility, `< 0`.
    pub reservation_utility: f64,
    pub spot: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            intensity_scale: 1.5,
            intensity_decay: 0.3,
            sigma: 0.3,
            gamma: 0.01,
            eta: 1.0,
            omega: 0.0,
            q_bar: 40,
            horizon: 100.0,
            delta_max: 50.0,
            reservation_utility: -1.0,
            spot: 100.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("horizon", self.horizon),
            ("delta_max", self.delta_max),
            ("intensity_decay", self.intensity_decay),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} = {v} must be > 0")));
            }
        }
        if !(self.intensity_scale >= 0.0 && self.intensity_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "intensity_scale = {} must be >= 0",
                self.intensity_scale
            )));
        }
        if !(0.0..1.0).contains(&self.omega) {
            return Err(Error::invalid(format!(
                "omega = {} must lie in [0, 1)",
                self.omega
            )));
        }
        if self.q_bar < 1 {
            return Err(Error::invalid("q_bar must be >= 1"));
        }
        if !(self.reservation_utility < 0.0) {
            return Err(Error::invalid(format!(
                "reservation_utility = {} must be < 0",
                self.reservation_utility
            )));
        }
        if !self.spot.is_finite() {
            return Err(Error::invalid("spot must be finite"));
        }
        Ok(())
    }

    /// `C / sigma`.
    #[inline]
    pub fn decay_ratio(&self) -> f64 {
        self.intensity_decay / self.sigma
    }

    /// `sigma * gamma / C`.
    #[inline]
    pub fn risk_ratio(&self) -> f64 {
        self.sigma * self.gamma / self.intensity_decay
    }

    /// Unconstrained optimal half-spread at zero incentive:
    /// `gamma^{-1} log(1 + sigma gamma / C)`.
    #[inline]
    pub fn spread_intercept(&self) -> f64 {
        self.risk_ratio().ln_1p() / self.gamma
    }

    /// Contract constant meeting the reservation utility: `-log(-R)`.
    pub fn initial_contract_value(&self) -> f64 {
        0.0 - (-self.reservation_utility).ln()
    }

    pub fn q_bar_f64(&self) -> f64 {
        self.q_bar as f64
    }
}

/// Standard normal CDF, `erfc(-x / sqrt 2) / 2`.
fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Bachelier call delta `N((S - k) / (sigma sqrt(tau)))`.
pub fn bachelier_delta(spot: f64, strike: f64, tau: f64, sigma: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("maturity {tau} must be > 0")));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma {sigma} must be > 0")));
    }
    let d = (spot - strike) / (sigma * tau.sqrt());
    Ok(norm_cdf(d))
}

/// Bachelier call price `(S - k) N(d) + sigma sqrt(tau) n(d)`.
pub fn bachelier_price(spot: f64, strike: f64, tau: f64, sigma: f64) -> Result<f64> {
    if !(tau > 0.0 && sigma > 0.0) {
        return Err(Error::invalid("maturity and sigma must be > 0"));
    }
    let vol = sigma * tau.sqrt();
    let d = (spot - strike) / vol;
    Ok((spot - strike) * norm_cdf(d) + vol * norm_pdf(d))
}

/// Uncapped intensity `A exp(-(C / sigma)(delta + fee))`.
#[inline]
pub fn base_intensity(delta: f64, fee: f64, params: &ModelParams) -> f64 {
    params.intensity_scale * (-params.decay_ratio() * (delta + fee)).exp()
}

/// Arrival intensity of market orders on `side` of `spec` when the market
/// maker quotes half-spread `delta` and the pre-trade aggregated inventory is
/// `agg_q`. Zero when the inventory cap shuts the side.
pub fn arrival_intensity(
    delta: f64,
    spec: &OptionSpec,
    params: &ModelParams,
    side: Side,
    agg_q: f64,
) -> f64 {
    if cap_open(side, agg_q, params.q_bar_f64()) {
        base_intensity(delta, spec.fee, params)
    } else {
        0.0
    }
}

/// Market maker's best half-spread for trade incentive `z`:
/// `clamp(-z + gamma^{-1} log(1 + sigma gamma / C), -delta_max, delta_max)`.
#[inline]
pub fn mm_optimal_spread(z: f64, params: &ModelParams) -> f64 {
    (-z + params.spread_intercept()).clamp(-params.delta_max, params.delta_max)
}

/// Per-side term of the market maker's objective, without the cap indicator:
/// `gamma^{-1} (1 - exp(-gamma (z + delta))) lambda(delta)`.
#[inline]
pub fn side_gain(delta: f64, z: f64, fee: f64, params: &ModelParams) -> f64 {
    -(-params.gamma * (z + delta)).exp_m1() / params.gamma * base_intensity(delta, fee, params)
}

/// `h(delta, z, q)` summed over options and open sides. Incentives and
/// spreads are indexed `[option][Side::index()]`.
pub fn hamiltonian_objective(
    spreads: &[[f64; 2]],
    incentives: &[[f64; 2]],
    agg_q: f64,
    params: &ModelParams,
    specs: &[OptionSpec],
) -> f64 {
    let q_bar = params.q_bar_f64();
    let mut total = 0.0;
    for ((spec, d), z) in specs.iter().zip(spreads).zip(incentives) {
        for side in Side::ALL {
            if cap_open(side, agg_q, q_bar) {
                let i = side.index();
                total += side_gain(d[i], z[i], spec.fee, params);
            }
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianValue {
    pub value: f64,
    /// Maximising half-spreads, `[option][Side::index()]`.
    pub spreads: Vec<[f64; 2]>,
}

/// `H(z, q) = sup_{|delta| <= delta_max} h(delta, z, q)`, attained at the
/// clamped best response of [`mm_optimal_spread`].
pub fn hamiltonian(
    incentives: &[[f64; 2]],
    agg_q: f64,
    params: &ModelParams,
    specs: &[OptionSpec],
) -> HamiltonianValue {
    let spreads: Vec<[f64; 2]> = incentives
        .iter()
        .map(|z| {
            [
                mm_optimal_spread(z[0], params),
                mm_optimal_spread(z[1], params),
            ]
        })
        .collect();
    let value = hamiltonian_objective(&spreads, incentives, agg_q, params, specs);
    HamiltonianValue { value, spreads }
}

/// Positions and order-flow counters of the market maker.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub t: f64,
    pub spot: f64,
    /// Net position per option, `N^bid - N^ask`.
    pub inventories: Vec<i64>,
    /// Running delta-weighted inventory.
    pub agg_q: f64,
    /// Trade counts per option, `[ask, bid]`.
    pub counts: Vec<[u64; 2]>,
}

impl MarketState {
    pub fn new(n_options: usize, spot: f64) -> Self {
        MarketState {
            t: 0.0,
            spot,
            inventories: vec![0; n_options],
            agg_q: 0.0,
            counts: vec![[0, 0]; n_options],
        }
    }

    /// Records one unit market order hitting `side` of `option`. An ask-side
    /// order is a client buy, so the market maker's position drops by one.
    pub fn apply_trade(&mut self, option: usize, side: Side, specs: &[OptionSpec]) {
        self.counts[option][side.index()] += 1;
        self.inventories[option] -= side.phi() as i64;
        self.agg_q = self.recomputed_agg_q(specs);
    }

    /// `sum_k delta_k Q^k` from the integer positions.
    pub fn recomputed_agg_q(&self, specs: &[OptionSpec]) -> f64 {
        specs
            .iter()
            .zip(&self.inventories)
            .map(|(s, &q)| s.delta * q as f64)
            .sum()
    }

    pub fn total_trades(&self) -> u64 {
        self.counts.iter().map(|c| c[0] + c[1]).sum()
    }
}
