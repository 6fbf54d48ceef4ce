#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Listing design for a derivatives exchange.
//!
//! Two stages:
//!
//! 1. [`quantizer`] picks the strikes to list by minimising the average
//!    p-power regret of market takers over the empirical demand law, using
//!    Lloyd's fixed-point iteration (with an exhaustive-search oracle).
//! 2. [`contract`] computes the exchange's optimal make-take incentives for a
//!    single market maker quoting all listed options. The exchange value
//!    reduces to a linear jump PDE in the delta-weighted aggregated inventory,
//!    solved by finite differences and cross-checked by a Feynman-Kac Monte
//!    Carlo. [`simulator`] then replays the market under the resulting
//!    contract and estimates both parties' utilities.
//!
//! [`market`] holds the shared primitives (intensities, the market maker's
//! Hamiltonian and best response) and [`io`] the file formats and run
//! configuration used by the command-line driver.

pub mod contract;
pub mod error;
pub mod io;
pub mod market;
pub mod quantizer;
pub mod simulator;
pub mod stats;

pub use contract::{
    derived_constants, inventory_incentive, optimal_trade_incentive, solve_value_grid,
    spread_surface, value_monte_carlo, value_monte_carlo_with, DerivedConstants, GridConfig,
    IncentiveSurface, SpreadTable, TimeScheme, ValueGrid,
};
pub use error::{Error, Result};
pub use market::{
    arrival_intensity, bachelier_delta, hamiltonian, mm_optimal_spread, MarketState, ModelParams,
    OptionSpec, Side,
};
pub use quantizer::{
    average_regret, brute_force_quantizer, build_empirical_distribution, lloyd_best_of, lloyd_run,
    lloyd_step, voronoi_cells, Cell, DemandDistribution, LloydConfig, StrikeSet,
};
pub use simulator::{
    estimate_exchange_utility, estimate_mm_utility, simulate_batch, simulate_trajectory, SimConfig,
    Simulator, Trajectory,
};
pub use stats::Estimate;
