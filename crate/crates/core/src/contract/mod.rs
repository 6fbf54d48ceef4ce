//! The exchange's optimal contract.
//!
//! Under the optimal inventory incentive the exchange's value depends on the
//! book only through the delta-weighted inventory `Q`. After the power
//! transform `U~ = (-U)^{-beta}` the HJB becomes the linear jump PDE solved by
//! [`solve_value_grid`]; [`value_monte_carlo`] evaluates the same quantity via
//! its Feynman-Kac representation. Per-trade incentives and the induced
//! quotes are read off the solved grid.

mod constants;
mod grid;
mod incentives;
mod montecarlo;

pub use constants::{derived_constants, DerivedConstants, OptionConstants};
pub use grid::{solve_value_grid, stability_bound, GridConfig, TimeScheme, ValueGrid};
pub use incentives::{
    inventory_incentive, optimal_trade_incentive, spread_surface, IncentiveSurface, OptionSpreads,
    SpreadTable,
};
pub(crate) use montecarlo::path_rng;
pub use montecarlo::{value_monte_carlo, value_monte_carlo_with};
