//! Strike selection as a one-dimensional p-power quantization problem.
//!
//! Given the empirical law of wished strikes, find `K_1 <= ... <= K_n`
//! minimising `E[min_j |K - K_j|^p]`. [`lloyd_run`] iterates the Lloyd map to
//! a fixed point; [`brute_force_quantizer`] enumerates a finite candidate grid
//! and serves as an oracle on small problems.

mod cells;
mod distribution;
mod lloyd;

pub use cells::{average_regret, voronoi_cells, Cell};
pub use distribution::{build_empirical_distribution, DemandDistribution};
pub use lloyd::{
    brute_force_quantizer, lloyd_best_of, lloyd_run, lloyd_step, LloydConfig, StrikeSet,
};
