//! File formats and run configuration.

mod config;
mod export;
mod options;
mod trades;

pub use config::{
    load_config, parse_config, PathsConfig, QuantizerConfig, RunConfig, SimulationConfig,
    SolverConfig,
};
pub use export::{
    format_float, read_events, read_incentives, read_spread_table, read_value_grid, write_events,
    write_incentives, write_json, write_probes, write_spread_table, write_value_grid, EventRow,
    IncentiveRow, ProbeRow, StrikesReport,
};
pub use options::{load_options, parse_options, OptionInput};
pub use trades::{parse_trade_report, read_trade_report, MaturityBuckets, TradeRow};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
