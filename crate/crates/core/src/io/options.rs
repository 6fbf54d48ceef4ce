use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{bachelier_delta, ModelParams, OptionSpec};

/// One entry of the options file. A missing `delta` is filled in with the
/// Bachelier delta at the configured spot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionInput {
    pub strike: f64,
    pub maturity: f64,
    #[serde(default)]
    pub delta: Option<f64>,
    pub fee: f64,
    #[serde(default)]
    pub weight: f64,
    pub spread_threshold: f64,
}

impl OptionInput {
    pub fn into_spec(self, params: &ModelParams) -> Result<OptionSpec> {
        let delta = match self.delta {
            Some(d) => d,
            None => bachelier_delta(params.spot, self.strike, self.maturity, params.sigma)?,
        };
        let spec = OptionSpec {
            strike: self.strike,
            maturity: self.maturity,
            delta,
            fee: self.fee,
            weight: self.weight,
            spread_threshold: self.spread_threshold,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses a JSON array of options.
pub fn parse_options(text: &str, path: &Path, params: &ModelParams) -> Result<Vec<OptionSpec>> {
    let inputs: Vec<OptionInput> = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    if inputs.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "no options listed".into(),
        });
    }
    inputs
        .into_iter()
        .enumerate()
        .map(|(i, o)| {
            o.into_spec(params).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("option {i}: {e}"),
            })
        })
        .collect()
}

pub fn load_options(path: &Path, params: &ModelParams) -> Result<Vec<OptionSpec>> {
    parse_options(&super::read_to_string(path)?, path, params)
}
