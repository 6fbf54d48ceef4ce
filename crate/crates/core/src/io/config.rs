use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trades::MaturityBuckets;
use crate::contract::{GridConfig, TimeScheme};
use crate::error::{Error, Result};
use crate::market::ModelParams;
use crate::quantizer::LloydConfig;
use crate::simulator::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub trades: Option<PathBuf>,
    /// Options JSON; the three-option reference book when absent.
    pub options: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantizerConfig {
    pub n: usize,
    pub p: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub seeds: usize,
    pub seed: u64,
    /// Maturity bucket thresholds in days.
    pub buckets: Vec<f64>,
    /// Strike domain is `[0, upper]` in percent of spot.
    pub upper: f64,
    /// Merge output strikes closer than this.
    pub merge_tol: Option<f64>,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        let lloyd = LloydConfig::default();
        QuantizerConfig {
            n: 10,
            p: 2.0,
            epsilon: lloyd.epsilon,
            max_iter: lloyd.max_iter,
            seeds: lloyd.seeds,
            seed: 0,
            buckets: MaturityBuckets::default().thresholds().to_vec(),
            upper: 300.0,
            merge_tol: None,
        }
    }
}

impl QuantizerConfig {
    pub fn lloyd(&self) -> LloydConfig {
        LloydConfig {
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            seeds: self.seeds,
            merge_tol: self.merge_tol,
        }
    }

    pub fn maturity_buckets(&self) -> Result<MaturityBuckets> {
        MaturityBuckets::new(self.buckets.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub dt: f64,
    pub h_q: f64,
    pub store_dt: f64,
    pub scheme: TimeScheme,
    /// Time spacing of the incentives export (a multiple of `store_dt`).
    pub export_dt: f64,
    /// Monte Carlo paths per probe; 0 skips the cross-check.
    pub n_paths: usize,
    pub seed: u64,
    /// `(t, Q)` points for the Monte Carlo cross-check.
    pub probes: Vec<[f64; 2]>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let g = GridConfig::default();
        SolverConfig {
            dt: g.dt,
            h_q: g.h_q,
            store_dt: g.store_dt,
            scheme: g.scheme,
            export_dt: 10.0,
            n_paths: 0,
            seed: 0,
            probes: Vec::new(),
        }
    }
}

impl SolverConfig {
    pub fn grid(&self) -> GridConfig {
        GridConfig {
            dt: self.dt,
            h_q: self.h_q,
            store_dt: self.store_dt,
            scheme: self.scheme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Quote refresh step; `T / 10^4` when absent.
    pub micro_dt: Option<f64>,
    pub quote_offset: f64,
    pub zero_trade_incentives: bool,
    /// Paths whose events go to `events.csv`.
    pub export_paths: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_paths: 1000,
            seed: 0,
            micro_dt: None,
            quote_offset: 0.0,
            zero_trade_incentives: false,
            export_paths: 10,
        }
    }
}

impl SimulationConfig {
    pub fn sim(&self) -> SimConfig {
        SimConfig {
            micro_dt: self.micro_dt,
            quote_offset: self.quote_offset,
            zero_trade_incentives: self.zero_trade_incentives,
            record_spot: false,
        }
    }
}

/// Everything one command-line run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    #[serde(default)]
    pub quantizer: QuantizerConfig,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

fn field_err(section: &str, e: Error) -> Error {
    match e {
        Error::Invalid(m) | Error::Numerical(m) | Error::Config(m) => {
            Error::Config(format!("[{section}] {m}"))
        }
        other => other,
    }
}

fn check(section: &str, ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("[{section}] {}", msg())))
    }
}

impl RunConfig {
    /// Checks every field before any computation starts.
    pub fn validate(&self) -> Result<()> {
        let q = &self.quantizer;
        check("quantizer", q.n >= 1, || {
            format!("n = {} must be >= 1", q.n)
        })?;
        check("quantizer", q.p >= 2.0 && q.p.is_finite(), || {
            format!("p = {} must be >= 2", q.p)
        })?;
        check("quantizer", q.epsilon > 0.0, || {
            format!("epsilon = {} must be > 0", q.epsilon)
        })?;
        check("quantizer", q.max_iter >= 1, || {
            "max_iter must be >= 1".into()
        })?;
        check("quantizer", q.seeds >= 1, || "seeds must be >= 1".into())?;
        check("quantizer", q.upper > 0.0 && q.upper.is_finite(), || {
            format!("upper = {} must be > 0", q.upper)
        })?;
        if let Some(tol) = q.merge_tol {
            check("quantizer", tol >= 0.0, || {
                format!("merge_tol = {tol} must be >= 0")
            })?;
        }
        q.maturity_buckets()
            .map_err(|e| field_err("quantizer", e))?;

        self.model.validate().map_err(|e| field_err("model", e))?;

        let s = &self.solver;
        s.grid().validate().map_err(|e| field_err("solver", e))?;
        check(
            "solver",
            s.export_dt > 0.0 && s.export_dt.is_finite(),
            || format!("export_dt = {} must be > 0", s.export_dt),
        )?;
        for &[t, qq] in &s.probes {
            check("solver", (0.0..=self.model.horizon).contains(&t), || {
                format!("probe time {t} outside [0, {}]", self.model.horizon)
            })?;
            check("solver", qq.abs() <= self.model.q_bar_f64(), || {
                format!("probe Q = {qq} outside [-q_bar, q_bar]")
            })?;
        }

        let m = &self.simulation;
        check("simulation", m.n_paths >= 2, || {
            format!("n_paths = {} must be >= 2", m.n_paths)
        })?;
        m.sim()
            .validate(self.model.horizon)
            .map_err(|e| field_err("simulation", e))?;
        Ok(())
    }

    /// Resolves relative paths against `base`.
    fn anchor(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.paths.trades.as_mut() {
            fix(p);
        }
        if let Some(p) = self.paths.options.as_mut() {
            fix(p);
        }
        fix(&mut self.paths.output_dir);
    }
}

/// Parses and validates a TOML run configuration. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads `path`; relative paths inside are taken relative to its directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let mut cfg = parse_config(&super::read_to_string(path)?)?;
    cfg.anchor(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}
