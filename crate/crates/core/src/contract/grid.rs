use serde::{Deserialize, Serialize};

use super::{derived_constants, DerivedConstants};
use crate::error::{Error, Result};
use crate::market::{cap_open, ModelParams, OptionSpec, Side};

/// Tolerance, in grid cells, for snapping query points onto nodes.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    /// Classical fourth-order Runge-Kutta.
    Rk4,
    /// Forward Euler in time-to-maturity.
    ExplicitEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Upper bound on the time step; the step actually used divides the
    /// storage interval evenly.
    pub dt: f64,
    /// Inventory step.
    pub h_q: f64,
    /// Spacing of the time slices kept in memory.
    pub store_dt: f64,
    pub scheme: TimeScheme,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dt: 0.02,
            h_q: 0.025,
            store_dt: 1.0,
            scheme: TimeScheme::Rk4,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("h_q", self.h_q),
            ("store_dt", self.store_dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} = {v} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Transformed exchange value `U~(t, Q)` on a time x aggregated-inventory
/// lattice. Inventory nodes are `Q_j = (j - J) h_q`, symmetric around zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    times: Vec<f64>,
    h_q: f64,
    half_width: usize,
    q_bar: f64,
    /// `values[m * n_q + j]`
    values: Vec<f64>,
    step: f64,
}

impl ValueGrid {
    /// Reassembles a grid from stored slices (e.g. read back from CSV).
    pub fn from_parts(
        times: Vec<f64>,
        h_q: f64,
        half_width: usize,
        q_bar: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let n_q = 2 * half_width + 1;
        if times.is_empty() || values.len() != times.len() * n_q {
            return Err(Error::invalid(format!(
                "grid shape mismatch: {} slices x {} nodes vs {} values",
                times.len(),
                n_q,
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("grid times must be strictly increasing"));
        }
        if !(h_q > 0.0) {
            return Err(Error::invalid("grid step must be > 0"));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::numerical("grid values must be positive and finite"));
        }
        Ok(ValueGrid {
            times,
            h_q,
            half_width,
            q_bar,
            values,
            step: f64::NAN,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn h_q(&self) -> f64 {
        self.h_q
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn n_q(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn q_bar(&self) -> f64 {
        self.q_bar
    }

    /// Time step used by the solver (NaN for grids loaded from disk).
    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    pub fn q_node(&self, j: usize) -> f64 {
        (j as f64 - self.half_width as f64) * self.h_q
    }

    pub fn q_nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_q()).map(move |j| self.q_node(j))
    }

    /// Largest |Q| on the grid.
    pub fn q_edge(&self) -> f64 {
        self.half_width as f64 * self.h_q
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        let n = self.n_q();
        &self.values[m * n..(m + 1) * n]
    }

    pub fn value(&self, m: usize, j: usize) -> f64 {
        self.values[m * self.n_q() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nearest node index when `q` sits on a node.
    pub fn node_index(&self, q: f64) -> Option<usize> {
        let x = q / self.h_q + self.half_width as f64;
        let r = x.round();
        if (x - r).abs() < SNAP && r >= 0.0 && r < self.n_q() as f64 {
            Some(r as usize)
        } else {
            None
        }
    }

    /// `U~(t_m, q)` with linear interpolation in `q`.
    pub fn value_in_slice(&self, m: usize, q: f64) -> Result<f64> {
        let x = q / self.h_q + self.half_width as f64;
        let last = (self.n_q() - 1) as f64;
        if !(x >= -SNAP && x <= last + SNAP) {
            return Err(Error::numerical(format!(
                "domain underrun: Q = {q} outside [{}, {}]",
                -self.q_edge(),
                self.q_edge()
            )));
        }
        let s = self.slice(m);
        let r = x.round();
        if (x - r).abs() < SNAP {
            return Ok(s[r.clamp(0.0, last) as usize]);
        }
        let j = (x.floor() as usize).min(self.n_q() - 2);
        let w = x - j as f64;
        Ok((1.0 - w) * s[j] + w * s[j + 1])
    }

    /// `log U~(t, q)`: linear in `q` on each slice, then linear in `t` in
    /// log space between stored slices.
    pub fn ln_value_at(&self, t: f64, q: f64) -> Result<f64> {
        let horizon = self.horizon();
        if !(t >= self.times[0] - 1e-12 && t <= horizon + 1e-12) {
            return Err(Error::numerical(format!(
                "time {t} outside [{}, {horizon}]",
                self.times[0]
            )));
        }
        let m = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(m) => return Ok(self.value_in_slice(m, q)?.ln()),
            Err(0) => return Ok(self.value_in_slice(0, q)?.ln()),
            Err(m) if m >= self.times.len() => {
                return Ok(self.value_in_slice(self.times.len() - 1, q)?.ln())
            }
            Err(m) => m - 1,
        };
        let (t0, t1) = (self.times[m], self.times[m + 1]);
        let w = (t - t0) / (t1 - t0);
        let v0 = self.value_in_slice(m, q)?.ln();
        let v1 = self.value_in_slice(m + 1, q)?.ln();
        Ok((1.0 - w) * v0 + w * v1)
    }

    pub fn value_at(&self, t: f64, q: f64) -> Result<f64> {
        Ok(self.ln_value_at(t, q)?.exp())
    }
}

/// Largest explicit step keeping the scheme positivity preserving:
/// `0.5 / (kappa Q_edge^2 + 2 sum c_hat)`.
pub fn stability_bound(consts: &DerivedConstants, q_edge: f64) -> f64 {
    0.5 / (consts.kappa * q_edge * q_edge + 2.0 * consts.total_c_hat())
}

/// How one (option, side) jump reads the shifted value `U~(Q - delta phi)`.
#[derive(Debug, Clone, Copy)]
struct Shift {
    coef: f64,
    offset: isize,
    weight: f64,
    side: Side,
}

struct Operator {
    shifts: Vec<Shift>,
    decay: Vec<f64>,
    /// `open[j * n_shifts + s]`
    open: Vec<bool>,
}

impl Operator {
    fn new(
        grid_q: &[f64],
        h_q: f64,
        q_bar: f64,
        consts: &DerivedConstants,
        specs: &[OptionSpec],
    ) -> Result<Self> {
        let mut shifts = Vec::with_capacity(2 * specs.len());
        for (spec, oc) in specs.iter().zip(&consts.options) {
            for side in Side::ALL {
                let cells = -spec.delta * side.phi() / h_q;
                let r = cells.round();
                let (offset, weight) = if (cells - r).abs() < SNAP {
                    (r as isize, 0.0)
                } else {
                    (cells.floor() as isize, cells - cells.floor())
                };
                shifts.push(Shift {
                    coef: oc.c_hat,
                    offset,
                    weight,
                    side,
                });
            }
        }
        let n = grid_q.len();
        let mut open = vec![false; n * shifts.len()];
        for (j, &q) in grid_q.iter().enumerate() {
            for (s, sh) in shifts.iter().enumerate() {
                if !cap_open(sh.side, q, q_bar) {
                    continue;
                }
                let lo = j as isize + sh.offset;
                let hi = if sh.weight > 0.0 { lo + 1 } else { lo };
                if lo < 0 || hi >= n as isize {
                    return Err(Error::numerical(format!(
                        "domain underrun: jump from Q = {q} leaves the grid"
                    )));
                }
                open[j * shifts.len() + s] = true;
            }
        }
        let decay = grid_q.iter().map(|q| consts.kappa * q * q).collect();
        Ok(Operator {
            shifts,
            decay,
            open,
        })
    }

    /// `out = -kappa Q^2 u + sum c_hat u(Q - delta phi) 1{open}`.
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let ns = self.shifts.len();
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = -self.decay[j] * u[j];
            let open = &self.open[j * ns..(j + 1) * ns];
            for (sh, &is_open) in self.shifts.iter().zip(open) {
                if !is_open {
                    continue;
                }
                let i = (j as isize + sh.offset) as usize;
                let v = if sh.weight == 0.0 {
                    u[i]
                } else {
                    (1.0 - sh.weight) * u[i] + sh.weight * u[i + 1]
                };
                acc += sh.coef * v;
            }
            *o = acc;
        }
    }
}

/// Solves the linear exchange PDE
///
/// `0 = dU~/dt - kappa Q^2 U~ + sum_{k, i} c_hat_k U~(t, Q - delta_k phi(i)) 1{phi(i) Q > -q_bar}`,
/// `U~(T, .) = 1`,
///
/// backwards from the horizon on `Q in [-(q_bar + max delta), q_bar + max delta]`.
pub fn solve_value_grid(
    params: &ModelParams,
    specs: &[OptionSpec],
    cfg: &GridConfig,
) -> Result<ValueGrid> {
    cfg.validate()?;
    if specs.is_empty() {
        return Err(Error::invalid("no options to quote"));
    }
    let consts = derived_constants(params, specs)?;
    let pad = specs.iter().map(|s| s.delta).fold(0.0, f64::max);
    let q_bar = params.q_bar_f64();
    let reach = (q_bar + pad) / cfg.h_q;
    let half_width = if (reach - reach.round()).abs() < SNAP {
        reach.round() as usize
    } else {
        reach.ceil() as usize
    };
    let n_q = 2 * half_width + 1;
    let q_edge = half_width as f64 * cfg.h_q;

    let bound = stability_bound(&consts, q_edge);
    if cfg.dt > bound {
        return Err(Error::numerical(format!(
            "dt = {} exceeds the stability bound {bound:.6e}",
            cfg.dt
        )));
    }

    let horizon = params.horizon;
    let n_store = ((horizon / cfg.store_dt) - SNAP).ceil().max(1.0) as usize;
    let interval = horizon / n_store as f64;
    let substeps = ((interval / cfg.dt) - SNAP).ceil().max(1.0) as usize;
    let step = interval / substeps as f64;

    let grid_q: Vec<f64> = (0..n_q)
        .map(|j| (j as f64 - half_width as f64) * cfg.h_q)
        .collect();
    let op = Operator::new(&grid_q, cfg.h_q, q_bar, &consts, specs)?;

    let mut u = vec![1.0; n_q];
    let mut stored: Vec<Vec<f64>> = Vec::with_capacity(n_store + 1);
    stored.push(u.clone());

    let mut k1 = vec![0.0; n_q];
    let mut k2 = vec![0.0; n_q];
    let mut k3 = vec![0.0; n_q];
    let mut k4 = vec![0.0; n_q];
    let mut tmp = vec![0.0; n_q];

    for block in 0..n_store {
        for _ in 0..substeps {
            match cfg.scheme {
                TimeScheme::ExplicitEuler => {
                    op.apply(&u, &mut k1);
                    for (x, k) in u.iter_mut().zip(&k1) {
                        *x += step * k;
                    }
                }
                TimeScheme::Rk4 => {
                    op.apply(&u, &mut k1);
                    for ((t, x), k) in tmp.iter_mut().zip(&u).zip(&k1) {
                        *t = x + 0.5 * step * k;
                    }
                    op.apply(&tmp, &mut k2);
                    for ((t, x), k) in tmp.iter_mut().zip(&u).zip(&k2) {
                        *t = x + 0.5 * step * k;
                    }
                    op.apply(&tmp, &mut k3);
                    for ((t, x), k) in tmp.iter_mut().zip(&u).zip(&k3) {
                        *t = x + step * k;
                    }
                    op.apply(&tmp, &mut k4);
                    for (j, x) in u.iter_mut().enumerate() {
                        *x += step / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                    }
                }
            }
        }
        if let Some(j) = u.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::numerical(format!(
                "scheme instability: U~ = {} at Q = {}, t = {}",
                u[j],
                grid_q[j],
                horizon - (block + 1) as f64 * interval
            )));
        }
        stored.push(u.clone());
    }

    stored.reverse();
    let times: Vec<f64> = (0..=n_store).map(|m| m as f64 * interval).collect();
    let mut grid = ValueGrid::from_parts(
        times,
        cfg.h_q,
        half_width,
        q_bar,
        stored.into_iter().flatten().collect(),
    )?;
    grid.step = step;
    Ok(grid)
}
