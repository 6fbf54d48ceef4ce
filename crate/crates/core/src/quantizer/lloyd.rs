use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cells::{cell_index, cells_unchecked, nearest_distance_pow, pow_abs};
use super::{average_regret, Cell, DemandDistribution};
use crate::error::{Error, Result};

/// Stopping and restart settings for Lloyd's iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LloydConfig {
    /// Stop once `sum_i |K'_i - K_i| < epsilon`.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Number of random initialisations tried by [`lloyd_best_of`].
    pub seeds: usize,
    /// Drop strikes closer than this to their left neighbour after the run.
    pub merge_tol: Option<f64>,
}

impl Default for LloydConfig {
    fn default() -> Self {
        LloydConfig {
            epsilon: 1e-8,
            max_iter: 10_000,
            seeds: 20,
            merge_tol: None,
        }
    }
}

/// A candidate listing together with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrikeSet {
    pub strikes: Vec<f64>,
    pub p: f64,
    pub regret: f64,
    pub cells: Vec<Cell>,
    pub iterations: usize,
    pub converged: bool,
}

impl StrikeSet {
    fn evaluate(
        strikes: Vec<f64>,
        dist: &DemandDistribution,
        p: f64,
        iterations: usize,
        converged: bool,
    ) -> Self {
        let regret = average_regret(&strikes, dist, p);
        let cells = cells_unchecked(&strikes, dist.upper());
        StrikeSet {
            strikes,
            p,
            regret,
            cells,
            iterations,
            converged,
        }
    }

    /// Removes every strike lying within `tol` of the previously kept one.
    pub fn merge_close(&self, tol: f64, dist: &DemandDistribution) -> StrikeSet {
        let mut kept: Vec<f64> = Vec::with_capacity(self.strikes.len());
        for &k in &self.strikes {
            match kept.last() {
                Some(&prev) if k - prev < tol => {}
                _ => kept.push(k),
            }
        }
        StrikeSet::evaluate(kept, dist, self.p, self.iterations, self.converged)
    }

    pub fn len(&self) -> usize {
        self.strikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strikes.is_empty()
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::invalid(format!(
            "regret exponent p = {p} must be >= 2"
        )));
    }
    Ok(())
}

/// One Lloyd update: assign atoms to Voronoi cells, then move each strike to
/// the weighted centre
///
/// `K'_i = E[K |K - K_i|^{p-2} 1{K in A_i}] / E[|K - K_i|^{p-2} 1{K in A_i}]`
///
/// (the conditional mean when `p = 2`). A strike whose cell carries no mass is
/// moved to the atom with the largest regret contribution among atoms that are
/// not already strikes. If the only mass of a cell sits on its strike
/// (`p > 2`), the strike stays put. Output is sorted.
pub fn lloyd_step(strikes: &[f64], dist: &DemandDistribution, p: f64) -> Vec<f64> {
    assert!(!strikes.is_empty(), "lloyd_step needs at least one strike");
    let mut current = strikes.to_vec();
    current.sort_by(f64::total_cmp);
    let n = current.len();

    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    let mut mass = vec![0.0; n];
    for (x, w) in dist.iter() {
        if w == 0.0 {
            continue;
        }
        let i = cell_index(&current, x);
        let weight = if p == 2.0 {
            1.0
        } else {
            pow_abs(x - current[i], p - 2.0)
        };
        num[i] += w * weight * x;
        den[i] += w * weight;
        mass[i] += w;
    }

    let mut next = current.clone();
    let mut taken: Vec<f64> = Vec::new();
    for i in 0..n {
        if mass[i] > 0.0 {
            if den[i] > 0.0 {
                next[i] = num[i] / den[i];
            }
        } else if let Some(atom) = reseed_atom(&current, &taken, dist, p) {
            next[i] = atom;
            taken.push(atom);
        }
    }
    next.sort_by(f64::total_cmp);
    next
}

/// Highest-regret atom that is neither a current strike nor already used to
/// reseed another cell.
fn reseed_atom(strikes: &[f64], taken: &[f64], dist: &DemandDistribution, p: f64) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (x, w) in dist.iter() {
        if w == 0.0 || strikes.contains(&x) || taken.contains(&x) {
            continue;
        }
        let r = w * nearest_distance_pow(strikes, x, p);
        if best.is_none_or(|(_, br)| r > br) {
            best = Some((x, r));
        }
    }
    best.map(|(x, _)| x)
}

fn initial_strikes(dist: &DemandDistribution, n: usize, p: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = if seed % 2 == 1 {
        spread_atoms(dist, n, p, &mut rng)
    } else {
        None
    }
    .unwrap_or_else(|| {
        let lo = dist.quantile(0.1);
        let hi = dist.quantile(0.9);
        (0..n)
            .map(|_| lo + rng.random::<f64>() * (hi - lo))
            .collect()
    });
    init.sort_by(f64::total_cmp);
    init
}

/// Atoms drawn one at a time with probability proportional to mass times
/// p-power distance to the atoms already drawn. `None` once no mass is left
/// away from the draws.
fn spread_atoms(
    dist: &DemandDistribution,
    n: usize,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    let mut init: Vec<f64> = Vec::with_capacity(n);
    let mut weights = vec![0.0; dist.len()];
    for _ in 0..n {
        for (w, (x, m)) in weights.iter_mut().zip(dist.iter()) {
            *w = if init.is_empty() {
                m
            } else {
                m * nearest_distance_pow(&init, x, p)
            };
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = dist.len() - 1;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                pick = i;
                break;
            }
            u -= w;
        }
        init.push(dist.atoms()[pick]);
    }
    Some(init)
}

/// Runs Lloyd's algorithm. Even seeds start from `n` points drawn uniformly
/// between the 10th and 90th percentiles of `dist`; odd seeds start from
/// atoms drawn with mass-times-distance weights, which reaches cells that
/// the percentile range misses.
///
/// When the stopping rule fires, the returned strikes are the ones whose
/// update moved by less than `epsilon`, so they satisfy the fixed-point test
/// by construction. `cfg.merge_tol` is not applied here; see
/// [`lloyd_best_of`].
pub fn lloyd_run(
    dist: &DemandDistribution,
    n: usize,
    p: f64,
    cfg: &LloydConfig,
    seed: u64,
) -> Result<StrikeSet> {
    check_exponent(p)?;
    if n == 0 {
        return Err(Error::invalid("number of strikes must be >= 1"));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be > 0"));
    }
    if cfg.max_iter == 0 {
        return Err(Error::invalid("max_iter must be >= 1"));
    }
    let distinct = dist.support().count();
    if n > distinct {
        log::warn!("{n} strikes requested for {distinct} distinct atoms; duplicates possible");
    }

    let mut current = initial_strikes(dist, n, p, seed);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let next = lloyd_step(&current, dist, p);
        iterations += 1;
        let moved: f64 = next.iter().zip(&current).map(|(a, b)| (a - b).abs()).sum();
        if moved < cfg.epsilon {
            converged = true;
            break;
        }
        current = next;
    }
    Ok(StrikeSet::evaluate(current, dist, p, iterations, converged))
}

/// Best (lowest regret) of `cfg.seeds` runs seeded `base_seed, base_seed+1, ...`.
///
/// Runs execute in parallel; ties go to the lowest seed so the result does not
/// depend on scheduling.
pub fn lloyd_best_of(
    dist: &DemandDistribution,
    n: usize,
    p: f64,
    cfg: &LloydConfig,
    base_seed: u64,
) -> Result<StrikeSet> {
    let runs = cfg.seeds.max(1) as u64;
    let results: Vec<StrikeSet> = (0..runs)
        .into_par_iter()
        .map(|i| lloyd_run(dist, n, p, cfg, base_seed.wrapping_add(i)))
        .collect::<Result<_>>()?;
    let mut best = results
        .into_iter()
        .reduce(|best, r| if r.regret < best.regret { r } else { best })
        .expect("at least one run");
    if let Some(tol) = cfg.merge_tol {
        best = best.merge_close(tol, dist);
    }
    Ok(best)
}

/// Exhaustive search for the regret-minimising `n`-subset of `grid`.
///
/// Ties are resolved in favour of the lexicographically smallest strike tuple.
pub fn brute_force_quantizer(
    dist: &DemandDistribution,
    n: usize,
    p: f64,
    grid: &[f64],
) -> Result<StrikeSet> {
    check_exponent(p)?;
    let mut grid: Vec<f64> = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if n == 0 || grid.len() < n {
        return Err(Error::invalid(format!(
            "cannot choose {n} strikes from a grid of {}",
            grid.len()
        )));
    }
    let count = binomial(grid.len(), n);
    if count > 50_000_000 {
        return Err(Error::invalid(format!(
            "{count} subsets is too many to enumerate"
        )));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    // combinations come out in lexicographic order
    for combo in grid.iter().copied().combinations(n) {
        let r = average_regret(&combo, dist, p);
        let better = match &best {
            None => true,
            Some((_, br)) => r < br - 1e-14 * br.abs().max(1e-300),
        };
        if better {
            best = Some((combo, r));
        }
    }
    let (strikes, _) = best.expect("non-empty enumeration");
    Ok(StrikeSet::evaluate(strikes, dist, p, 0, true))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}
