use serde::{Deserialize, Serialize};

use super::DemandDistribution;
use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` of wished strikes routed to one listed strike.
///
/// Boundary points shared by two cells belong to the lower-index cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lo: f64,
    pub hi: f64,
}

impl Cell {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Voronoi tessellation of `[0, upper]` for strictly increasing `strikes`.
pub fn voronoi_cells(strikes: &[f64], upper: f64) -> Result<Vec<Cell>> {
    if strikes.is_empty() {
        return Err(Error::invalid("no strikes"));
    }
    if strikes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("strikes must be strictly increasing"));
    }
    if let Some(&k) = strikes.iter().find(|&&k| !(0.0..=upper).contains(&k)) {
        return Err(Error::invalid(format!("strike {k} outside [0, {upper}]")));
    }
    Ok(cells_unchecked(strikes, upper))
}

/// Same as [`voronoi_cells`] but tolerates repeated strikes (zero-width cells).
pub(crate) fn cells_unchecked(strikes: &[f64], upper: f64) -> Vec<Cell> {
    let n = strikes.len();
    let mut cells = Vec::with_capacity(n);
    let mut lo = 0.0;
    for i in 0..n {
        let hi = if i + 1 < n {
            midpoint(strikes[i], strikes[i + 1])
        } else {
            upper
        };
        cells.push(Cell { lo, hi });
        lo = hi;
    }
    cells
}

#[inline]
fn midpoint(a: f64, b: f64) -> f64 {
    (a + b) / 2.0
}

/// Index of the cell containing `x` for sorted `strikes` (ties go to the
/// lower index).
#[inline]
pub(crate) fn cell_index(strikes: &[f64], x: f64) -> usize {
    // number of interior boundaries strictly below x
    let n = strikes.len();
    let (mut lo, mut hi) = (0usize, n - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if x <= midpoint(strikes[mid], strikes[mid + 1]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// `|x|^p`, exact for small integer exponents.
#[inline]
pub(crate) fn pow_abs(x: f64, p: f64) -> f64 {
    let ax = x.abs();
    if p == 2.0 {
        ax * ax
    } else if p.fract() == 0.0 && p <= 64.0 {
        ax.powi(p as i32)
    } else {
        ax.powf(p)
    }
}

/// Average p-power regret `E[min_j |K - K_j|^p]` of sending each wished
/// strike to its nearest listed strike.
pub fn average_regret(strikes: &[f64], dist: &DemandDistribution, p: f64) -> f64 {
    assert!(
        !strikes.is_empty(),
        "average_regret needs at least one strike"
    );
    dist.iter()
        .map(|(x, w)| w * nearest_distance_pow(strikes, x, p))
        .sum()
}

/// `min_j |x - K_j|^p` over an arbitrary (unsorted) strike list.
pub(crate) fn nearest_distance_pow(strikes: &[f64], x: f64, p: f64) -> f64 {
    let d = strikes
        .iter()
        .map(|k| (x - k).abs())
        .fold(f64::INFINITY, f64::min);
    pow_abs(d, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(atoms: &[f64]) -> DemandDistribution {
        DemandDistribution::uniform(atoms).unwrap()
    }

    #[test]
    fn two_cells_split_at_midpoint() {
        let cells = voronoi_cells(&[0.5, 2.5], 3.0).unwrap();
        assert_eq!(
            cells,
            vec![Cell { lo: 0.0, hi: 1.5 }, Cell { lo: 1.5, hi: 3.0 }]
        );
    }

    #[test]
    fn single_strike_owns_the_domain() {
        assert_eq!(
            voronoi_cells(&[1.0], 2.0).unwrap(),
            vec![Cell { lo: 0.0, hi: 2.0 }]
        );
    }

    #[test]
    fn boundary_atom_goes_to_lower_cell() {
        let strikes = [0.0, 2.0];
        let cells = voronoi_cells(&strikes, 2.0).unwrap();
        assert_eq!(
            cells,
            vec![Cell { lo: 0.0, hi: 1.0 }, Cell { lo: 1.0, hi: 2.0 }]
        );
        // arg-min of |1 - K_j| is {0, 1}; the declared tie rule picks index 0
        assert_eq!(cell_index(&strikes, 1.0), 0);
        assert_eq!(cell_index(&strikes, 1.0 + 1e-12), 1);
    }

    #[test]
    fn unsorted_or_repeated_strikes_are_rejected() {
        assert!(voronoi_cells(&[2.0, 1.0], 3.0).is_err());
        assert!(voronoi_cells(&[1.0, 1.0], 3.0).is_err());
        assert!(voronoi_cells(&[], 3.0).is_err());
        assert!(voronoi_cells(&[4.0], 3.0).is_err());
    }

    #[test]
    fn cell_index_matches_brute_arg_min() {
        let strikes = [0.3, 1.1, 1.9, 4.0, 4.2];
        for i in 0..=500 {
            let x = i as f64 * 0.01;
            // exact ties are settled by the midpoint rule, tested separately
            if strikes
                .windows(2)
                .any(|w| (x - 0.5 * (w[0] + w[1])).abs() < 1e-9)
            {
                continue;
            }
            let mut best = 0;
            for (j, k) in strikes.iter().enumerate() {
                if (x - k).abs() < (x - strikes[best]).abs() {
                    best = j;
                }
            }
            assert_eq!(cell_index(&strikes, x), best, "x = {x}");
        }
    }

    #[test]
    fn regret_examples() {
        assert_eq!(average_regret(&[1.0], &uniform(&[1.0]), 2.0), 0.0);
        assert_eq!(average_regret(&[1.0], &uniform(&[1.0]), 7.0), 0.0);
        assert_eq!(average_regret(&[0.5], &uniform(&[0.0, 1.0]), 2.0), 0.25);
        // atoms 0, 1, 2 against (0, 2): contributions 0, 1, 0
        let r = average_regret(&[0.0, 2.0], &uniform(&[0.0, 1.0, 2.0]), 2.0);
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pow_abs_matches_powf() {
        for &x in &[-2.5, -1.0, 0.0, 0.3, 3.7] {
            for &p in &[2.0, 3.0, 4.0, 8.0, 2.5] {
                let a = pow_abs(x, p);
                let b = f64::abs(x).powf(p);
                assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            }
        }
    }
}
