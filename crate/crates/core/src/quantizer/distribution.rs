use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities must sum to one within this tolerance.
const PROB_SUM_TOL: f64 = 1e-12;

/// Discrete law of requested strikes, in moneyness (percent of spot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
    upper: f64,
}

impl DemandDistribution {
    /// Builds a distribution from already-normalised atoms and probabilities.
    ///
    /// `upper` is the right end of the strike domain `[0, upper]`.
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>, upper: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if atoms.len() != probs.len() {
            return Err(Error::invalid(format!(
                "{} atoms but {} probabilities",
                atoms.len(),
                probs.len()
            )));
        }
        if !(upper.is_finite() && upper > 0.0) {
            return Err(Error::invalid(format!(
                "strike upper bound {upper} must be > 0"
            )));
        }
        for w in atoms.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::invalid("atoms must be strictly increasing"));
            }
        }
        if let Some(&bad) = atoms.iter().find(|&&a| !(0.0..=upper).contains(&a)) {
            return Err(Error::invalid(format!("atom {bad} outside [0, {upper}]")));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("probabilities must be finite and >= 0"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(DemandDistribution {
            atoms,
            probs,
            upper,
        })
    }

    /// Normalises non-negative weights attached to (possibly repeated,
    /// unsorted) points. Repeated points are merged.
    pub fn from_weights(points: &[(f64, f64)], upper: f64) -> Result<Self> {
        if points.iter().any(|&(_, w)| !(w >= 0.0)) {
            return Err(Error::invalid("invalid count"));
        }
        let mut pts: Vec<(f64, f64)> = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::with_capacity(pts.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pts.len());
        for (x, w) in pts {
            match atoms.last() {
                Some(&last) if last == x => *weights.last_mut().unwrap() += w,
                _ => {
                    atoms.push(x);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("empty distribution"));
        }
        let probs = weights.iter().map(|w| w / total).collect();
        Self::new(atoms, probs, upper)
    }

    /// Equal weights on `atoms`; the domain is `[0, max atom]`.
    pub fn uniform(atoms: &[f64]) -> Result<Self> {
        let upper = atoms
            .iter()
            .cloned()
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let pts: Vec<_> = atoms.iter().map(|&a| (a, 1.0)).collect();
        Self::from_weights(&pts, upper)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().zip(self.probs.iter().copied())
    }

    /// Atoms carrying positive mass.
    pub fn support(&self) -> impl Iterator<Item = f64> + '_ {
        self.iter().filter(|&(_, p)| p > 0.0).map(|(a, _)| a)
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(a, p)| a * p).sum()
    }

    /// Atom with the largest probability (lowest atom on ties).
    pub fn mode(&self) -> f64 {
        let mut best = (self.atoms[0], self.probs[0]);
        for (a, p) in self.iter().skip(1) {
            if p > best.1 {
                best = (a, p);
            }
        }
        best.0
    }

    /// Smallest atom whose cumulative probability reaches `level`.
    pub fn quantile(&self, level: f64) -> f64 {
        let level = level.clamp(0.0, 1.0);
        let mut cum = 0.0;
        for (a, p) in self.iter() {
            if p == 0.0 {
                continue;
            }
            cum += p;
            if cum >= level - PROB_SUM_TOL {
                return a;
            }
        }
        self.support()
            .last()
            .unwrap_or(self.atoms[self.atoms.len() - 1])
    }

    /// Same probabilities on atoms multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::invalid("scale factor must be > 0"));
        }
        Self::new(
            self.atoms.iter().map(|a| a * factor).collect(),
            self.probs.clone(),
            self.upper * factor,
        )
    }
}

/// Estimates the demand law from traded counts per strike.
///
/// With `spot = Some(s)` the strikes are absolute prices and are converted to
/// percent of `s`; otherwise they are taken as moneyness already.
pub fn build_empirical_distribution(
    rows: &[(f64, i64)],
    spot: Option<f64>,
    upper: f64,
) -> Result<DemandDistribution> {
    if let Some(&(k, c)) = rows.iter().find(|&&(_, c)| c < 0) {
        return Err(Error::invalid(format!("invalid count {c} at strike {k}")));
    }
    let scale = match spot {
        Some(s) if s > 0.0 => 100.0 / s,
        Some(s) => return Err(Error::invalid(format!("spot {s} must be > 0"))),
        None => 1.0,
    };
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(k, c)| (k * scale, c as f64)).collect();
    if pts.is_empty() || pts.iter().all(|&(_, w)| w == 0.0) {
        return Err(Error::invalid("empty distribution"));
    }
    DemandDistribution::from_weights(&pts, upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows_from_december_column() {
        let d =
            build_empirical_distribution(&[(90.0, 113210), (100.0, 159075)], None, 200.0).unwrap();
        assert_eq!(d.atoms(), &[90.0, 100.0]);
        assert_eq!(d.probs()[0], 113210.0 / 272285.0);
        assert_eq!(d.probs()[1], 159075.0 / 272285.0);
    }

    #[test]
    fn single_atom_has_unit_mass() {
        let d = build_empirical_distribution(&[(100.0, 7)], None, 200.0).unwrap();
        assert_eq!(d.atoms(), &[100.0]);
        assert_eq!(d.probs(), &[1.0]);
    }

    #[test]
    fn duplicates_are_merged_and_sorted() {
        let d = build_empirical_distribution(&[(110.0, 1), (90.0, 2), (110.0, 1)], None, 200.0)
            .unwrap();
        assert_eq!(d.atoms(), &[90.0, 110.0]);
        assert_eq!(d.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn all_zero_counts_are_rejected() {
        let err = build_empirical_distribution(&[(90.0, 0), (100.0, 0)], None, 200.0).unwrap_err();
        assert!(err.to_string().contains("empty distribution"));
        let err = build_empirical_distribution(&[], None, 200.0).unwrap_err();
        assert!(err.to_string().contains("empty distribution"));
    }

    #[test]
    fn negative_count_is_rejected() {
        let err = build_empirical_distribution(&[(90.0, -1)], None, 200.0).unwrap_err();
        assert!(err.to_string().contains("invalid count"));
    }

    #[test]
    fn spot_normalisation() {
        let d =
            build_empirical_distribution(&[(4500.0, 1), (5000.0, 1)], Some(5000.0), 200.0).unwrap();
        assert_eq!(d.atoms(), &[90.0, 100.0]);
    }

    #[test]
    fn atoms_outside_domain_are_rejected() {
        assert!(build_empirical_distribution(&[(250.0, 1)], None, 200.0).is_err());
        assert!(build_empirical_distribution(&[(-1.0, 1)], None, 200.0).is_err());
    }

    #[test]
    fn weighted_quantiles() {
        let d = DemandDistribution::uniform(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.quantile(0.1), 0.0);
        assert_eq!(d.quantile(0.25), 0.0);
        assert_eq!(d.quantile(0.26), 1.0);
        assert_eq!(d.quantile(0.9), 3.0);
        assert_eq!(d.mean(), 1.5);
    }
}
