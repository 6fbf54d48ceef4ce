use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use super::{derived_constants, DerivedConstants};
use crate::error::{Error, Result};
use crate::market::{cap_open, ModelParams, OptionSpec, Side};
use crate::stats::Estimate;

/// Per-path generator: one ChaCha stream per path index, so results do not
/// depend on how paths are spread over threads.
pub(crate) fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Feynman-Kac estimate of `U~(t, q)`:
///
/// `E[exp(int_t^T (-kappa Q_s^2 + sum_{k,i} c_hat_k 1{phi(i) Q_s > -q_bar}) ds)]`
///
/// where `Q` jumps by `-delta_k` (ask) or `+delta_k` (bid) at the gated
/// constant rates `c_hat_k`. Rates are constant between jumps, so jump times
/// are exact competing exponentials and the integral is exact.
pub fn value_monte_carlo(
    params: &ModelParams,
    specs: &[OptionSpec],
    t: f64,
    q: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    let consts = derived_constants(params, specs)?;
    value_monte_carlo_with(&consts, params, specs, t, q, n_paths, seed)
}

pub fn value_monte_carlo_with(
    consts: &DerivedConstants,
    params: &ModelParams,
    specs: &[OptionSpec],
    t: f64,
    q: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be >= 1"));
    }
    if !(t <= params.horizon && t >= 0.0) {
        return Err(Error::invalid(format!(
            "t = {t} outside [0, {}]",
            params.horizon
        )));
    }
    let remaining = params.horizon - t;
    if remaining == 0.0 {
        return Ok(Estimate {
            mean: 1.0,
            stderr: 0.0,
            samples: n_paths,
        });
    }
    // every sample is at most exp(shift); factoring it out keeps the samples in (0, 1]
    let shift = 2.0 * consts.total_c_hat() * remaining;
    let samples: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            (path_log_functional(consts, params, specs, remaining, q, &mut rng) - shift).exp()
        })
        .collect();
    Ok(Estimate::from_samples(&samples).scaled(shift.exp()))
}

fn path_log_functional(
    consts: &DerivedConstants,
    params: &ModelParams,
    specs: &[OptionSpec],
    remaining: f64,
    q0: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let q_bar = params.q_bar_f64();
    let mut net = vec![0i64; specs.len()];
    let mut q = q0;
    let mut clock = 0.0;
    let mut acc = 0.0;
    let mut rates = vec![0.0; 2 * specs.len()];
    loop {
        let mut total = 0.0;
        for (k, oc) in consts.options.iter().enumerate() {
            for side in Side::ALL {
                let r = if cap_open(side, q, q_bar) {
                    oc.c_hat
                } else {
                    0.0
                };
                rates[2 * k + side.index()] = r;
                total += r;
            }
        }
        let drift = -consts.kappa * q * q + total;
        let wait = if total > 0.0 {
            rng.sample::<f64, _>(Exp1) / total
        } else {
            f64::INFINITY
        };
        if clock + wait >= remaining {
            acc += drift * (remaining - clock);
            return acc;
        }
        acc += drift * wait;
        clock += wait;

        let mut pick = rng.random::<f64>() * total;
        let mut chosen = rates.len() - 1;
        for (s, r) in rates.iter().enumerate() {
            if pick < *r {
                chosen = s;
                break;
            }
            pick -= r;
        }
        // rounding can land on a zero-rate slot at the end; walk back to an open one
        while rates[chosen] == 0.0 {
            chosen -= 1;
        }
        let k = chosen / 2;
        let side = if chosen.is_multiple_of(2) {
            Side::Ask
        } else {
            Side::Bid
        };
        net[k] -= side.phi() as i64;
        q = q0
            + specs
                .iter()
                .zip(&net)
                .map(|(s, &n)| s.delta * n as f64)
                .sum::<f64>();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single() -> Vec<OptionSpec> {
        vec![OptionSpec::reference_book()[0].clone()]
    }

    #[test]
    fn at_horizon_the_value_is_one() {
        let p = ModelParams::default();
        let e = value_monte_carlo(&p, &single(), p.horizon, 3.0, 10, 1).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
    }

    #[test]
    fn no_flow_is_deterministic_decay() {
        let p = ModelParams {
            intensity_scale: 0.0,
            ..ModelParams::default()
        };
        let c = derived_constants(&p, &single()).unwrap();
        let e = value_monte_carlo(&p, &single(), 20.0, 2.5, 50, 9).unwrap();
        let exact = (-c.kappa * 2.5 * 2.5 * 80.0).exp();
        assert!((e.mean - exact).abs() < 1e-14 * exact);
        assert!(e.stderr < 1e-14 * exact);
    }

    #[test]
    fn estimate_is_reproducible() {
        let p = ModelParams::default();
        let a = value_monte_carlo(&p, &single(), 90.0, 0.0, 2000, 42).unwrap();
        let b = value_monte_carlo(&p, &single(), 90.0, 0.0, 2000, 42).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn zero_paths_is_an_error() {
        let p = ModelParams::default();
        assert!(value_monte_carlo(&p, &single(), 0.0, 0.0, 0, 1).is_err());
    }
}
