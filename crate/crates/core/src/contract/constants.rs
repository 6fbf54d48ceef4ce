use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{ModelParams, OptionSpec};

/// Per-option constants of the exchange's reduced problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionConstants {
    /// `exp(-eta (c + omega (delta_inf - gamma^{-1} log(1 + sigma gamma / C))))`
    pub x1: f64,
    /// `(1 + sigma gamma / C)^{-C / (gamma sigma)} exp(-(C / sigma) f)`
    pub o: f64,
    /// Coefficient of the nonlinear jump term before linearisation.
    pub c_tilde: f64,
    /// Jump coefficient of the linearised PDE, `c_tilde * C / (sigma eta (1 - omega))`.
    pub c_hat: f64,
}

/// Constants shared by the linearised exchange PDE and the optimal incentives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// `eta (1 - omega) + C / sigma`
    pub a: f64,
    /// `C / sigma`
    pub b: f64,
    /// `1 + eta (1 - (1 + sigma gamma / C)^{-1}) / gamma`
    pub x2: f64,
    /// Inventory penalty of the linear PDE,
    /// `(C gamma eta / (gamma + eta)) sigma / (2 (1 - omega))`.
    pub kappa: f64,
    pub options: Vec<OptionConstants>,
}

impl DerivedConstants {
    /// `C / (sigma eta (1 - omega)) = b / (a - b)`, the exponent linking the
    /// exchange value `U < 0` to the transformed value `U~ = (-U)^{-beta}`.
    pub fn beta(&self) -> f64 {
        self.b / (self.a - self.b)
    }

    pub fn total_c_hat(&self) -> f64 {
        self.options.iter().map(|o| o.c_hat).sum()
    }

    /// Incentive paid per trade when the value ratio is one:
    /// `log(b x2 / (a x1)) / (a - b)`.
    pub fn incentive_offset(&self, option: usize) -> f64 {
        (self.b * self.x2 / (self.a * self.options[option].x1)).ln() / (self.a - self.b)
    }

    /// Exchange value `U = -U~^{-1/beta}` recovered from the transformed value.
    pub fn exchange_value(&self, u_tilde: f64) -> f64 {
        -u_tilde.powf(-1.0 / self.beta())
    }
}

/// Derives all constants of the exchange problem from the market parameters
/// and the option book.
///
/// The intensity scale `A` multiplies `c_tilde` (and hence `c_hat`): every
/// jump term of the exchange HJB carries the arrival intensity
/// `A O e^{b z}`.
pub fn derived_constants(params: &ModelParams, specs: &[OptionSpec]) -> Result<DerivedConstants> {
    params.validate()?;
    if !(params.omega < 1.0) {
        return Err(Error::invalid("omega must lie in [0, 1)"));
    }
    for s in specs {
        s.validate()?;
    }
    let (gamma, eta, omega) = (params.gamma, params.eta, params.omega);
    let r = params.risk_ratio();
    let b = params.decay_ratio();
    let a = eta * (1.0 - omega) + b;
    let x2 = 1.0 + eta * (1.0 - 1.0 / (1.0 + r)) / gamma;
    let kappa = (params.intensity_decay * gamma * eta / (gamma + eta)) * params.sigma
        / (2.0 * (1.0 - omega));
    let intercept = params.spread_intercept();
    let ratio = b / a;
    let shape = ratio.powf(b / (a - b)) - ratio.powf(a / (a - b));
    let beta = b / (a - b);

    let options = specs
        .iter()
        .map(|s| {
            let x1 = (-eta * (s.weight + omega * (s.spread_threshold - intercept))).exp();
            let o = (1.0 + r).powf(-1.0 / r) * (-b * s.fee).exp();
            let c_tilde = params.intensity_scale * x2 * (x2 / x1).powf(beta) * o * shape;
            OptionConstants {
                x1,
                o,
                c_tilde,
                c_hat: c_tilde * beta,
            }
        })
        .collect();

    let consts = DerivedConstants {
        a,
        b,
        x2,
        kappa,
        options,
    };
    consts.check()?;
    Ok(consts)
}

impl DerivedConstants {
    fn check(&self) -> Result<()> {
        if !(self.a > self.b && self.b > 0.0) {
            return Err(Error::numerical(format!(
                "need a > b > 0, got a={}, b={}",
                self.a, self.b
            )));
        }
        if !(self.x2 > 1.0) {
            return Err(Error::numerical(format!("x2 = {} must exceed 1", self.x2)));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::numerical("inventory penalty must be > 0"));
        }
        for (k, o) in self.options.iter().enumerate() {
            if !(o.o > 0.0 && o.x1 > 0.0 && o.c_tilde >= 0.0 && o.c_hat >= 0.0)
                || !o.c_hat.is_finite()
            {
                return Err(Error::numerical(format!(
                    "option {k}: non-positive constants {o:?}"
                )));
            }
        }
        Ok(())
    }
}
