use serde::{Deserialize, Serialize};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    /// Mean and standard error of `values`, summed in slice order so the
    /// result does not depend on how the samples were produced.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                samples: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Estimate {
                mean,
                stderr: 0.0,
                samples: 1,
            };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Estimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            samples: n,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Estimate {
            mean: self.mean * factor,
            stderr: self.stderr * factor.abs(),
            samples: self.samples,
        }
    }

    /// `|self - other| <= k * sqrt(se_self^2 + se_other^2)`.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        let se = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        (self.mean - other.mean).abs() <= k * se
    }
}
