use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prototype-based numeral embedding settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumeralEmbedderConfig {
    /// Embedding width; one prototype per component.
    pub dim: usize,
    pub interval: (f64, f64),
    pub sigma_sq: f64,
}

impl NumeralEmbedderConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            interval: (-10.0, 10.0),
            sigma_sq: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.interval;
        if self.dim < 2 {
            return Err(Error::Invalid("numeral embedding needs dim >= 2".into()));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Invalid(format!("bad numeral interval [{lo}, {hi}]")));
        }
        if !(self.sigma_sq > 0.0 && self.sigma_sq.is_finite()) {
            return Err(Error::Invalid(format!("sigma_sq must be positive, got {}", self.sigma_sq)));
        }
        Ok(())
    }

    /// Evenly spaced prototypes with exact endpoints.
    pub fn prototypes(&self) -> Vec<f64> {
        let (lo, hi) = self.interval;
        let last = self.dim - 1;
        (0..self.dim)
            .map(|i| {
                if i == last {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / last as f64
                }
            })
            .collect()
    }
}

/// Component `i` is `exp(-|x - q_i| / sigma_sq)`.
///
/// The distance is the unsquared norm of the scalar difference, which makes
/// this a Laplace-type kernel rather than a Gaussian.
pub fn numeral_embed(x: f64, cfg: &NumeralEmbedderConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    NumeralEmbedder::new(cfg)?.embed(x)
}

/// Cached prototypes for repeated embedding.
#[derive(Debug, Clone)]
pub struct NumeralEmbedder {
    prototypes: Vec<f64>,
    inv_sigma_sq: f64,
}

impl NumeralEmbedder {
    pub fn new(cfg: &NumeralEmbedderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            prototypes: cfg.prototypes(),
            inv_sigma_sq: 1.0 / cfg.sigma_sq,
        })
    }

    pub fn dim(&self) -> usize {
        self.prototypes.len()
    }

    pub fn embed(&self, x: f64) -> Result<Vec<f64>> {
        if !x.is_finite() {
            return Err(Error::Numeric(format!("numeral input {x} is not finite")));
        }
        Ok(self
            .prototypes
            .iter()
            .map(|q| (-(x - q).abs() * self.inv_sigma_sq).exp())
            .collect())
    }

    pub fn embed_into(&self, x: f64, out: &mut [f32]) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::Numeric(format!("numeral input {x} is not finite")));
        }
        for (o, q) in out.iter_mut().zip(&self.prototypes) {
            *o = (-(x - q).abs() * self.inv_sigma_sq).exp() as f32;
        }
        Ok(())
    }
}
