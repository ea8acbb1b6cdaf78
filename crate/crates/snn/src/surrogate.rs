//! Spike nonlinearity and its backward substitute.

use serde::{Deserialize, Serialize};

/// Derivative stand-in for the Heaviside step: `1 / (α|x| + 1)²`.
pub fn surrogate_grad(x: f64, alpha: f64) -> f64 {
    let d = alpha * x.abs() + 1.0;
    1.0 / (d * d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpikeFn {
    /// Heaviside forward, [`surrogate_grad`] backward.
    Heaviside { alpha: f64 },
    /// Logistic `σ(k·x)` forward with its exact derivative backward. Only used
    /// to check the gradient plumbing against finite differences.
    Sigmoid { steepness: f64 },
}

impl Default for SpikeFn {
    fn default() -> Self {
        SpikeFn::Heaviside { alpha: 100.0 }
    }
}

impl SpikeFn {
    #[inline]
    pub fn forward(self, x: f64) -> f64 {
        match self {
            SpikeFn::Heaviside { .. } => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            SpikeFn::Sigmoid { steepness } => 1.0 / (1.0 + (-steepness * x).exp()),
        }
    }

    #[inline]
    pub fn backward(self, x: f64) -> f64 {
        match self {
            SpikeFn::Heaviside { alpha } => surrogate_grad(x, alpha),
            SpikeFn::Sigmoid { steepness } => {
                let s = 1.0 / (1.0 + (-steepness * x).exp());
                steepness * s * (1.0 - s)
            }
        }
    }
}
