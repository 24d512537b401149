//! Elementwise activations.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Keep decoder outputs strictly inside (-1, 1): clamp only the last few
/// ulps, where the true gradient is already ~0.
const UNIT_OPEN_BOUND: f64 = 1.0 - 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { alpha: f64 },
    /// `y = 2·σ(x) − 1` (equivalently `tanh(x/2)`): a sigmoid squashed onto
    /// the open interval (−1, 1).
    BoundedSigmoid,
    Identity,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Activation {
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        match *self {
            Activation::LeakyRelu { alpha } => x.mapv(|v| if v >= 0.0 { v } else { alpha * v }),
            Activation::BoundedSigmoid => {
                x.mapv(|v| (2.0 * logistic(v) - 1.0).clamp(-UNIT_OPEN_BOUND, UNIT_OPEN_BOUND))
            }
            Activation::Identity => x.clone(),
        }
    }

    /// Gradient of the loss w.r.t. the activation input, given the forward
    /// input `x` and upstream gradient `dy`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        match *self {
            Activation::LeakyRelu { alpha } => {
                let mut dx = dy.clone();
                dx.zip_mut_with(x, |d, &v| {
                    if v < 0.0 {
                        *d *= alpha;
                    }
                });
                dx
            }
            Activation::BoundedSigmoid => {
                // d/dx (2σ(x) − 1) = 2σ(x)(1 − σ(x))
                let mut dx = dy.clone();
                dx.zip_mut_with(x, |d, &v| {
                    let s = logistic(v);
                    *d *= 2.0 * s * (1.0 - s);
                });
                dx
            }
            Activation::Identity => dy.clone(),
        }
    }
}
