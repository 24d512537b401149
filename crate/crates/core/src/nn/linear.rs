//! Fully connected layer.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::rng::DetRng;

/// Dense layer computing `Y = X · Wᵀ + b` over row-major batches.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    /// Weights, shape (out, in).
    pub w: Array2<f64>,
    /// Bias, shape (out,).
    pub b: Array1<f64>,
}

/// Gradients of the loss w.r.t. a linear layer's parameters.
#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
}

impl LinearLayer {
    /// Zero-initialized layer (tests and deserialization).
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LinearLayer {
            w: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
        }
    }

    /// Kaiming-uniform init scaled for Leaky ReLU: weights drawn from
    /// `U(-bound, bound)` with `bound = gain * sqrt(3 / fan_in)` and
    /// `gain = sqrt(2 / (1 + alpha^2))`; biases zero. Weights are drawn in
    /// row-major order so the same seed reproduces the same layer.
    pub fn init_kaiming(in_dim: usize, out_dim: usize, leaky_alpha: f64, rng: &mut DetRng) -> Self {
        let gain = (2.0 / (1.0 + leaky_alpha * leaky_alpha)).sqrt();
        let bound = gain * (3.0 / in_dim as f64).sqrt();
        let mut w = Array2::zeros((out_dim, in_dim));
        for v in w.iter_mut() {
            *v = rng.uniform(-bound, bound);
        }
        LinearLayer {
            w,
            b: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Contract(format!(
                "linear forward: input width {} does not match layer in_dim {}",
                x.ncols(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// `Y = X · Wᵀ + b`, X shape (batch, in) -> (batch, out).
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(x.dot(&self.w.t()) + &self.b)
    }

    /// Given the forward input `x` and upstream gradient `dy`, return
    /// `(dX, grads)` where `dX = dY · W`, `dW = dYᵀ · X`, `db = Σ_batch dY`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>) -> Result<(Array2<f64>, LinearGrads)> {
        self.check_input(x)?;
        if dy.ncols() != self.out_dim() || dy.nrows() != x.nrows() {
            return Err(Error::Contract(format!(
                "linear backward: dY shape ({}, {}) does not match (batch {}, out {})",
                dy.nrows(),
                dy.ncols(),
                x.nrows(),
                self.out_dim()
            )));
        }
        let dx = dy.dot(&self.w);
        let dw = dy.t().dot(x);
        let db = dy.sum_axis(ndarray::Axis(0));
        Ok((dx, LinearGrads { dw, db }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = LinearLayer {
            w: Array2::eye(3),
            b: Array1::zeros(3),
        };
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]];
        let y = layer.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn one_by_one_layer_hand_gradients() {
        // y = 2x + 3 at x=5 -> 13; dY=1 -> dW=5, db=1, dX=2.
        let layer = LinearLayer {
            w: array![[2.0]],
            b: array![3.0],
        };
        let x = array![[5.0]];
        let y = layer.forward(&x).unwrap();
        assert_eq!(y, array![[13.0]]);
        let dy = array![[1.0]];
        let (dx, grads) = layer.backward(&x, &dy).unwrap();
        assert_eq!(grads.dw, array![[5.0]]);
        assert_eq!(grads.db, array![1.0]);
        assert_eq!(dx, array![[2.0]]);
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let layer = LinearLayer::zeros(3, 2);
        let x = array![[1.0, 2.0]];
        assert!(matches!(layer.forward(&x), Err(crate::error::Error::Contract(_))));
    }

    #[test]
    fn kaiming_init_is_seeded_and_bounded() {
        let mut r1 = DetRng::new(5);
        let mut r2 = DetRng::new(5);
        let a = LinearLayer::init_kaiming(64, 32, 1e-2, &mut r1);
        let b = LinearLayer::init_kaiming(64, 32, 1e-2, &mut r2);
        assert_eq!(a.w, b.w);
        let gain = (2.0f64 / (1.0 + 1e-4)).sqrt();
        let bound = gain * (3.0f64 / 64.0).sqrt();
        assert!(a.w.iter().all(|&v| v.abs() <= bound));
        assert!(a.b.iter().all(|&v| v == 0.0));
    }
}
