//! Batch normalization with train/eval modes.
//!
//! Train mode normalizes by the biased batch variance (divide by m) and
//! updates running statistics as
//! `running <- (1 - momentum) * running + momentum * batch`, where the batch
//! variance entering `running_var` carries the unbiased m/(m-1) correction.
//! Eval mode uses the running statistics only.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// Values saved by the train-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    /// Normalized input before gamma/beta.
    pub x_hat: Array2<f64>,
    /// 1 / sqrt(var + eps) per feature.
    pub std_inv: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub dgamma: Array1<f64>,
    pub dbeta: Array1<f64>,
}

impl BatchNormLayer {
    pub fn new(dim: usize, momentum: f64, eps: f64) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::Config(format!("batchnorm eps must be > 0, got {eps}")));
        }
        if !(momentum > 0.0 && momentum < 1.0) {
            return Err(Error::Config(format!(
                "batchnorm momentum must be in (0,1), got {momentum}"
            )));
        }
        Ok(BatchNormLayer {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum,
            eps,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::Contract(format!(
                "batchnorm: input width {} does not match {}",
                x.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Train-mode forward. `update_running` is disabled by the gradient
    /// checker so repeated evaluations do not drift the running statistics.
    pub fn forward_train(
        &mut self,
        x: &Array2<f64>,
        update_running: bool,
    ) -> Result<(Array2<f64>, BatchNormCache)> {
        self.check_input(x)?;
        let m = x.nrows();
        if m < 2 {
            return Err(Error::Contract(format!(
                "batchnorm train mode requires batch size >= 2, got {m}"
            )));
        }
        let mf = m as f64;
        let mean = x.mean_axis(Axis(0)).expect("nonempty batch");
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("nonempty");
        let std_inv = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let x_hat = &centered * &std_inv;
        let y = &x_hat * &self.gamma + &self.beta;

        if update_running {
            let unbiased = var.mapv(|v| v * mf / (mf - 1.0));
            self.running_mean = &self.running_mean * (1.0 - self.momentum) + &mean * self.momentum;
            self.running_var =
                &self.running_var * (1.0 - self.momentum) + &unbiased * self.momentum;
        }

        Ok((y, BatchNormCache { x_hat, std_inv }))
    }

    /// Eval-mode forward using running statistics only.
    pub fn forward_eval(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let std_inv = self.running_var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let x_hat = (x - &self.running_mean) * &std_inv;
        Ok(&x_hat * &self.gamma + &self.beta)
    }

    /// Full batch-norm backward (through batch mean and variance):
    ///
    /// `dX = std_inv/m * (m*dx̂ - Σ dx̂ - x̂ * Σ(dx̂·x̂))` with `dx̂ = dY*γ`.
    pub fn backward(
        &self,
        cache: &BatchNormCache,
        dy: &Array2<f64>,
    ) -> Result<(Array2<f64>, BatchNormGrads)> {
        if dy.dim() != cache.x_hat.dim() {
            return Err(Error::Contract(format!(
                "batchnorm backward: dY shape {:?} vs cache {:?}",
                dy.dim(),
                cache.x_hat.dim()
            )));
        }
        let m = dy.nrows() as f64;
        let dgamma = (dy * &cache.x_hat).sum_axis(Axis(0));
        let dbeta = dy.sum_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.x_hat).sum_axis(Axis(0));
        let dx = (dxhat.mapv(|v| v * m) - &sum_dxhat - &cache.x_hat * &sum_dxhat_xhat)
            * &cache.std_inv.mapv(|v| v / m);
        Ok((dx, BatchNormGrads { dgamma, dbeta }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = DetRng::new(seed);
        let mut x = Array2::zeros((rows, cols));
        for v in x.iter_mut() {
            *v = rng.standard_normal() * 2.0 + 0.5;
        }
        x
    }

    #[test]
    fn train_mode_normalizes_batch() {
        let mut layer = BatchNormLayer::new(5, 0.1, 1e-5).unwrap();
        let x = random_batch(32, 5, 3);
        let (_, cache) = layer.forward_train(&x, true).unwrap();
        let mean = cache.x_hat.mean_axis(Axis(0)).unwrap();
        let var = cache
            .x_hat
            .mapv(|v| v * v)
            .mean_axis(Axis(0))
            .unwrap()
            - mean.mapv(|m| m * m);
        for f in 0..5 {
            assert!(mean[f].abs() < 1e-6, "mean[{f}] = {}", mean[f]);
            assert!((var[f] - 1.0).abs() < 1e-5, "var[{f}] = {}", var[f]);
        }
    }

    #[test]
    fn eval_mode_identity_statistics_pass_through() {
        let layer = BatchNormLayer::new(4, 0.1, 1e-12).unwrap();
        let x = random_batch(8, 4, 7);
        let y = layer.forward_eval(&x).unwrap();
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn batch_of_one_rejected_in_train_mode() {
        let mut layer = BatchNormLayer::new(3, 0.1, 1e-5).unwrap();
        let x = random_batch(1, 3, 1);
        assert!(matches!(
            layer.forward_train(&x, true),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn bad_constants_rejected() {
        assert!(BatchNormLayer::new(3, 0.1, 0.0).is_err());
        assert!(BatchNormLayer::new(3, 1.5, 1e-5).is_err());
    }

    #[test]
    fn running_stats_update_rule() {
        let mut layer = BatchNormLayer::new(1, 0.5, 1e-5).unwrap();
        // Batch with mean 2, biased var 1 (values 1 and 3), unbiased var 2.
        let x = ndarray::array![[1.0], [3.0]];
        layer.forward_train(&x, true).unwrap();
        assert!((layer.running_mean[0] - (0.5 * 0.0 + 0.5 * 2.0)).abs() < 1e-12);
        assert!((layer.running_var[0] - (0.5 * 1.0 + 0.5 * 2.0)).abs() < 1e-12);
    }
}
