//! Mean squared error over a batch.

use ndarray::Array2;

use crate::error::{Error, Result};

/// MSE over every element of the batch: `mean((x̂ - x)^2)`, together with
/// the gradient w.r.t. the reconstruction, `2 (x̂ - x) / count`.
pub fn mse_loss(xhat: &Array2<f64>, x: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    if xhat.dim() != x.dim() {
        return Err(Error::Contract(format!(
            "mse: shape {:?} vs {:?}",
            xhat.dim(),
            x.dim()
        )));
    }
    let count = xhat.len() as f64;
    let diff = xhat - x;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    let grad = diff.mapv(|d| 2.0 * d / count);
    Ok((loss, grad))
}
