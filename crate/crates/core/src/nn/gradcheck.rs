//! Central finite-difference gradient checking.

use ndarray::Array2;

use crate::error::Result;

use super::loss::mse_loss;
use super::stack::DenseStack;

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Default step for central differences.
pub const DEFAULT_H: f64 = 1e-4;

/// Denominator floor for the relative error. Components whose analytic and
/// numeric gradients are both far below this magnitude cannot be resolved by
/// finite differences and are compared against the floor instead.
pub const DEFAULT_DENOM_FLOOR: f64 = 1e-3;

/// Compare `analytic` against central finite differences of `loss` around
/// `params0`. Relative error per component is
/// `|a - n| / max(|a|, |n|, floor)`; the report carries the maximum.
pub fn gradient_check_fn(
    params0: &[f64],
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
    h: f64,
    tolerance: f64,
    denom_floor: f64,
) -> GradCheckReport {
    assert_eq!(params0.len(), analytic.len());
    let mut work = params0.to_vec();
    let mut max_rel = 0.0f64;
    let mut worst = 0usize;
    for i in 0..work.len() {
        let saved = work[i];
        work[i] = saved + h;
        let up = loss(&work);
        work[i] = saved - h;
        let down = loss(&work);
        work[i] = saved;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(denom_floor);
        if rel > max_rel {
            max_rel = rel;
            worst = i;
        }
    }
    GradCheckReport {
        max_rel_error: max_rel,
        worst_param: worst,
        checked: params0.len(),
        tolerance,
    }
}

/// Analytic gradients of `mse(stack(x), target)` w.r.t. the stack parameters
/// and the input, flattened as `params ++ x` — the layout used by
/// [`check_stack_mse`].
pub fn stack_mse_gradients(
    stack: &mut DenseStack,
    x: &Array2<f64>,
    target: &Array2<f64>,
) -> Result<(f64, Vec<f64>)> {
    let (y, cache) = stack.forward_train(x, false)?;
    let (loss, dy) = mse_loss(&y, target)?;
    let (dx, grads) = stack.backward(&cache, &dy)?;
    let mut flat = stack.grads_flat(&grads)?;
    flat.extend(dx.iter());
    Ok((loss, flat))
}

/// Gradient-check a whole stack (parameters and input) against
/// `mse(stack(x), target)` in train mode.
pub fn check_stack_mse(
    stack: &DenseStack,
    x: &Array2<f64>,
    target: &Array2<f64>,
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let mut work = stack.clone();
    let (_, analytic) = stack_mse_gradients(&mut work, x, target)?;

    let mut params0 = stack.params_flat();
    params0.extend(x.iter());
    let n_params = stack.param_count();
    let shape = x.dim();

    let base = stack.clone();
    let target = target.clone();
    let loss = move |flat: &[f64]| -> f64 {
        let mut s = base.clone();
        s.set_params_flat(&flat[..n_params]).expect("param count");
        let xin = Array2::from_shape_vec(shape, flat[n_params..].to_vec()).expect("shape");
        let (y, _) = s.forward_train(&xin, false).expect("forward");
        mse_loss(&y, &target).expect("mse").0
    };

    Ok(gradient_check_fn(
        &params0,
        &analytic,
        loss,
        h,
        tolerance,
        DEFAULT_DENOM_FLOOR,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, BatchNormLayer, Block, LinearLayer};
    use crate::rng::DetRng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut DetRng) -> Array2<f64> {
        let mut x = Array2::zeros((rows, cols));
        for v in x.iter_mut() {
            *v = rng.standard_normal() * 0.5;
        }
        x
    }

    #[test]
    fn linear_mse_gradients_match_finite_differences() {
        let mut rng = DetRng::new(11);
        let stack = DenseStack {
            blocks: vec![Block {
                linear: LinearLayer::init_kaiming(3, 2, 1e-2, &mut rng),
                norm: None,
                act: Activation::Identity,
            }],
        };
        let x = random_matrix(4, 3, &mut rng);
        let t = random_matrix(4, 2, &mut rng);
        let report = check_stack_mse(&stack, &x, &t, DEFAULT_H, 1e-6).unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn leaky_relu_gradients_match_finite_differences() {
        let mut rng = DetRng::new(13);
        let stack = DenseStack {
            blocks: vec![Block {
                linear: LinearLayer::init_kaiming(4, 4, 1e-2, &mut rng),
                norm: None,
                act: Activation::LeakyRelu { alpha: 1e-2 },
            }],
        };
        let x = random_matrix(6, 4, &mut rng);
        let t = random_matrix(6, 4, &mut rng);
        let report = check_stack_mse(&stack, &x, &t, DEFAULT_H, 1e-6).unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn bounded_sigmoid_gradients_match_finite_differences() {
        let mut rng = DetRng::new(17);
        let stack = DenseStack {
            blocks: vec![Block {
                linear: LinearLayer::init_kaiming(3, 3, 1e-2, &mut rng),
                norm: None,
                act: Activation::BoundedSigmoid,
            }],
        };
        let x = random_matrix(5, 3, &mut rng);
        let t = random_matrix(5, 3, &mut rng).mapv(|v| v.clamp(-0.9, 0.9));
        let report = check_stack_mse(&stack, &x, &t, DEFAULT_H, 1e-5).unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences() {
        let mut rng = DetRng::new(19);
        let stack = DenseStack {
            blocks: vec![Block {
                linear: LinearLayer::init_kaiming(5, 5, 1e-2, &mut rng),
                norm: Some(BatchNormLayer::new(5, 0.1, 1e-5).unwrap()),
                act: Activation::Identity,
            }],
        };
        let x = random_matrix(8, 5, &mut rng);
        let t = random_matrix(8, 5, &mut rng);
        let report = check_stack_mse(&stack, &x, &t, DEFAULT_H, 1e-5).unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn mse_alone_matches_finite_differences_tightly() {
        // Loss is quadratic in the input, so central differences are exact
        // up to rounding.
        let mut rng = DetRng::new(23);
        let xhat = random_matrix(4, 3, &mut rng);
        let target = random_matrix(4, 3, &mut rng);
        let (_, analytic) = mse_loss(&xhat, &target).unwrap();
        let flat: Vec<f64> = xhat.iter().copied().collect();
        let analytic: Vec<f64> = analytic.iter().copied().collect();
        let shape = xhat.dim();
        let report = gradient_check_fn(
            &flat,
            &analytic,
            |p| {
                let m = Array2::from_shape_vec(shape, p.to_vec()).unwrap();
                mse_loss(&m, &target).unwrap().0
            },
            DEFAULT_H,
            1e-8,
            DEFAULT_DENOM_FLOOR,
        );
        assert!(report.passed(), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn corrupted_gradient_fails_the_check() {
        let mut rng = DetRng::new(29);
        let stack = DenseStack {
            blocks: vec![Block {
                linear: LinearLayer::init_kaiming(3, 2, 1e-2, &mut rng),
                norm: None,
                act: Activation::LeakyRelu { alpha: 1e-2 },
            }],
        };
        let x = random_matrix(4, 3, &mut rng);
        let t = random_matrix(4, 2, &mut rng);
        let mut work = stack.clone();
        let (_, mut analytic) = stack_mse_gradients(&mut work, &x, &t).unwrap();
        for g in analytic.iter_mut() {
            *g *= 2.0;
        }
        let mut params0 = stack.params_flat();
        params0.extend(x.iter());
        let n_params = stack.param_count();
        let shape = x.dim();
        let report = gradient_check_fn(
            &params0,
            &analytic,
            |flat| {
                let mut s = stack.clone();
                s.set_params_flat(&flat[..n_params]).unwrap();
                let xin = Array2::from_shape_vec(shape, flat[n_params..].to_vec()).unwrap();
                let (y, _) = s.forward_train(&xin, false).unwrap();
                mse_loss(&y, &t).unwrap().0
            },
            DEFAULT_H,
            1e-4,
            DEFAULT_DENOM_FLOOR,
        );
        assert!(!report.passed(), "doubled gradients must not pass");
    }
}
