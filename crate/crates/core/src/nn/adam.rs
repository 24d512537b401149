//! Adam optimizer over flat parameter buffers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub hyper: AdamHyper,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(hyper: AdamHyper, param_count: usize) -> Self {
        AdamState {
            hyper,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update with bias correction:
///
/// `m <- β1 m + (1-β1) g`, `v <- β2 v + (1-β2) g²`,
/// `p -= lr · m̂ / (√v̂ + eps)` with `m̂ = m/(1-β1^t)`, `v̂ = v/(1-β2^t)`.
///
/// A non-finite gradient is surfaced as an optimizer error instead of being
/// written into the moments.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::Contract(format!(
            "adam: {} params / {} grads vs state of {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Optimizer(format!(
            "non-finite gradient at parameter {i}: {}",
            grads[i]
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
        state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut state = AdamState::new(AdamHyper::default(), 3);
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        adam_step(&mut state, &mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // Constant gradient 1 on a scalar: after bias correction the first
        // update is -lr / (1 + eps).
        let hyper = AdamHyper {
            lr: 0.1,
            ..AdamHyper::default()
        };
        let mut state = AdamState::new(hyper, 1);
        let mut params = vec![0.0];
        adam_step(&mut state, &mut params, &[1.0]).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((params[0] - expected).abs() < 1e-15, "{}", params[0]);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let run = || {
            let mut state = AdamState::new(AdamHyper::default(), 4);
            let mut params = vec![0.1, 0.2, 0.3, 0.4];
            for step in 0..100 {
                let g: Vec<f64> = params.iter().map(|p| p * 0.3 + step as f64 * 1e-3).collect();
                adam_step(&mut state, &mut params, &g).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut state = AdamState::new(AdamHyper::default(), 2);
        let mut params = vec![0.0, 0.0];
        let err = adam_step(&mut state, &mut params, &[0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::Optimizer(_)));
        assert!(err.to_string().contains("parameter 1"));
    }
}
