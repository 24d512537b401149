//! Stacks of linear → (batchnorm) → activation blocks with reverse-mode
//! gradients and flat parameter views for the optimizer and checkpoints.

use ndarray::Array2;

use crate::error::{Error, Result};

use super::activation::Activation;
use super::batchnorm::{BatchNormCache, BatchNormGrads, BatchNormLayer};
use super::linear::{LinearGrads, LinearLayer};

/// One transition: linear, optional batchnorm, then an activation.
#[derive(Debug, Clone)]
pub struct Block {
    pub linear: LinearLayer,
    pub norm: Option<BatchNormLayer>,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseStack {
    pub blocks: Vec<Block>,
}

/// Per-block values saved by `forward_train` for the backward pass.
pub struct BlockCache {
    /// Input to the linear layer.
    x: Array2<f64>,
    bn: Option<BatchNormCache>,
    /// Input to the activation (post-norm).
    act_in: Array2<f64>,
}

pub struct StackCache {
    blocks: Vec<BlockCache>,
}

#[derive(Debug, Clone)]
pub struct BlockGrads {
    pub linear: LinearGrads,
    pub norm: Option<BatchNormGrads>,
}

#[derive(Debug, Clone)]
pub struct StackGrads {
    pub blocks: Vec<BlockGrads>,
}

impl DenseStack {
    pub fn in_dim(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.linear.in_dim())
    }

    pub fn out_dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.linear.out_dim())
    }

    /// Trainable parameter count (weights, biases, gamma, beta). Running
    /// statistics are state, not parameters.
    pub fn param_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.linear.param_count() + b.norm.as_ref().map_or(0, |n| n.param_count()))
            .sum()
    }

    /// Train-mode forward. `update_running` controls whether batchnorm
    /// running statistics advance (the gradient checker turns this off).
    pub fn forward_train(
        &mut self,
        x: &Array2<f64>,
        update_running: bool,
    ) -> Result<(Array2<f64>, StackCache)> {
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let lin_in = cur;
            let lin_out = block.linear.forward(&lin_in)?;
            let (act_in, bn_cache) = match &mut block.norm {
                Some(norm) => {
                    let (y, cache) = norm.forward_train(&lin_out, update_running)?;
                    (y, Some(cache))
                }
                None => (lin_out, None),
            };
            cur = block.act.forward(&act_in);
            caches.push(BlockCache {
                x: lin_in,
                bn: bn_cache,
                act_in,
            });
        }
        Ok((cur, StackCache { blocks: caches }))
    }

    /// Eval-mode forward: batchnorm uses running statistics; pure function.
    pub fn forward_eval(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut cur = x.clone();
        for block in &self.blocks {
            let mut y = block.linear.forward(&cur)?;
            if let Some(norm) = &block.norm {
                y = norm.forward_eval(&y)?;
            }
            cur = block.act.forward(&y);
        }
        Ok(cur)
    }

    /// Reverse-mode gradients for the whole stack. Returns the gradient
    /// w.r.t. the stack input and the per-block parameter gradients.
    pub fn backward(&self, cache: &StackCache, dy: &Array2<f64>) -> Result<(Array2<f64>, StackGrads)> {
        if cache.blocks.len() != self.blocks.len() {
            return Err(Error::Contract("stack backward: cache mismatch".into()));
        }
        let mut grads: Vec<Option<BlockGrads>> = (0..self.blocks.len()).map(|_| None).collect();
        let mut up = dy.clone();
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let c = &cache.blocks[i];
            let d_act_in = block.act.backward(&c.act_in, &up);
            let (d_lin_out, bn_grads) = match (&block.norm, &c.bn) {
                (Some(norm), Some(bn_cache)) => {
                    let (dx, g) = norm.backward(bn_cache, &d_act_in)?;
                    (dx, Some(g))
                }
                (None, None) => (d_act_in, None),
                _ => return Err(Error::Contract("stack backward: norm cache mismatch".into())),
            };
            let (dx, lin_grads) = block.linear.backward(&c.x, &d_lin_out)?;
            grads[i] = Some(BlockGrads {
                linear: lin_grads,
                norm: bn_grads,
            });
            up = dx;
        }
        Ok((
            up,
            StackGrads {
                blocks: grads.into_iter().map(|g| g.expect("filled")).collect(),
            },
        ))
    }

    /// Flatten parameters in canonical order: per block, W row-major, b,
    /// then gamma and beta when batchnorm is present.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for b in &self.blocks {
            out.extend(b.linear.w.iter());
            out.extend(b.linear.b.iter());
            if let Some(n) = &b.norm {
                out.extend(n.gamma.iter());
                out.extend(n.beta.iter());
            }
        }
        out
    }

    /// Write a flat parameter buffer back (inverse of `params_flat`).
    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "set_params_flat: {} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut it = flat.iter();
        for b in &mut self.blocks {
            for v in b.linear.w.iter_mut() {
                *v = *it.next().unwrap();
            }
            for v in b.linear.b.iter_mut() {
                *v = *it.next().unwrap();
            }
            if let Some(n) = &mut b.norm {
                for v in n.gamma.iter_mut() {
                    *v = *it.next().unwrap();
                }
                for v in n.beta.iter_mut() {
                    *v = *it.next().unwrap();
                }
            }
        }
        Ok(())
    }

    /// Flatten gradients in the same canonical order as `params_flat`.
    pub fn grads_flat(&self, grads: &StackGrads) -> Result<Vec<f64>> {
        if grads.blocks.len() != self.blocks.len() {
            return Err(Error::Contract("grads_flat: block count mismatch".into()));
        }
        let mut out = Vec::with_capacity(self.param_count());
        for (b, g) in self.blocks.iter().zip(&grads.blocks) {
            out.extend(g.linear.dw.iter());
            out.extend(g.linear.db.iter());
            match (&b.norm, &g.norm) {
                (Some(_), Some(n)) => {
                    out.extend(n.dgamma.iter());
                    out.extend(n.dbeta.iter());
                }
                (None, None) => {}
                _ => return Err(Error::Contract("grads_flat: norm mismatch".into())),
            }
        }
        Ok(out)
    }
}
