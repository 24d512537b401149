//! Encoder/decoder assembly and inference.
//!
//! The architecture family: fully connected layers whose widths follow a
//! geometric sequence from the input dimension down to the feature
//! dimension, batch normalization and Leaky ReLU on every transition except
//! the final one of each stack, and a bounded sigmoid on the decoder output
//! so reconstructions stay inside (-1, 1).

mod checkpoint;
mod train;

pub use train::{eval_loss, kl_divergence, train, write_loss_csv, EpochLoss, LossHistory};

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, BatchNormLayer, Block, DenseStack, LinearLayer};
use crate::rng::{derive_seed, DetRng};

pub const LEAKY_ALPHA: f64 = 1e-2;
pub const DEFAULT_BATCHNORM_MOMENTUM: f64 = 0.1;
pub const DEFAULT_BATCHNORM_EPS: f64 = 1e-5;

fn default_bn_momentum() -> f64 {
    DEFAULT_BATCHNORM_MOMENTUM
}

fn default_bn_eps() -> f64 {
    DEFAULT_BATCHNORM_EPS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VaeMode {
    /// Plain autoencoder: latent is the encoder output, loss is MSE.
    Deterministic,
    /// Reparameterized latent (mu, log sigma^2) with MSE + beta * KL loss.
    /// Evaluation always uses z = mu.
    Variational,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingParams {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a >1e-6 test-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        TrainingParams {
            lr: 1e-3,
            batch_size: 128,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VaeConfig {
    pub input_dim: usize,
    pub num_hidden_layers: usize,
    pub feature_dim: usize,
    pub mode: VaeMode,
    pub kl_weight: f64,
    #[serde(default = "default_bn_momentum")]
    pub bn_momentum: f64,
    #[serde(default = "default_bn_eps")]
    pub bn_eps: f64,
    pub training: TrainingParams,
}

impl VaeConfig {
    pub fn new(input_dim: usize, num_hidden_layers: usize, feature_dim: usize) -> Self {
        VaeConfig {
            input_dim,
            num_hidden_layers,
            feature_dim,
            mode: VaeMode::Deterministic,
            kl_weight: 0.0,
            bn_momentum: DEFAULT_BATCHNORM_MOMENTUM,
            bn_eps: DEFAULT_BATCHNORM_EPS,
            training: TrainingParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_hidden_layers == 0 {
            return Err(Error::Config("at least one hidden layer required".into()));
        }
        if self.feature_dim >= self.input_dim {
            return Err(Error::Config(format!(
                "feature dim {} must be smaller than input dim {}",
                self.feature_dim, self.input_dim
            )));
        }
        if self.kl_weight < 0.0 {
            return Err(Error::Config("kl_weight must be nonnegative".into()));
        }
        if self.mode == VaeMode::Deterministic && self.kl_weight != 0.0 {
            return Err(Error::Config(
                "kl_weight must be 0 in deterministic mode".into(),
            ));
        }
        if self.training.batch_size < 2 {
            return Err(Error::Config(
                "batch size must be at least 2 (batchnorm needs a batch)".into(),
            ));
        }
        if self.training.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Widths of the encoder stack: `[d, d·r, d·r², …, p]` with `L` intermediate
/// entries, `r = (p/d)^(1/(L+1))`, each intermediate rounded to the nearest
/// integer (half away from zero). The decoder uses the reversed list.
pub fn layer_dims(d: usize, hidden_layers: usize, p: usize) -> Result<Vec<usize>> {
    if p >= d {
        return Err(Error::Config(format!(
            "feature dim {p} must be smaller than input dim {d}"
        )));
    }
    if hidden_layers == 0 || p == 0 {
        return Err(Error::Config(
            "hidden layer count and feature dim must be positive".into(),
        ));
    }
    let ratio = (p as f64 / d as f64).powf(1.0 / (hidden_layers as f64 + 1.0));
    let mut dims = Vec::with_capacity(hidden_layers + 2);
    dims.push(d);
    for i in 1..=hidden_layers {
        dims.push((d as f64 * ratio.powi(i as i32)).round() as usize);
    }
    dims.push(p);
    Ok(dims)
}

/// Provenance recorded with every trained model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    /// Input scale factor applied before training (1.0 when unscaled).
    pub scale_factor: f64,
    pub reference_version: String,
    pub target_version: String,
    /// "subtraction" for difference-vector training, "no_subtraction" for
    /// the raw-embedding arm.
    pub ablation: String,
    pub trained_epochs: usize,
    pub best_epoch: usize,
    pub best_test_loss: f64,
}

#[derive(Debug, Clone)]
pub struct VaeModel {
    pub config: VaeConfig,
    pub encoder: DenseStack,
    pub decoder: DenseStack,
    pub metadata: ModelMetadata,
}

impl VaeModel {
    /// Assemble encoder and decoder per the config, parameters initialized
    /// from `config.training.seed`.
    pub fn build(config: VaeConfig) -> Result<VaeModel> {
        config.validate()?;
        let dims = layer_dims(config.input_dim, config.num_hidden_layers, config.feature_dim)?;
        let mut rng = DetRng::new(derive_seed(config.training.seed, &["init"]));
        let transitions = dims.len() - 1;

        let mut encoder_blocks = Vec::with_capacity(transitions);
        for t in 0..transitions {
            let final_t = t == transitions - 1;
            let out_dim = if final_t && config.mode == VaeMode::Variational {
                2 * config.feature_dim
            } else {
                dims[t + 1]
            };
            encoder_blocks.push(Block {
                linear: LinearLayer::init_kaiming(dims[t], out_dim, LEAKY_ALPHA, &mut rng),
                norm: if final_t {
                    None
                } else {
                    Some(BatchNormLayer::new(out_dim, config.bn_momentum, config.bn_eps)?)
                },
                act: if final_t {
                    Activation::Identity
                } else {
                    Activation::LeakyRelu { alpha: LEAKY_ALPHA }
                },
            });
        }

        let rev: Vec<usize> = dims.iter().rev().copied().collect();
        let mut decoder_blocks = Vec::with_capacity(transitions);
        for t in 0..transitions {
            let final_t = t == transitions - 1;
            decoder_blocks.push(Block {
                linear: LinearLayer::init_kaiming(rev[t], rev[t + 1], LEAKY_ALPHA, &mut rng),
                norm: if final_t {
                    None
                } else {
                    Some(BatchNormLayer::new(rev[t + 1], config.bn_momentum, config.bn_eps)?)
                },
                act: if final_t {
                    Activation::BoundedSigmoid
                } else {
                    Activation::LeakyRelu { alpha: LEAKY_ALPHA }
                },
            });
        }

        Ok(VaeModel {
            metadata: ModelMetadata {
                seed: config.training.seed,
                scale_factor: 1.0,
                ..ModelMetadata::default()
            },
            encoder: DenseStack {
                blocks: encoder_blocks,
            },
            decoder: DenseStack {
                blocks: decoder_blocks,
            },
            config,
        })
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    fn check_width(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::Contract(format!(
                "input width {} does not match model input dim {}",
                x.ncols(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    /// Eval-mode latent codes, one row per sample, width `feature_dim`.
    /// In variational mode this is the mean (no sampling at evaluation).
    pub fn encode(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(x)?;
        let out = self.encoder.forward_eval(x)?;
        Ok(match self.config.mode {
            VaeMode::Deterministic => out,
            VaeMode::Variational => out.slice(s![.., ..self.config.feature_dim]).to_owned(),
        })
    }

    /// Eval-mode decoding of latent codes.
    pub fn decode(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.config.feature_dim {
            return Err(Error::Contract(format!(
                "latent width {} does not match feature dim {}",
                z.ncols(),
                self.config.feature_dim
            )));
        }
        self.decoder.forward_eval(z)
    }

    /// Eval-mode reconstruction; a pure function of the input.
    pub fn reconstruct(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let z = self.encode(x)?;
        self.decode(&z)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        checkpoint::save(self, path)
    }

    pub fn load(path: &std::path::Path) -> Result<VaeModel> {
        checkpoint::load(path)
    }
}

/// Parameter count implied by the dims list (oracle for tests): per
/// transition `out·in + out`, plus `2·out` for each batch-normalized one.
pub fn analytic_param_count(dims: &[usize], mode: VaeMode, p: usize) -> usize {
    let transitions = dims.len() - 1;
    let mut count = 0;
    // Encoder.
    for t in 0..transitions {
        let final_t = t == transitions - 1;
        let out = if final_t && mode == VaeMode::Variational {
            2 * p
        } else {
            dims[t + 1]
        };
        count += out * dims[t] + out;
        if !final_t {
            count += 2 * out;
        }
    }
    // Decoder (reversed dims, latent width is p in both modes).
    let rev: Vec<usize> = dims.iter().rev().copied().collect();
    for t in 0..transitions {
        let final_t = t == transitions - 1;
        count += rev[t + 1] * rev[t] + rev[t + 1];
        if !final_t {
            count += 2 * rev[t + 1];
        }
    }
    count
}
