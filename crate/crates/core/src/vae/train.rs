//! Mini-batch training with early stopping on the test loss.

use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};
use crate::nn::{adam_step, mse_loss, AdamHyper, AdamState};
use crate::rng::{derive_seed, DetRng};

use super::{VaeMode, VaeModel};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochLoss>,
    pub best_epoch: usize,
}

impl LossHistory {
    pub fn best_test_loss(&self) -> f64 {
        self.epochs
            .get(self.best_epoch)
            .map_or(f64::INFINITY, |e| e.test_loss)
    }

    /// Convergence as reported for loss curves: the range of the last
    /// `window` test losses is below `tol` times their mean.
    pub fn converged(&self, window: usize, tol: f64) -> bool {
        if self.epochs.len() < window {
            return false;
        }
        let tail = &self.epochs[self.epochs.len() - window..];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for e in tail {
            lo = lo.min(e.test_loss);
            hi = hi.max(e.test_loss);
            sum += e.test_loss;
        }
        let mean = sum / window as f64;
        mean > 0.0 && (hi - lo) < tol * mean
    }
}

/// Loss history CSV: `epoch,train_loss,test_loss`.
pub fn write_loss_csv(history: &LossHistory, path: &std::path::Path) -> Result<()> {
    let mut out = String::from("epoch,train_loss,test_loss\n");
    for e in &history.epochs {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.test_loss));
    }
    crate::util::atomic_write(path, out.as_bytes())
}

/// KL divergence to the unit Gaussian, averaged over every (sample, latent)
/// element: `-0.5 * mean(1 + log_var - mu^2 - exp(log_var))`. Nonnegative.
pub fn kl_divergence(mu: &Array2<f64>, log_var: &Array2<f64>) -> f64 {
    let count = mu.len() as f64;
    let mut sum = 0.0;
    for (m, lv) in mu.iter().zip(log_var.iter()) {
        sum += 1.0 + lv - m * m - lv.exp();
    }
    -0.5 * sum / count
}

pub(super) struct StepResult {
    pub loss: f64,
    /// Flat gradients: encoder parameters then decoder parameters.
    pub grads: Vec<f64>,
}

/// Forward + backward for one batch in train mode. `fixed_noise` pins the
/// reparameterization draw (gradient checking); `None` samples fresh noise
/// from `rng`.
pub(super) fn train_step(
    model: &mut VaeModel,
    batch: &Array2<f64>,
    rng: Option<&mut DetRng>,
    fixed_noise: Option<&Array2<f64>>,
    update_running: bool,
) -> Result<StepResult> {
    let p = model.config.feature_dim;
    match model.config.mode {
        VaeMode::Deterministic => {
            let (z, enc_cache) = model.encoder.forward_train(batch, update_running)?;
            let (xhat, dec_cache) = model.decoder.forward_train(&z, update_running)?;
            let (loss, dxhat) = mse_loss(&xhat, batch)?;
            let (dz, dec_grads) = model.decoder.backward(&dec_cache, &dxhat)?;
            let (_, enc_grads) = model.encoder.backward(&enc_cache, &dz)?;
            let mut grads = model.encoder.grads_flat(&enc_grads)?;
            grads.extend(model.decoder.grads_flat(&dec_grads)?);
            Ok(StepResult { loss, grads })
        }
        VaeMode::Variational => {
            let (enc_out, enc_cache) = model.encoder.forward_train(batch, update_running)?;
            let mu = enc_out.slice(s![.., ..p]).to_owned();
            let log_var = enc_out.slice(s![.., p..]).to_owned();
            let sigma = log_var.mapv(|v| (0.5 * v).exp());
            let eps = match fixed_noise {
                Some(e) => e.clone(),
                None => {
                    let rng = rng.expect("sampling rng required without fixed noise");
                    let mut e = Array2::zeros(mu.raw_dim());
                    for v in e.iter_mut() {
                        *v = rng.standard_normal();
                    }
                    e
                }
            };
            let z = &mu + &(&sigma * &eps);
            let (xhat, dec_cache) = model.decoder.forward_train(&z, update_running)?;
            let (mse, dxhat) = mse_loss(&xhat, batch)?;
            let beta = model.config.kl_weight;
            let kl = kl_divergence(&mu, &log_var);
            let loss = mse + beta * kl;

            let (dz, dec_grads) = model.decoder.backward(&dec_cache, &dxhat)?;
            let count = mu.len() as f64;
            // d loss / d mu = dz (through z) + beta * mu / count (through KL)
            let dmu = &dz + &mu.mapv(|m| beta * m / count);
            // d loss / d log_var = dz * eps * sigma / 2 + beta (e^lv - 1)/(2 count)
            let dlv = &(&dz * &eps * &sigma).mapv(|v| 0.5 * v)
                + &log_var.mapv(|lv| beta * (lv.exp() - 1.0) / (2.0 * count));
            let d_enc_out = ndarray::concatenate(Axis(1), &[dmu.view(), dlv.view()])
                .map_err(|e| Error::Contract(format!("concat grads: {e}")))?;
            let (_, enc_grads) = model.encoder.backward(&enc_cache, &d_enc_out)?;
            let mut grads = model.encoder.grads_flat(&enc_grads)?;
            grads.extend(model.decoder.grads_flat(&dec_grads)?);
            Ok(StepResult { loss, grads })
        }
    }
}

/// Eval-mode loss on a dataset: MSE of the reconstruction, plus
/// `kl_weight * KL` in variational mode (latent is the mean; no sampling).
pub fn eval_loss(model: &VaeModel, x: &Array2<f64>) -> Result<f64> {
    match model.config.mode {
        VaeMode::Deterministic => {
            let xhat = model.reconstruct(x)?;
            Ok(mse_loss(&xhat, x)?.0)
        }
        VaeMode::Variational => {
            let p = model.config.feature_dim;
            let enc_out = model.encoder.forward_eval(x)?;
            let mu = enc_out.slice(s![.., ..p]).to_owned();
            let log_var = enc_out.slice(s![.., p..]).to_owned();
            let xhat = model.decoder.forward_eval(&mu)?;
            let (mse, _) = mse_loss(&xhat, x)?;
            Ok(mse + model.config.kl_weight * kl_divergence(&mu, &log_var))
        }
    }
}

/// Train on shuffled mini-batches with Adam; record per-epoch train and test
/// losses; stop at `max_epochs` or when the test loss has not improved by
/// more than 1e-6 for `patience` epochs. The returned model carries the
/// parameters of the best-test-loss epoch.
pub fn train(
    model: &mut VaeModel,
    train_x: &Array2<f64>,
    test_x: &Array2<f64>,
) -> Result<LossHistory> {
    if train_x.nrows() == 0 {
        return Err(Error::Contract("training set is empty".into()));
    }
    model.check_width(train_x)?;
    if test_x.nrows() > 0 {
        model.check_width(test_x)?;
    }
    if train_x.iter().chain(test_x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite training input".into()));
    }

    let params = model.config.training;
    let n = train_x.nrows();
    let batch_size = params.batch_size.min(n).max(2.min(n));
    let mut adam = AdamState::new(
        AdamHyper {
            lr: params.lr,
            beta1: params.adam_beta1,
            beta2: params.adam_beta2,
            eps: params.adam_eps,
        },
        model.param_count(),
    );
    let mut shuffle_rng = DetRng::new(derive_seed(params.seed, &["shuffle"]));
    let mut noise_rng = DetRng::new(derive_seed(params.seed, &["reparam"]));

    let mut history = LossHistory::default();
    let mut best_loss = f64::INFINITY;
    let mut best_snapshot: Option<(crate::nn::DenseStack, crate::nn::DenseStack)> = None;
    let mut stale = 0usize;
    let enc_count = model.encoder.param_count();

    for epoch in 0..params.max_epochs {
        let order = shuffle_rng.shuffled_indices(n);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for (batch_idx, chunk) in order.chunks(batch_size).enumerate() {
            // Batchnorm needs at least two rows; fold a trailing singleton
            // into nothing rather than normalizing a batch of one.
            if chunk.len() < 2 && n >= 2 {
                continue;
            }
            let batch = train_x.select(Axis(0), chunk);
            let step = train_step(model, &batch, Some(&mut noise_rng), None, true)?;
            if !step.loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    message: format!("non-finite loss {}", step.loss),
                });
            }
            let mut flat = model.encoder.params_flat();
            flat.extend(model.decoder.params_flat());
            adam_step(&mut adam, &mut flat, &step.grads).map_err(|e| Error::Training {
                epoch,
                batch: batch_idx,
                message: e.to_string(),
            })?;
            model.encoder.set_params_flat(&flat[..enc_count])?;
            model.decoder.set_params_flat(&flat[enc_count..])?;
            epoch_loss += step.loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = epoch_loss / seen.max(1) as f64;
        let test_loss = if test_x.nrows() > 0 {
            eval_loss(model, test_x)?
        } else {
            train_loss
        };
        if !test_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                batch: 0,
                message: format!("non-finite test loss {test_loss}"),
            });
        }
        history.epochs.push(EpochLoss {
            epoch,
            train_loss,
            test_loss,
        });

        if test_loss < best_loss - 1e-6 {
            best_loss = test_loss;
            history.best_epoch = epoch;
            best_snapshot = Some((model.encoder.clone(), model.decoder.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= params.patience {
                break;
            }
        }
    }

    if let Some((enc, dec)) = best_snapshot {
        model.encoder = enc;
        model.decoder = dec;
    }
    model.metadata.trained_epochs = history.epochs.len();
    model.metadata.best_epoch = history.best_epoch;
    model.metadata.best_test_loss = history.best_test_loss();
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::VaeConfig;

    fn toy_data(n: usize, d: usize, seed: u64) -> Array2<f64> {
        // Low-dimensional structure plus small noise, scaled into (-1, 1).
        let mut rng = DetRng::new(seed);
        let mut x = Array2::zeros((n, d));
        for i in 0..n {
            let a = rng.standard_normal() * 0.3;
            let b = rng.standard_normal() * 0.3;
            for j in 0..d {
                let basis = if j % 2 == 0 { a } else { b };
                x[[i, j]] = (basis + rng.standard_normal() * 0.01).clamp(-0.99, 0.99);
            }
        }
        x
    }

    #[test]
    fn training_improves_on_epoch_zero() {
        let mut config = VaeConfig::new(8, 1, 2);
        config.training.max_epochs = 30;
        config.training.batch_size = 16;
        config.training.seed = 4;
        let mut model = VaeModel::build(config).unwrap();
        let train_x = toy_data(128, 8, 10);
        let test_x = toy_data(32, 8, 11);
        let history = train(&mut model, &train_x, &test_x).unwrap();
        let first = history.epochs.first().unwrap().train_loss;
        let best = history.epochs[history.best_epoch].train_loss;
        assert!(best < first, "best {best} vs first {first}");
    }

    #[test]
    fn returned_model_matches_best_recorded_test_loss() {
        let mut config = VaeConfig::new(8, 1, 2);
        config.training.max_epochs = 25;
        config.training.batch_size = 16;
        let mut model = VaeModel::build(config).unwrap();
        let train_x = toy_data(96, 8, 20);
        let test_x = toy_data(48, 8, 21);
        let history = train(&mut model, &train_x, &test_x).unwrap();
        let min_recorded = history
            .epochs
            .iter()
            .map(|e| e.test_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(history.best_test_loss(), min_recorded);
        let actual = eval_loss(&model, &test_x).unwrap();
        assert!(
            (actual - min_recorded).abs() < 1e-12,
            "restored model loss {actual} vs recorded best {min_recorded}"
        );
    }

    #[test]
    fn training_is_bit_reproducible() {
        let run = || {
            let mut config = VaeConfig::new(8, 1, 2);
            config.training.max_epochs = 10;
            config.training.batch_size = 16;
            config.training.seed = 5;
            let mut model = VaeModel::build(config).unwrap();
            let train_x = toy_data(64, 8, 30);
            let test_x = toy_data(16, 8, 31);
            train(&mut model, &train_x, &test_x).unwrap();
            model.encoder.params_flat()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn variational_with_zero_noise_matches_mu_path() {
        let mut config = VaeConfig::new(8, 1, 2);
        config.mode = VaeMode::Variational;
        config.kl_weight = 0.0;
        let mut model = VaeModel::build(config).unwrap();
        let x = toy_data(16, 8, 40);
        let zero_noise = Array2::zeros((16, 2));
        let step = train_step(&mut model, &x, None, Some(&zero_noise), false).unwrap();
        // With eps = 0 and beta = 0 the loss is exactly the MSE through mu.
        let (enc_out, _) = model.encoder.forward_train(&x, false).unwrap();
        let mu = enc_out.slice(s![.., ..2]).to_owned();
        let (xhat, _) = model.decoder.forward_train(&mu, false).unwrap();
        let (mse, _) = mse_loss(&xhat, &x).unwrap();
        assert!((step.loss - mse).abs() < 1e-12);
    }

    #[test]
    fn kl_is_nonnegative() {
        let mut rng = DetRng::new(50);
        for _ in 0..100 {
            let mut mu = Array2::zeros((4, 3));
            let mut lv = Array2::zeros((4, 3));
            for v in mu.iter_mut() {
                *v = rng.standard_normal();
            }
            for v in lv.iter_mut() {
                *v = rng.standard_normal() * 2.0;
            }
            assert!(kl_divergence(&mu, &lv) >= 0.0);
        }
        let zero = Array2::zeros((4, 3));
        assert_eq!(kl_divergence(&zero, &zero), 0.0);
    }

    #[test]
    fn variational_gradients_match_finite_differences() {
        let mut config = VaeConfig::new(6, 1, 2);
        config.mode = VaeMode::Variational;
        config.kl_weight = 0.5;
        let model = VaeModel::build(config).unwrap();
        let x = toy_data(8, 6, 60);
        let mut noise_rng = DetRng::new(61);
        let mut eps = Array2::zeros((8, 2));
        for v in eps.iter_mut() {
            *v = noise_rng.standard_normal();
        }

        let mut work = model.clone();
        let step = train_step(&mut work, &x, None, Some(&eps), false).unwrap();

        let enc_count = model.encoder.param_count();
        let mut params0 = model.encoder.params_flat();
        params0.extend(model.decoder.params_flat());
        let report = crate::nn::gradient_check_fn(
            &params0,
            &step.grads,
            |flat| {
                let mut m = model.clone();
                m.encoder.set_params_flat(&flat[..enc_count]).unwrap();
                m.decoder.set_params_flat(&flat[enc_count..]).unwrap();
                train_step(&mut m, &x, None, Some(&eps), false).unwrap().loss
            },
            crate::nn::DEFAULT_H,
            1e-4,
            crate::nn::DEFAULT_DENOM_FLOOR,
        );
        assert!(report.passed(), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut model = VaeModel::build(VaeConfig::new(4, 1, 2)).unwrap();
        let mut x = toy_data(8, 4, 70);
        x[[0, 0]] = f64::NAN;
        let test = toy_data(4, 4, 71);
        assert!(matches!(
            train(&mut model, &x, &test),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn loss_csv_round_trips_values() {
        let history = LossHistory {
            epochs: vec![
                EpochLoss { epoch: 0, train_loss: 0.5, test_loss: 0.625 },
                EpochLoss { epoch: 1, train_loss: 0.25, test_loss: 0.3125 },
            ],
            best_epoch: 1,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss_csv(&history, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("epoch,train_loss,test_loss"));
        for (line, e) in lines.zip(&history.epochs) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[0].parse::<usize>().unwrap(), e.epoch);
            assert_eq!(cols[1].parse::<f64>().unwrap(), e.train_loss);
            assert_eq!(cols[2].parse::<f64>().unwrap(), e.test_loss);
        }
    }
}
