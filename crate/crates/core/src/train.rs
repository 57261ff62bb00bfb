//! Mean-squared-error training with Adam and best-validation selection.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{add_awgn, split_train_val, stream_key, Image, NoiseConfig, NoiseDomain, PatchSet};
use crate::eval::psnr_values;
use crate::layers::{network_backward, network_forward, Network};
use crate::par;
use crate::tensor::{ensure_same_shape, Real, Tensor4};
use crate::{Error, Result};

const SHUFFLE_STREAM: u64 = 0x7368_7566_666c_6521;

/// `(mean((pred - target)²), ∂loss/∂pred)`.
pub fn mse_loss<T: Real>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<(f64, Tensor4<T>)> {
    ensure_same_shape(pred, target, "mse_loss")?;
    let n = pred.len();
    if n == 0 {
        return Err(Error::invalid("mse_loss of an empty tensor"));
    }
    let scale = T::from_f64(2.0 / n as f64);
    let mut sum = 0.0f64;
    let grad: Vec<T> = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d.as_f64() * d.as_f64();
            d * scale
        })
        .collect();
    let [b, c, h, w] = pred.shape();
    Ok((sum / n as f64, Tensor4::from_vec(b, c, h, w, grad)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid Adam configuration {self:?}")))
        }
    }
}

/// First and second moment estimates for each parameter tensor plus the
/// shared step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new<S: AsRef<[T]>>(params: &[S]) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.as_ref().len()]).collect();
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update over every parameter tensor.
pub fn adam_step<T: Real>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::invalid(format!(
            "adam_step: {} parameter tensors, {} gradients, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::invalid(format!("adam_step: tensor {i} shape mismatch")));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient {bad:?} in parameter tensor {i}"
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one_b1 = T::from_f64(1.0 - cfg.beta1);
    let one_b2 = T::from_f64(1.0 - cfg.beta2);
    let corr1 = T::from_f64(1.0 - cfg.beta1.powi(t));
    let corr2 = T::from_f64(1.0 - cfg.beta2.powi(t));
    let lr = T::from_f64(cfg.learning_rate);
    let eps = T::from_f64(cfg.epsilon);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + one_b1 * gj;
            v[j] = b2 * v[j] + one_b2 * gj * gj;
            let m_hat = m[j] / corr1;
            let v_hat = v[j] / corr2;
            p[j] = p[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub split_ratio: f64,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn new(noise: NoiseConfig) -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            seed: noise.seed,
            noise,
            split_ratio: 0.95,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be at least 1"));
        }
        if !(self.noise.sigma255 >= 0.0) {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        self.adam.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_psnr: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult<T = f32> {
    /// Parameters from the epoch with the highest validation PSNR.
    pub best: Network<T>,
    pub best_epoch: usize,
    pub best_val_psnr: f64,
    pub history: Vec<EpochRecord>,
    /// PSNR of the frozen noisy validation inputs against their clean
    /// targets, i.e. the score of the identity map.
    pub val_identity_psnr: f64,
}

/// CSV with header `epoch,train_loss,val_psnr`, six decimals.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_psnr\n");
    for r in history {
        let _ = writeln!(out, "{},{:.6},{:.6}", r.epoch, r.train_loss, r.val_psnr);
    }
    out
}

pub fn fit<T: Real>(net: &Network<T>, patches: &PatchSet, cfg: &TrainConfig) -> Result<FitResult<T>> {
    fit_with_progress(net, patches, cfg, |_| {})
}

/// [`fit`] with a callback invoked after every epoch.
pub fn fit_with_progress<T: Real>(
    net: &Network<T>,
    patches: &PatchSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitResult<T>> {
    cfg.validate()?;
    if patches.patch_size < net.spec().layers[0].kernel_size {
        return Err(Error::invalid("patches are smaller than the kernel footprint"));
    }
    if let Some(p) = patches.patches.first() {
        if p.channels() != net.channels() {
            return Err(Error::invalid(format!(
                "patches have {} channels, network expects {}",
                p.channels(),
                net.channels()
            )));
        }
    }
    let (train, val) = split_train_val(patches, cfg.split_ratio, cfg.seed)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid(format!(
            "need non-empty training and validation splits, got {} / {}",
            train.len(),
            val.len()
        )));
    }

    let val_noisy: Vec<Image> = par::map_range(val.len(), |i| {
        add_awgn(
            &val.patches[i],
            &cfg.noise,
            stream_key(NoiseDomain::Validation, 0, i as u64),
        )
    });
    let val_identity_psnr = mean(&par::map_range(val.len(), |i| {
        psnr_values(val.patches[i].pixels(), val_noisy[i].pixels())
    }));

    let mut net = net.clone();
    let mut state = AdamState::new(&net.param_slices());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(Network<T>, usize, f64)> = None;

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(SHUFFLE_STREAM ^ epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut loss_weight = 0usize;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let noisy: Vec<Image> = par::map_range(batch.len(), |j| {
                let i = batch[j];
                add_awgn(
                    &train.patches[i],
                    &cfg.noise,
                    stream_key(NoiseDomain::Train, epoch as u64, i as u64),
                )
            });
            let clean: Vec<&Image> = batch.iter().map(|&i| &train.patches[i]).collect();
            let x = Image::batch_tensor::<T, _>(&noisy)?;
            let target = Image::batch_tensor::<T, _>(&clean)?;

            let (y, cache) = network_forward(&net, &x)?;
            let (loss, gy) = mse_loss(&y, &target)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch: batch_idx,
                    loss,
                });
            }
            let grads = network_backward(&net, &cache, &gy)?;
            drop(cache);
            let grad_slices = grads.slices();
            let mut params = net.param_slices_mut();
            adam_step(&mut params, &grad_slices, &mut state, &cfg.adam)?;
            loss_sum += loss * batch.len() as f64;
            loss_weight += batch.len();
        }

        let val_psnr = validation_psnr(&net, &val, &val_noisy, cfg.batch_size)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / loss_weight as f64,
            val_psnr,
        };
        on_epoch(&record);
        history.push(record);
        if best.as_ref().is_none_or(|(_, _, b)| val_psnr > *b) {
            best = Some((net.clone(), epoch + 1, val_psnr));
        }
    }

    let (best, best_epoch, best_val_psnr) = best.expect("at least one epoch");
    Ok(FitResult {
        best,
        best_epoch,
        best_val_psnr,
        history,
        val_identity_psnr,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn validation_psnr<T: Real>(
    net: &Network<T>,
    clean: &PatchSet,
    noisy: &[Image],
    batch_size: usize,
) -> Result<f64> {
    let mut scores = Vec::with_capacity(noisy.len());
    for (chunk_idx, chunk) in noisy.chunks(batch_size).enumerate() {
        let x = Image::batch_tensor::<T, _>(chunk)?;
        let y = net.predict(&x)?;
        for j in 0..chunk.len() {
            let out = Image::from_tensor_clipped(&y, j)?;
            let reference = &clean.patches[chunk_idx * batch_size + j];
            scores.push(psnr_values(reference.pixels(), out.pixels()));
        }
    }
    Ok(mean(&scores))
}
