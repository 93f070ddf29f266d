use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{DropoutMasks, Workspace};
use super::params::{ModelParams, DEFAULT_HIDDEN, INPUT_CHANNELS};
use super::{check_rate, raw_loss, residuals, Normalization, OdometryModel};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::sim::TruthPose;
use crate::strapdown::ImuSample;
use crate::window::{label_windows, segment, PolarDelta, DEFAULT_STRIDE, DEFAULT_WINDOW_LEN};

/// SplitMix64 finalizer, used to derive independent seeds from one user seed.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(0x6a09_e667_f3bc_c909);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub hidden_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0015,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            kappa: 1.0,
            dropout_rate: 0.25,
            epochs: 100,
            batch_size: 32,
            rng_seed: 0,
            hidden_size: DEFAULT_HIDDEN,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        check_rate(self.dropout_rate)?;
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must be in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if !(self.kappa >= 0.0) {
            return bad("kappa must be >= 0");
        }
        if self.batch_size == 0 || self.hidden_size == 0 {
            return bad("batch_size and hidden_size must be >= 1");
        }
        Ok(())
    }
}

/// One normalized window (`n x 6`, time-major) and its label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample<T> {
    pub input: Vec<T>,
    pub label: PolarDelta<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub window_len: usize,
    pub stride: usize,
    /// Trailing fraction of every track held out for validation.
    pub validation_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            window_len: DEFAULT_WINDOW_LEN,
            stride: DEFAULT_STRIDE,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    pub window_len: usize,
    /// Statistics of the training split; every stored input is already normalized with them.
    pub normalization: Normalization<T>,
    pub train: Vec<LabeledSample<T>>,
    pub validation: Vec<LabeledSample<T>>,
}

impl<T: Real> LabeledDataset<T> {
    /// Windows and labels from `(imu, truth)` tracks, split in time per track:
    /// the leading part trains, the trailing part validates, and windows
    /// straddling the split are dropped.
    pub fn from_tracks(tracks: &[(Vec<ImuSample<T>>, Vec<TruthPose<T>>)], cfg: &DatasetConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.validation_fraction) {
            return Err(Error::InvalidInput("validation_fraction must be in [0, 1)".into()));
        }
        let n = cfg.window_len;
        let mut train_raw = Vec::new();
        let mut val_raw = Vec::new();
        for (imu, truth) in tracks {
            let windows = segment(imu, n, cfg.stride)?;
            let labels = label_windows(truth, &windows)?;
            let split = ((1.0 - cfg.validation_fraction) * imu.len() as f64).round() as usize;
            for (w, label) in windows.iter().zip(labels) {
                let s = w.start_index();
                if s + n <= split {
                    train_raw.push((w.samples(), label));
                } else if s >= split {
                    val_raw.push((w.samples(), label));
                }
            }
        }
        if train_raw.is_empty() {
            return Err(Error::EmptyInput("no training windows".into()));
        }
        let normalization = Normalization::fit(train_raw.iter().flat_map(|(s, _)| s.iter()))?;
        let build = |raw: Vec<(&[ImuSample<T>], PolarDelta<T>)>| {
            raw.into_iter()
                .map(|(s, label)| LabeledSample {
                    input: normalization.apply(s),
                    label,
                })
                .collect()
        };
        Ok(Self {
            window_len: n,
            normalization,
            train: build(train_raw),
            validation: build(val_raw),
        })
    }

    pub fn from_parts(
        window_len: usize,
        normalization: Normalization<T>,
        train: Vec<LabeledSample<T>>,
        validation: Vec<LabeledSample<T>>,
    ) -> Result<Self> {
        let expected = window_len * INPUT_CHANNELS;
        if let Some(bad) = train.iter().chain(&validation).find(|s| s.input.len() != expected) {
            return Err(Error::ModelContract(format!(
                "sample has {} inputs, windows of {window_len} need {expected}",
                bad.input.len()
            )));
        }
        if !normalization.is_valid() {
            return Err(Error::InvalidInput(
                "normalization scales must be finite and > 0".into(),
            ));
        }
        Ok(Self {
            window_len,
            normalization,
            train,
            validation,
        })
    }

    /// Re-expresses every input under different normalization statistics.
    pub fn renormalize(&mut self, target: Normalization<T>) {
        let src = self.normalization;
        for s in self.train.iter_mut().chain(self.validation.iter_mut()) {
            for (i, v) in s.input.iter_mut().enumerate() {
                let k = i % INPUT_CHANNELS;
                *v = (*v * src.scale[k] + src.mean[k] - target.mean[k]) / target.scale[k];
            }
        }
        self.normalization = target;
    }
}

/// Gradient of the mean batch loss, flat in parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub values: Vec<T>,
    pub loss: T,
}

fn batch_gradients<T: Real>(
    params: &ModelParams<T>,
    batch: &[&LabeledSample<T>],
    kappa: T,
    dropout: Option<(f64, u64)>,
    ws: &mut Workspace<T>,
) -> Result<Gradients<T>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    let mut values = vec![T::zero(); params.len()];
    let inv = T::one() / T::from_count(batch.len());
    let two = T::lit(2.0);
    let mut total = T::zero();
    for (i, sample) in batch.iter().enumerate() {
        let n = sample.input.len() / INPUT_CHANNELS;
        let masks = dropout
            .filter(|(rate, _)| *rate > 0.0)
            .map(|(rate, seed)| DropoutMasks::sample(n, params.hidden(), rate, mix_seed(seed, i as u64)));
        let out = ws.forward(params, &sample.input, masks);
        let [rl, rpsi] = residuals(out, &sample.label);
        total += raw_loss(out, &sample.label, kappa);
        ws.backward(
            params,
            &sample.input,
            [two * rl * inv, two * kappa * rpsi * inv],
            &mut values,
        );
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow {
            param: params.param_name(i),
        });
    }
    let loss = total * inv;
    if !loss.is_finite() {
        return Err(Error::NumericOverflow { param: "loss".into() });
    }
    Ok(Gradients { values, loss })
}

/// Exact gradient of the mean batch loss by backpropagation through time.
/// Dropout masks (if `dropout_rate > 0`) are drawn from `rng_seed`.
pub fn gradients<T: Real>(
    params: &ModelParams<T>,
    batch: &[LabeledSample<T>],
    config: &TrainingConfig,
) -> Result<Gradients<T>> {
    check_rate(config.dropout_rate)?;
    let refs: Vec<_> = batch.iter().collect();
    batch_gradients(
        params,
        &refs,
        T::lit(config.kappa),
        Some((config.dropout_rate, config.rng_seed)),
        &mut Workspace::new(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> AdamMoments<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }
}

/// Bias-corrected Adam step number `step` (1-based).
pub fn adam_update<T: Real>(
    params: &mut [T],
    grads: &[T],
    moments: &mut AdamMoments<T>,
    config: &TrainingConfig,
    step: u64,
) -> Result<()> {
    if step == 0 {
        return Err(Error::InvalidInput("Adam step count starts at 1".into()));
    }
    if grads.len() != params.len() || moments.m.len() != params.len() || moments.v.len() != params.len() {
        return Err(Error::ModelContract(
            "parameter, gradient and moment lengths differ".into(),
        ));
    }
    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let exponent = step.min(i32::MAX as u64) as i32;
    let c1 = T::one() - b1.powi(exponent);
    let c2 = T::one() - b2.powi(exponent);
    let lr = T::lit(config.learning_rate);
    let eps = T::lit(config.epsilon);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut moments.m).zip(&mut moments.v) {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome<T> {
    /// Parameters of the epoch with the lowest validation loss.
    pub model: OdometryModel<T>,
    pub best_epoch: usize,
    pub history: Vec<EpochLoss>,
}

fn mean_loss<T: Real>(params: &ModelParams<T>, samples: &[LabeledSample<T>], kappa: T, ws: &mut Workspace<T>) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let total: f64 = samples
        .iter()
        .map(|s| raw_loss(ws.forward(params, &s.input, None), &s.label, kappa).to_f64_lossless())
        .sum();
    total / samples.len() as f64
}

/// Trains a freshly initialized model; epoch 0 in the history is the initialization.
pub fn train<T: Real>(dataset: &LabeledDataset<T>, config: &TrainingConfig) -> Result<TrainingOutcome<T>> {
    config.validate()?;
    let params = ModelParams::init(config.hidden_size, mix_seed(config.rng_seed, INIT_STREAM));
    let model = OdometryModel::new(params, dataset.normalization, dataset.window_len);
    run(model, dataset, config)
}

/// Continues training `model` for `config.epochs` more epochs; epochs are
/// numbered after `model.epochs_trained`. Optimizer moments restart from zero.
pub fn resume_training<T: Real>(
    model: OdometryModel<T>,
    dataset: &LabeledDataset<T>,
    config: &TrainingConfig,
) -> Result<TrainingOutcome<T>> {
    config.validate()?;
    if model.window_len != dataset.window_len {
        return Err(Error::ModelContract(format!(
            "model window {} differs from dataset window {}",
            model.window_len, dataset.window_len
        )));
    }
    if dataset.normalization == model.normalization {
        run(model, dataset, config)
    } else {
        let mut data = dataset.clone();
        data.renormalize(model.normalization);
        run(model, &data, config)
    }
}

fn run<T: Real>(
    mut model: OdometryModel<T>,
    dataset: &LabeledDataset<T>,
    config: &TrainingConfig,
) -> Result<TrainingOutcome<T>> {
    if dataset.train.is_empty() {
        return Err(Error::EmptyInput("no training windows".into()));
    }
    let kappa = T::lit(config.kappa);
    let first = model.epochs_trained;
    let mut ws = Workspace::new();
    let mut shuffle_rng =
        ChaCha8Rng::seed_from_u64(mix_seed(config.rng_seed, SHUFFLE_STREAM.wrapping_add(first as u64)));
    let selection = |e: &EpochLoss| if e.val_loss.is_nan() { e.train_loss } else { e.val_loss };
    let diverged = |epoch: usize, reason: String| Error::TrainingDiverged { epoch, reason };

    let initial = EpochLoss {
        epoch: first,
        train_loss: mean_loss(&model.params, &dataset.train, kappa, &mut ws),
        val_loss: mean_loss(&model.params, &dataset.validation, kappa, &mut ws),
    };
    if !initial.train_loss.is_finite() {
        return Err(diverged(first, "non-finite initial loss".into()));
    }
    let mut history = vec![initial];
    let mut best = (selection(&initial), model.params.clone(), first);
    let mut moments = AdamMoments::zeros(model.params.len());
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();

    for epoch in first + 1..=first + config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let batch: Vec<_> = chunk.iter().map(|&i| &dataset.train[i]).collect();
            let seed = mix_seed(mix_seed(config.rng_seed, DROPOUT_STREAM), step);
            let g = batch_gradients(&model.params, &batch, kappa, Some((config.dropout_rate, seed)), &mut ws)
                .map_err(|e| diverged(epoch, e.to_string()))?;
            weighted += g.loss.to_f64_lossless() * chunk.len() as f64;
            adam_update(model.params.as_mut_slice(), &g.values, &mut moments, config, step)?;
        }
        let entry = EpochLoss {
            epoch,
            train_loss: weighted / dataset.train.len() as f64,
            val_loss: mean_loss(&model.params, &dataset.validation, kappa, &mut ws),
        };
        if !entry.train_loss.is_finite() || !model.params.is_finite() || entry.val_loss.is_infinite() {
            return Err(diverged(epoch, "loss or parameters became non-finite".into()));
        }
        if !dataset.validation.is_empty() && entry.val_loss.is_nan() {
            return Err(diverged(epoch, "validation loss is NaN".into()));
        }
        history.push(entry);
        if selection(&entry) < best.0 {
            best = (selection(&entry), model.params.clone(), epoch);
        }
    }
    model.params = best.1;
    model.epochs_trained = first + config.epochs;
    Ok(TrainingOutcome {
        model,
        best_epoch: best.2,
        history,
    })
}
