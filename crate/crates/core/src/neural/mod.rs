//! Learned polar-delta regressor: a two-layer bidirectional LSTM with a linear
//! head, mapping an `n x 6` IMU window to `(dl, dpsi)`.
//!
//! Everything here is implemented directly, including backpropagation through
//! time; [`gradients`] is checked against finite differences in the tests.

mod lstm;
mod params;
mod train;
mod weights;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{wrap_angle, Real};
use crate::strapdown::ImuSample;
use crate::window::{chain, chain_dense, segment, ChainMode, PolarDelta, Pose2D, TrackPoint, Window};

use lstm::{DropoutMasks, Workspace};

pub use params::{Direction, ModelParams, TensorSpec, DEFAULT_HIDDEN, GATE_ORDER, INPUT_CHANNELS, LAYERS, OUTPUT_SIZE};
pub use train::{
    adam_update, gradients, resume_training, train, AdamMoments, DatasetConfig, EpochLoss, Gradients, LabeledDataset,
    LabeledSample, TrainingConfig, TrainingOutcome,
};
pub use weights::{load_params, save_params, WEIGHTS_FORMAT, WEIGHTS_VERSION};

/// Per-channel affine input normalization, `(x - mean) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization<T> {
    pub mean: [T; INPUT_CHANNELS],
    pub scale: [T; INPUT_CHANNELS],
}

impl<T: Real> Normalization<T> {
    pub fn identity() -> Self {
        Self {
            mean: [T::zero(); INPUT_CHANNELS],
            scale: [T::one(); INPUT_CHANNELS],
        }
    }

    /// Mean and standard deviation over all samples; near-constant channels keep scale 1.
    pub fn fit<'a>(samples: impl Iterator<Item = &'a ImuSample<T>>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0f64; INPUT_CHANNELS];
        let mut sum_sq = [0.0f64; INPUT_CHANNELS];
        for s in samples {
            for (k, v) in s.channels().iter().enumerate() {
                let v = v.to_f64_lossless();
                sum[k] += v;
                sum_sq[k] += v * v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyInput("no samples to fit normalization".into()));
        }
        let n = count as f64;
        let mut out = Self::identity();
        for k in 0..INPUT_CHANNELS {
            let mean = sum[k] / n;
            let std = (sum_sq[k] / n - mean * mean).max(0.0).sqrt();
            out.mean[k] = T::lit(mean);
            out.scale[k] = T::lit(if std > 1e-9 { std } else { 1.0 });
        }
        Ok(out)
    }

    /// Time-major `n x 6` network input.
    pub fn apply(&self, samples: &[ImuSample<T>]) -> Vec<T> {
        let mut out = Vec::with_capacity(samples.len() * INPUT_CHANNELS);
        for s in samples {
            for (k, v) in s.channels().iter().enumerate() {
                out.push((*v - self.mean[k]) / self.scale[k]);
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.mean.iter().all(|m| m.is_finite()) && self.scale.iter().all(|s| s.is_finite() && *s > T::zero())
    }
}

/// Trained weights together with everything needed to apply them.
#[derive(Clone, Debug, PartialEq)]
pub struct OdometryModel<T> {
    pub params: ModelParams<T>,
    pub normalization: Normalization<T>,
    pub window_len: usize,
    pub epochs_trained: usize,
}

impl<T: Real> OdometryModel<T> {
    pub fn new(params: ModelParams<T>, normalization: Normalization<T>, window_len: usize) -> Self {
        Self {
            params,
            normalization,
            window_len,
            epochs_trained: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dropout {
    Off,
    On { rate: f64, seed: u64 },
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )))
    }
}

fn forward_window<T: Real>(
    model: &OdometryModel<T>,
    window: &Window<'_, T>,
    dropout: Dropout,
    ws: &mut Workspace<T>,
) -> Result<PolarDelta<T>> {
    if window.len() != model.window_len {
        return Err(Error::ModelContract(format!(
            "model expects windows of {} samples, got {}",
            model.window_len,
            window.len()
        )));
    }
    let masks = match dropout {
        Dropout::Off => None,
        Dropout::On { rate, seed } => {
            check_rate(rate)?;
            Some(DropoutMasks::sample(window.len(), model.params.hidden(), rate, seed))
        }
    };
    let input = model.normalization.apply(window.samples());
    let [dl, dpsi] = ws.forward(&model.params, &input, masks);
    if !(dl.is_finite() && dpsi.is_finite()) {
        return Err(Error::NumericOverflow {
            param: "model output".into(),
        });
    }
    Ok(PolarDelta::new(dl, dpsi))
}

/// Predicted polar delta for one window; `dl` is clamped at zero and `dpsi` wrapped.
pub fn model_forward<T: Real>(
    model: &OdometryModel<T>,
    window: &Window<'_, T>,
    dropout: Dropout,
) -> Result<PolarDelta<T>> {
    forward_window(model, window, dropout, &mut Workspace::new())
}

/// `(dl_hat - dl)^2 + kappa * wrap(dpsi_hat - dpsi)^2`.
pub fn loss<T: Real>(pred: &PolarDelta<T>, target: &PolarDelta<T>, kappa: T) -> T {
    raw_loss([pred.dl, pred.dpsi], target, kappa)
}

pub(crate) fn residuals<T: Real>(out: [T; 2], target: &PolarDelta<T>) -> [T; 2] {
    [out[0] - target.dl, wrap_angle(out[1] - target.dpsi)]
}

pub(crate) fn raw_loss<T: Real>(out: [T; 2], target: &PolarDelta<T>, kappa: T) -> T {
    let [rl, rpsi] = residuals(out, target);
    rl * rl + kappa * rpsi * rpsi
}

/// Runs the model over the stream and chains the deltas from `start`.
///
/// Window `k` starts at sample `s_k`; its pose is stamped `t[s_k] + stride * dt`,
/// which for non-overlapping windows is the end of the window.
pub fn predict_track<T: Real>(
    model: &OdometryModel<T>,
    stream: &[ImuSample<T>],
    start: Pose2D<T>,
    mode: ChainMode,
) -> Result<Vec<TrackPoint<T>>> {
    let n = model.window_len;
    let stride = match mode {
        ChainMode::NonOverlapping => n,
        ChainMode::Dense { stride } => stride,
    };
    let windows = segment(stream, n, stride)?;
    let mut ws = Workspace::new();
    let deltas = windows
        .iter()
        .map(|w| forward_window(model, w, Dropout::Off, &mut ws))
        .collect::<Result<Vec<_>>>()?;
    let poses = match mode {
        ChainMode::NonOverlapping => chain(start, &deltas),
        ChainMode::Dense { stride } => chain_dense(start, &deltas, stride, n),
    };
    let step = T::from_count(stride);
    Ok(windows
        .iter()
        .zip(poses)
        .map(|(w, pose)| TrackPoint {
            t: w.samples()[0].t + step * w.dt(),
            pose,
        })
        .collect())
}
