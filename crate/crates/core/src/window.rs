//! Window-level reformulation of strapdown integration.
//!
//! A window of `n` samples starting from `(C0, v0)` moves the position by
//!
//! ```text
//! dL = n v0 dt + C0 T dt^2 + n(n-1)/2 g dt^2
//! T  = sum_{k=1}^{n-1} (n-k) [prod_{i<k} Omega(i)] a_k
//! ```
//!
//! with `g` the gravitational acceleration. Because `C0` is orthogonal, the
//! norm of `dL` can be evaluated entirely in the body frame, which removes the
//! unknown initial attitude. The learned model predicts that distance together
//! with a heading change; [`chain`] turns those polar deltas back into poses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{wrap_angle, Real};
use crate::sim::TruthPose;
use crate::so3::{exp_map, update_attitude, yaw_of, RotationMatrix, Vec3};
use crate::strapdown::{uniform_dt, GravityVector, ImuSample};

pub const DEFAULT_WINDOW_LEN: usize = 200;
pub const DEFAULT_STRIDE: usize = 10;

/// A borrowed block of consecutive, uniformly spaced samples.
#[derive(Clone, Copy, Debug)]
pub struct Window<'a, T> {
    samples: &'a [ImuSample<T>],
    dt: T,
    start_index: usize,
}

impl<'a, T: Real> Window<'a, T> {
    /// Validates length (`n >= 2`) and uniform spacing within 1e-9 s.
    pub fn new(samples: &'a [ImuSample<T>], start_index: usize) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: samples.len(),
            });
        }
        let dt = uniform_dt(samples)?;
        let tol = T::lit(1e-9);
        if samples.windows(2).any(|p| ((p[1].t - p[0].t) - dt).abs() > tol) {
            return Err(Error::InvalidInput("window spacing not uniform within 1e-9 s".into()));
        }
        Ok(Self {
            samples,
            dt,
            start_index,
        })
    }

    pub fn samples(&self) -> &'a [ImuSample<T>] {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Index of the first sample in the source stream.
    pub fn start_index(&self) -> usize {
        self.start_index
    }

    /// Wall time covered by the window (`n dt`).
    pub fn duration(&self) -> T {
        self.dt * T::from_count(self.len())
    }
}

/// Horizontal distance and heading change over one window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolarDelta<T> {
    pub dl: T,
    pub dpsi: T,
}

impl<T: Real> PolarDelta<T> {
    /// Clamps `dl` at zero and wraps `dpsi` into `(-pi, pi]`.
    pub fn new(dl: T, dpsi: T) -> Self {
        Self {
            dl: dl.max(T::zero()),
            dpsi: wrap_angle(dpsi),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dl.is_finite() && self.dpsi.is_finite()
    }
}

/// Initial velocity and gravity expressed in the body frame at window start.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyInitState<T> {
    pub v0_body: Vec3<T>,
    /// Gravitational acceleration (pointing down in the navigation frame) seen from the body.
    pub g0_body: Vec3<T>,
}

impl<T: Real> BodyInitState<T> {
    pub fn from_navigation(v0: Vec3<T>, c0: &RotationMatrix<T>, g: &GravityVector<T>) -> Self {
        Self {
            v0_body: c0.inverse_rotate(v0),
            g0_body: c0.inverse_rotate(g.vector()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2D<T> {
    pub x: T,
    pub y: T,
    pub psi: T,
}

impl<T: Real> Pose2D<T> {
    pub fn new(x: T, y: T, psi: T) -> Self {
        Self {
            x,
            y,
            psi: wrap_angle(psi),
        }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }
}

/// A pose with its timestamp, one row of a trajectory file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint<T> {
    pub t: T,
    pub pose: Pose2D<T>,
}

/// How window deltas are turned into a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainMode {
    /// Windows with stride `n`, one pose per window.
    NonOverlapping,
    /// Windows with the given stride; each delta is scaled by `stride / n`.
    Dense { stride: usize },
}

/// Cuts a stream into windows of `n` samples every `stride` samples; the short tail is dropped.
pub fn segment<T: Real>(stream: &[ImuSample<T>], n: usize, stride: usize) -> Result<Vec<Window<'_, T>>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("window length must be >= 2, got {n}")));
    }
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be >= 1".into()));
    }
    if stream.len() < n {
        return Err(Error::InsufficientData {
            needed: n,
            got: stream.len(),
        });
    }
    let dt = uniform_dt(stream)?;
    let tol = T::lit(1e-9);
    if stream.windows(2).any(|p| ((p[1].t - p[0].t) - dt).abs() > tol) {
        return Err(Error::InvalidInput("stream spacing not uniform within 1e-9 s".into()));
    }
    let count = (stream.len() - n) / stride + 1;
    Ok((0..count)
        .map(|j| {
            let start = j * stride;
            Window {
                samples: &stream[start..start + n],
                dt,
                start_index: start,
            }
        })
        .collect())
}

/// `T = sum_{k=1}^{n-1} (n-k) [prod_{i=1}^{k-1} Omega(i)] a_k` (empty product is the identity).
pub fn compute_t<T: Real>(window: &Window<'_, T>) -> Vec3<T> {
    let n = window.len();
    let dt = window.dt;
    let mut rotation = RotationMatrix::identity();
    let mut acc = Vec3::zeros();
    for (k, sample) in window.samples[..n - 1].iter().enumerate() {
        acc += rotation.rotate(sample.accel) * T::from_count(n - 1 - k);
        rotation = update_attitude(&rotation, &exp_map(sample.gyro * dt));
    }
    acc
}

/// Navigation-frame displacement over the window, `n v0 dt + C0 T dt^2 + n(n-1)/2 g dt^2`.
pub fn window_displacement<T: Real>(
    window: &Window<'_, T>,
    v0: Vec3<T>,
    c0: &RotationMatrix<T>,
    g: &GravityVector<T>,
) -> Vec3<T> {
    let n = T::from_count(window.len());
    let dt = window.dt;
    let gravity_steps = n * (n - T::one()) * T::lit(0.5);
    v0 * (n * dt) + c0.rotate(compute_t(window)) * (dt * dt) + g.vector() * (gravity_steps * dt * dt)
}

/// Distance travelled over the window, evaluated in the body frame (no `C0` needed).
pub fn horizontal_distance<T: Real>(window: &Window<'_, T>, init: &BodyInitState<T>) -> T {
    let n = T::from_count(window.len());
    let dt = window.dt;
    let gravity_steps = n * (n - T::one()) * T::lit(0.5);
    (init.v0_body * (n * dt) + compute_t(window) * (dt * dt) + init.g0_body * (gravity_steps * dt * dt)).norm()
}

/// Heading change from the first to the last sample: `n - 1` gyro increments applied to `c_ref`.
pub fn heading_change<T: Real>(window: &Window<'_, T>, c_ref: &RotationMatrix<T>) -> Result<T> {
    let start = yaw_of(c_ref)?;
    let dt = window.dt;
    let end = window.samples[..window.len() - 1]
        .iter()
        .fold(*c_ref, |c, s| update_attitude(&c, &exp_map(s.gyro * dt)));
    Ok(wrap_angle(yaw_of(&end)? - start))
}

/// Accumulates the heading, then projects the distance: one pose per delta.
pub fn chain<T: Real>(start: Pose2D<T>, deltas: &[PolarDelta<T>]) -> Vec<Pose2D<T>> {
    let mut pose = start;
    deltas
        .iter()
        .map(|d| {
            pose.psi = wrap_angle(pose.psi + d.dpsi);
            let (s, c) = pose.psi.sin_cos();
            pose.x += d.dl * c;
            pose.y += d.dl * s;
            pose
        })
        .collect()
}

/// Chains overlapping window deltas, each scaled to one stride step.
pub fn chain_dense<T: Real>(start: Pose2D<T>, deltas: &[PolarDelta<T>], stride: usize, n: usize) -> Vec<Pose2D<T>> {
    let scale = T::from_count(stride) / T::from_count(n);
    let scaled: Vec<_> = deltas
        .iter()
        .map(|d| PolarDelta {
            dl: d.dl * scale,
            dpsi: d.dpsi * scale,
        })
        .collect();
    chain(start, &scaled)
}

/// Training labels from ground truth.
///
/// `truth[k]` is the state at the timestamp of sample `k`; a window starting
/// at `s` therefore spans `truth[s]..=truth[s + n]`, and the truth stream needs
/// one pose past the last sample. `dl` is the horizontal chord length and
/// `dpsi` the change of attitude yaw between the two boundary poses.
pub fn label_windows<T: Real>(truth: &[TruthPose<T>], windows: &[Window<'_, T>]) -> Result<Vec<PolarDelta<T>>> {
    windows
        .iter()
        .map(|w| {
            let (s, n) = (w.start_index, w.len());
            if s + n >= truth.len() {
                return Err(Error::Alignment(format!(
                    "window [{s}, {}) needs truth pose {} but truth has {} poses",
                    s + n,
                    s + n,
                    truth.len()
                )));
            }
            let half_dt = w.dt * T::lit(0.5);
            if (truth[s].t - w.samples[0].t).abs() > half_dt {
                return Err(Error::Alignment(format!(
                    "truth time {} does not match sample time {} at index {s}",
                    truth[s].t, w.samples[0].t
                )));
            }
            let (a, b) = (&truth[s], &truth[s + n]);
            let dl = (b.position - a.position).horizontal_norm();
            Ok(PolarDelta::new(dl, yaw_of(&b.attitude)? - yaw_of(&a.attitude)?))
        })
        .collect()
}
