//! Step-based pedestrian dead reckoning: step detection on the smoothed
//! acceleration magnitude, Weinberg step length `K (peak - valley)^(1/4)`,
//! heading from gyro-integrated yaw.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{wrap_angle, Real};
use crate::so3::{exp_map, update_attitude, yaw_of, RotationMatrix};
use crate::strapdown::{uniform_dt, ImuSample};
use crate::window::{Pose2D, TrackPoint};

pub const MIN_PDR_RATE: f64 = 50.0;

/// Seconds of data averaged for the initial level attitude.
const LEVELING_SECONDS: f64 = 1.0;
/// Longest step period considered when searching the valley before the first step.
const MAX_STEP_PERIOD: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    /// Sample index of the peak.
    pub index: usize,
    pub t: f64,
    /// Smoothed acceleration magnitude at the peak and at the preceding valley, m/s^2.
    pub peak_accel: f64,
    pub valley_accel: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdrConfig {
    /// Width of the centered moving average, samples.
    pub smoothing_samples: usize,
    /// Minimum height of a peak above the stream mean, m/s^2.
    pub peak_threshold: f64,
    /// Seconds.
    pub min_step_interval: f64,
    /// Weinberg coefficient, m (m/s^2)^(-1/4).
    pub step_coefficient: f64,
}

impl Default for PdrConfig {
    fn default() -> Self {
        Self {
            smoothing_samples: 25,
            peak_threshold: 0.6,
            min_step_interval: 0.3,
            step_coefficient: 0.5,
        }
    }
}

impl PdrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smoothing_samples == 0 {
            return Err(Error::InvalidInput("smoothing_samples must be >= 1".into()));
        }
        if !(self.min_step_interval > 0.0) {
            return Err(Error::InvalidInput("min_step_interval must be > 0".into()));
        }
        if !(self.step_coefficient > 0.0) {
            return Err(Error::InvalidInput("step_coefficient must be > 0".into()));
        }
        if !self.peak_threshold.is_finite() {
            return Err(Error::InvalidInput("peak_threshold must be finite".into()));
        }
        Ok(())
    }
}

fn sample_period<T: Real>(stream: &[ImuSample<T>]) -> Result<f64> {
    if stream.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: stream.len(),
        });
    }
    let dt = uniform_dt(stream)?.to_f64_lossless();
    let rate = 1.0 / dt;
    if rate < MIN_PDR_RATE * (1.0 - 1e-9) {
        return Err(Error::UnsupportedRate {
            rate,
            minimum: MIN_PDR_RATE,
        });
    }
    Ok(dt)
}

/// Centered moving average, shrinking at the edges.
fn smooth(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..x.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

pub fn detect_steps<T: Real>(stream: &[ImuSample<T>], cfg: &PdrConfig) -> Result<Vec<StepEvent>> {
    cfg.validate()?;
    let dt = sample_period(stream)?;
    let magnitude: Vec<f64> = stream.iter().map(|s| s.accel.norm().to_f64_lossless()).collect();
    let f = smooth(&magnitude, cfg.smoothing_samples);
    let baseline = f.iter().sum::<f64>() / f.len() as f64;
    let min_gap = (cfg.min_step_interval / dt).round().max(1.0) as usize;

    let mut peaks: Vec<usize> = Vec::new();
    for k in 1..f.len().saturating_sub(1) {
        let is_peak = f[k] > f[k - 1] && f[k] >= f[k + 1] && f[k] - baseline > cfg.peak_threshold;
        if !is_peak {
            continue;
        }
        match peaks.last_mut() {
            Some(last) if k - *last < min_gap => {
                if f[k] > f[*last] {
                    *last = k;
                }
            }
            _ => peaks.push(k),
        }
    }

    let lookback = (MAX_STEP_PERIOD / dt).round() as usize;
    let mut prev: Option<usize> = None;
    Ok(peaks
        .into_iter()
        .map(|k| {
            let from = prev.map_or(k.saturating_sub(lookback), |p| p + 1);
            let valley = f[from..=k].iter().copied().fold(f64::INFINITY, f64::min);
            prev = Some(k);
            StepEvent {
                index: k,
                t: stream[k].t.to_f64_lossless(),
                peak_accel: f[k],
                valley_accel: valley,
            }
        })
        .collect())
}

/// `K (peak - valley)^(1/4)`, zero when the peak does not exceed the valley.
pub fn step_length(event: &StepEvent, cfg: &PdrConfig) -> f64 {
    let swing = event.peak_accel - event.valley_accel;
    if swing > 0.0 {
        cfg.step_coefficient * swing.powf(0.25)
    } else {
        0.0
    }
}

/// Weinberg coefficient that makes the detected steps add up to `distance`.
pub fn calibrate_step_coefficient(events: &[StepEvent], distance: f64) -> Result<f64> {
    let total: f64 = events
        .iter()
        .map(|e| (e.peak_accel - e.valley_accel).max(0.0).powf(0.25))
        .sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput("no usable steps to calibrate on".into()));
    }
    Ok(distance / total)
}

/// Level attitude from the mean specific force, with the given yaw.
fn coarse_level<T: Real>(stream: &[ImuSample<T>], dt: f64, yaw: T) -> RotationMatrix<T> {
    let count = ((LEVELING_SECONDS / dt).round() as usize).clamp(1, stream.len());
    let mean = stream[..count]
        .iter()
        .fold(crate::so3::Vec3::zeros(), |acc, s| acc + s.accel)
        / T::from_count(count);
    let roll = mean.y.atan2(mean.z);
    let pitch = (-mean.x).atan2((mean.y * mean.y + mean.z * mean.z).sqrt());
    RotationMatrix::from_euler(roll, pitch, yaw)
}

/// Start pose followed by one pose per detected step.
pub fn pdr_track<T: Real>(stream: &[ImuSample<T>], start: Pose2D<T>, cfg: &PdrConfig) -> Result<Vec<TrackPoint<T>>> {
    let steps = detect_steps(stream, cfg)?;
    let dt = sample_period(stream)?;
    let dt_t = T::lit(dt);

    let c0 = coarse_level(stream, dt, start.psi);
    let yaw0 = yaw_of(&c0)?;
    let mut yaw = Vec::with_capacity(stream.len());
    let mut c = c0;
    for s in stream {
        yaw.push(yaw_of(&c)?);
        c = update_attitude(&c, &exp_map(s.gyro * dt_t));
    }

    let mut pose = start;
    let mut out = Vec::with_capacity(steps.len() + 1);
    out.push(TrackPoint { t: stream[0].t, pose });
    for step in &steps {
        let psi = wrap_angle(start.psi + yaw[step.index] - yaw0);
        let len = T::lit(step_length(step, cfg));
        pose = Pose2D::new(pose.x + len * psi.cos(), pose.y + len * psi.sin(), psi);
        out.push(TrackPoint {
            t: stream[step.index].t,
            pose,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{inverse_imu, synth_trolley, synth_walk, MotionProfile, NoiseModel, TurnSchedule};
    use crate::so3::Vec3;
    use crate::strapdown::GravityVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn gait(freq: f64, amplitude: f64, seconds: f64) -> Vec<ImuSample<f64>> {
        (0..(seconds * 100.0) as usize)
            .map(|k| {
                let t = k as f64 * 0.01;
                let m = 9.80665 + amplitude * (2.0 * PI * freq * t).sin();
                ImuSample::new(t, Vec3::new(0.0, 0.0, m), Vec3::zeros())
            })
            .collect()
    }

    #[test]
    fn constant_magnitude_has_no_steps() {
        let s = gait(2.0, 0.0, 10.0);
        assert!(detect_steps(&s, &PdrConfig::default()).unwrap().is_empty());
        let track = pdr_track(&s, Pose2D::origin(), &PdrConfig::default()).unwrap();
        assert_eq!(track.len(), 1);
    }

    #[test]
    fn sinusoidal_gait_step_count() {
        let steps = detect_steps(&gait(2.0, 2.0, 60.0), &PdrConfig::default()).unwrap();
        assert!((steps.len() as i64 - 120).abs() <= 1, "{}", steps.len());
    }

    #[test]
    fn count_invariant_to_amplitude_scaling() {
        let cfg = PdrConfig::default();
        let a = detect_steps(&gait(1.8, 2.0, 30.0), &cfg).unwrap();
        let b = detect_steps(&gait(1.8, 5.0, 30.0), &cfg).unwrap();
        assert_eq!(
            a.iter().map(|e| e.index).collect::<Vec<_>>(),
            b.iter().map(|e| e.index).collect::<Vec<_>>()
        );
    }

    #[test]
    fn white_noise_below_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let s: Vec<_> = (0..6000)
            .map(|k| {
                let a = Vec3::new(
                    noise.sample(&mut rng),
                    noise.sample(&mut rng),
                    9.80665 + noise.sample(&mut rng),
                );
                ImuSample::new(k as f64 * 0.01, a, Vec3::zeros())
            })
            .collect();
        assert!(detect_steps(&s, &PdrConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn step_length_formula() {
        let cfg = PdrConfig {
            step_coefficient: 0.5,
            ..PdrConfig::default()
        };
        let e = |p, v| StepEvent {
            index: 0,
            t: 0.0,
            peak_accel: p,
            valley_accel: v,
        };
        assert_eq!(step_length(&e(11.0, 11.0), &cfg), 0.0);
        assert!((step_length(&e(26.0, 10.0), &cfg) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn low_rate_is_rejected() {
        let s: Vec<_> = (0..100)
            .map(|k| ImuSample::new(k as f64 * 0.05, Vec3::new(0.0, 0.0, 9.8), Vec3::zeros()))
            .collect();
        assert!(matches!(
            detect_steps(&s, &PdrConfig::default()),
            Err(Error::UnsupportedRate { .. })
        ));
    }

    fn walk_stream(seed: u64, turns: TurnSchedule) -> (Vec<ImuSample<f64>>, f64) {
        let profile = MotionProfile {
            step_frequency: Some(2.0),
            ..MotionProfile::walk(1.4, 60.0)
        }
        .with_turns(turns);
        let truth = synth_walk::<f64>(&profile, seed).unwrap();
        let imu = inverse_imu(&truth, &GravityVector::standard()).unwrap();
        let noisy = crate::sim::corrupt(&imu, &NoiseModel::consumer_mems(seed)).unwrap();
        let distance = truth
            .windows(2)
            .map(|p| (p[1].position - p[0].position).horizontal_norm())
            .sum();
        (noisy, distance)
    }

    #[test]
    fn calibrated_stride_transfers_to_held_out_track() {
        let cfg = PdrConfig::default();
        let (cal, dist) = walk_stream(1, TurnSchedule::Straight);
        let k = calibrate_step_coefficient(&detect_steps(&cal, &cfg).unwrap(), dist).unwrap();
        let cfg = PdrConfig {
            step_coefficient: k,
            ..cfg
        };
        let (held, _) = walk_stream(
            2,
            TurnSchedule::Random {
                mean_interval: 10.0,
                max_angle: 1.5,
                turn_duration: 2.0,
            },
        );
        let steps = detect_steps(&held, &cfg).unwrap();
        let mean = steps.iter().map(|e| step_length(e, &cfg)).sum::<f64>() / steps.len() as f64;
        assert!((mean - 0.7).abs() <= 0.07, "{mean}");
        assert!((steps.len() as f64 / 120.0 - 1.0).abs() <= 0.02, "{}", steps.len());
    }

    #[test]
    fn trolley_has_no_steps() {
        let truth = synth_trolley::<f64>(&MotionProfile::trolley(1.0, 30.0).with_speed_range(0.5, 1.5), 3).unwrap();
        let imu = inverse_imu(&truth, &GravityVector::standard()).unwrap();
        let noisy = crate::sim::corrupt(&imu, &NoiseModel::consumer_mems(3)).unwrap();
        let track = pdr_track(&noisy, Pose2D::origin(), &PdrConfig::default()).unwrap();
        let last = track.last().unwrap().pose;
        assert!(last.x.hypot(last.y) < 1.0);
    }

    #[test]
    fn straight_walk_heading() {
        let (s, dist) = walk_stream(4, TurnSchedule::Straight);
        let cfg = PdrConfig::default();
        let k = calibrate_step_coefficient(&detect_steps(&s, &cfg).unwrap(), dist).unwrap();
        let track = pdr_track(
            &s,
            Pose2D::origin(),
            &PdrConfig {
                step_coefficient: k,
                ..cfg
            },
        )
        .unwrap();
        let end = track.last().unwrap().pose;
        assert!((end.x - dist).abs() < 1.0 && end.y.abs() < 0.05 * dist, "{end:?}");
    }
}
