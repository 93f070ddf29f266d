//! Ground-truth motion synthesis and its exact inversion into IMU streams.
//!
//! Every generator produces `N + 1` truth poses for `N = duration * rate`
//! intervals. Velocities are evaluated from the motion model and positions are
//! Euler sums of those velocities (`L[k+1] = L[k] + v[k] dt`), so
//! [`inverse_imu`] followed by strapdown integration reproduces the truth to
//! rounding error instead of O(dt).

mod noise;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::so3::{log_map, RotationMatrix, Vec3};
use crate::strapdown::{GravityVector, ImuSample, NavState};

pub use noise::{corrupt, NoiseModel, SensorErrors};

pub const DEFAULT_RATE: f64 = 100.0;
pub const MIN_RATE: f64 = 50.0;

/// One ground-truth state; `attitude` maps body to navigation frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthPose<T> {
    pub t: T,
    pub position: Vec3<T>,
    pub attitude: RotationMatrix<T>,
    pub velocity: Vec3<T>,
}

impl<T: Real> TruthPose<T> {
    pub fn nav_state(&self) -> NavState<T> {
        NavState::new(self.attitude, self.velocity, self.position)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    Walk,
    Trolley,
    Scripted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TurnShape {
    /// Constant yaw rate over the segment.
    Constant,
    /// Yaw rate `angle/D * (1 - cos(2 pi tau / D))`, zero at both ends.
    #[default]
    RaisedCosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnSegment {
    /// Seconds from track start.
    pub start: f64,
    pub duration: f64,
    /// Total heading change, rad (positive counter-clockwise).
    pub angle: f64,
    #[serde(default)]
    pub shape: TurnShape,
}

impl TurnSegment {
    fn heading_at(&self, t: f64) -> f64 {
        let tau = (t - self.start).clamp(0.0, self.duration);
        let u = tau / self.duration;
        match self.shape {
            TurnShape::Constant => self.angle * u,
            TurnShape::RaisedCosine => self.angle * (u - (2.0 * PI * u).sin() / (2.0 * PI)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TurnSchedule {
    #[default]
    Straight,
    Segments {
        segments: Vec<TurnSegment>,
    },
    /// Seeded turns at exponentially distributed gaps.
    Random {
        mean_interval: f64,
        max_angle: f64,
        turn_duration: f64,
    },
}

fn default_rate() -> f64 {
    DEFAULT_RATE
}

fn default_speed_interval() -> f64 {
    8.0
}

fn default_vibration() -> f64 {
    DEFAULT_VIBRATION
}

/// RMS vertical rolling vibration of a trolley, m/s^2 per m/s of speed.
pub const DEFAULT_VIBRATION: f64 = 0.3;
const VIBRATION_BAND: (f64, f64) = (6.0, 20.0);
const VIBRATION_TONES: usize = 12;

/// Description of a synthetic track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionProfile {
    pub kind: MotionKind,
    /// Seconds.
    pub duration: f64,
    /// Hz.
    #[serde(default = "default_rate")]
    pub rate: f64,
    /// m/s; the commanded speed wanders between these bounds.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Hz, walk only; derived from speed when absent.
    #[serde(default)]
    pub step_frequency: Option<f64>,
    #[serde(default)]
    pub initial_heading: f64,
    #[serde(default)]
    pub turns: TurnSchedule,
    /// Seconds between commanded speed changes.
    #[serde(default = "default_speed_interval")]
    pub speed_change_interval: f64,
    /// Trolley only: RMS vertical vibration per unit speed, m/s^2 per m/s, spread over 6-20 Hz.
    #[serde(default = "default_vibration")]
    pub vibration: f64,
}

impl MotionProfile {
    pub fn walk(speed: f64, duration: f64) -> Self {
        Self {
            kind: MotionKind::Walk,
            duration,
            rate: DEFAULT_RATE,
            speed_min: speed,
            speed_max: speed,
            step_frequency: None,
            initial_heading: 0.0,
            turns: TurnSchedule::Straight,
            speed_change_interval: default_speed_interval(),
            vibration: DEFAULT_VIBRATION,
        }
    }

    pub fn trolley(speed: f64, duration: f64) -> Self {
        Self {
            kind: MotionKind::Trolley,
            ..Self::walk(speed, duration)
        }
    }

    pub fn scripted(speed: f64, duration: f64, turns: Vec<TurnSegment>) -> Self {
        Self {
            kind: MotionKind::Scripted,
            turns: TurnSchedule::Segments { segments: turns },
            ..Self::walk(speed, duration)
        }
    }

    pub fn with_turns(mut self, turns: TurnSchedule) -> Self {
        self.turns = turns;
        self
    }

    pub fn with_speed_range(mut self, min: f64, max: f64) -> Self {
        self.speed_min = min;
        self.speed_max = max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.duration > 0.0) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.rate >= MIN_RATE) {
            return bad(format!("rate must be >= {MIN_RATE} Hz, got {}", self.rate));
        }
        if !(self.speed_min >= 0.0 && self.speed_max >= self.speed_min) {
            return bad(format!("invalid speed range [{}, {}]", self.speed_min, self.speed_max));
        }
        if let Some(f) = self.step_frequency {
            if !(f > 0.0) {
                return bad(format!("step frequency must be > 0, got {f}"));
            }
        }
        if !(self.vibration >= 0.0) {
            return bad(format!("vibration must be >= 0, got {}", self.vibration));
        }
        if !(self.speed_change_interval > 0.0) {
            return bad("speed_change_interval must be > 0".into());
        }
        match &self.turns {
            TurnSchedule::Segments { segments } if segments.iter().any(|s| !(s.duration > 0.0)) => {
                bad("turn segments need a positive duration".into())
            }
            TurnSchedule::Random {
                mean_interval,
                turn_duration,
                ..
            } if !(*mean_interval > 0.0 && *turn_duration > 0.0) => {
                bad("random turns need positive mean_interval and turn_duration".into())
            }
            _ => Ok(()),
        }
    }

    pub fn sample_count(&self) -> usize {
        (self.duration * self.rate).round() as usize
    }
}

/// Steps per second as a function of walking speed; stride `v / f` grows with `v`.
pub fn cadence(speed: f64) -> f64 {
    1.4 + 0.4 * speed
}

/// Heading and commanded speed as functions of time, fixed by the seed.
struct Schedule {
    initial_heading: f64,
    turns: Vec<TurnSegment>,
    knot_interval: f64,
    knots: Vec<f64>,
}

impl Schedule {
    fn new(profile: &MotionProfile, rng: &mut ChaCha8Rng) -> Self {
        let turns = match &profile.turns {
            TurnSchedule::Straight => Vec::new(),
            TurnSchedule::Segments { segments } => segments.clone(),
            TurnSchedule::Random {
                mean_interval,
                max_angle,
                turn_duration,
            } => {
                let mut out = Vec::new();
                let mut t = 0.0;
                loop {
                    let gap = -mean_interval * (1.0 - rng.random::<f64>()).ln();
                    t += gap;
                    if t >= profile.duration {
                        break;
                    }
                    let magnitude = max_angle * (0.2 + 0.8 * rng.random::<f64>());
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    out.push(TurnSegment {
                        start: t,
                        duration: *turn_duration,
                        angle: sign * magnitude,
                        shape: TurnShape::RaisedCosine,
                    });
                    t += turn_duration;
                }
                out
            }
        };
        let knot_count = (profile.duration / profile.speed_change_interval).ceil() as usize + 2;
        let span = profile.speed_max - profile.speed_min;
        let knots = (0..knot_count)
            .map(|_| {
                if span > 0.0 {
                    profile.speed_min + span * rng.random::<f64>()
                } else {
                    profile.speed_min
                }
            })
            .collect();
        Self {
            initial_heading: profile.initial_heading,
            turns,
            knot_interval: profile.speed_change_interval,
            knots,
        }
    }

    fn heading(&self, t: f64) -> f64 {
        self.initial_heading + self.turns.iter().map(|s| s.heading_at(t)).sum::<f64>()
    }

    fn speed(&self, t: f64) -> f64 {
        let u = t / self.knot_interval;
        let i = (u.floor() as usize).min(self.knots.len() - 2);
        let s = (u - i as f64).clamp(0.0, 1.0);
        let smooth = s * s * (3.0 - 2.0 * s);
        self.knots[i] + (self.knots[i + 1] - self.knots[i]) * smooth
    }
}

fn euler_positions<T: Real>(
    times: &[f64],
    velocities: &[Vec3<f64>],
    attitudes: &[RotationMatrix<f64>],
    dt: f64,
) -> Vec<TruthPose<T>> {
    let dt_t = T::lit(dt);
    let mut position = Vec3::<T>::zeros();
    times
        .iter()
        .zip(velocities)
        .zip(attitudes)
        .map(|((&t, v), c)| {
            let velocity = v.cast::<T>();
            let pose = TruthPose {
                t: T::lit(t),
                position,
                attitude: c.cast(),
                velocity,
            };
            position += velocity * dt_t;
            pose
        })
        .collect()
}

fn require_kind(profile: &MotionProfile, kinds: &[MotionKind]) -> Result<()> {
    profile.validate()?;
    if !kinds.contains(&profile.kind) {
        return Err(Error::InvalidInput(format!(
            "profile kind {:?} cannot be synthesized by this generator",
            profile.kind
        )));
    }
    Ok(())
}

/// Walking gait: vertical bob, forward surge and lateral sway at the step
/// frequency, with small pitch/roll oscillations; all scale to zero with speed.
pub fn synth_walk<T: Real>(profile: &MotionProfile, seed: u64) -> Result<Vec<TruthPose<T>>> {
    require_kind(profile, &[MotionKind::Walk])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = Schedule::new(profile, &mut rng);
    let n = profile.sample_count();
    let dt = 1.0 / profile.rate;

    let mut times = Vec::with_capacity(n + 1);
    let mut velocities = Vec::with_capacity(n + 1);
    let mut attitudes = Vec::with_capacity(n + 1);
    let mut phase = 0.0f64;
    for k in 0..=n {
        let t = k as f64 * dt;
        let speed = schedule.speed(t);
        let freq = profile.step_frequency.unwrap_or_else(|| cadence(speed));
        let heading = schedule.heading(t);
        let gain = speed / (0.5 + speed);
        let omega = 2.0 * PI * freq;

        let surge = speed * (1.0 + 0.12 * phase.sin());
        let lateral = 0.02 * gain * 0.5 * omega * (0.5 * phase).cos();
        let vertical = 0.03 * gain * omega * phase.cos();
        let (s, c) = heading.sin_cos();
        velocities.push(Vec3::new(surge * c - lateral * s, surge * s + lateral * c, vertical));

        let pitch = 0.05 * gain * (phase + 0.6).sin();
        let roll = 0.04 * gain * (0.5 * phase).sin();
        attitudes.push(RotationMatrix::from_euler(roll, pitch, heading));
        times.push(t);
        phase += omega * dt;
    }
    Ok(euler_positions(&times, &velocities, &attitudes, dt))
}

/// Sum of tones with random frequencies in the vibration band; unit RMS acceleration
/// when the returned velocity is scaled by 1.
struct Vibration {
    tones: Vec<(f64, f64, f64)>,
}

impl Vibration {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let accel_amplitude = (2.0 / VIBRATION_TONES as f64).sqrt();
        let tones = (0..VIBRATION_TONES)
            .map(|_| {
                let f = VIBRATION_BAND.0 + (VIBRATION_BAND.1 - VIBRATION_BAND.0) * rng.random::<f64>();
                let phase = 2.0 * PI * rng.random::<f64>();
                (2.0 * PI * f, phase, accel_amplitude / (2.0 * PI * f))
            })
            .collect();
        Self { tones }
    }

    fn velocity(&self, t: f64) -> f64 {
        self.tones.iter().map(|(w, phase, c)| c * (w * t + phase).cos()).sum()
    }
}

fn synth_level<T: Real>(profile: &MotionProfile, seed: u64) -> Vec<TruthPose<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = Schedule::new(profile, &mut rng);
    let vibration = Vibration::new(&mut rng);
    let n = profile.sample_count();
    let dt = 1.0 / profile.rate;
    let scripted = profile.kind == MotionKind::Scripted;
    let (mut times, mut velocities, mut attitudes) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..=n {
        let t = k as f64 * dt;
        let speed = if scripted { profile.speed_min } else { schedule.speed(t) };
        let heading = schedule.heading(t);
        let (s, c) = heading.sin_cos();
        let vertical = if scripted {
            0.0
        } else {
            profile.vibration * speed * vibration.velocity(t)
        };
        velocities.push(Vec3::new(speed * c, speed * s, vertical));
        attitudes.push(RotationMatrix::rot_z(heading));
        times.push(t);
    }
    euler_positions(&times, &velocities, &attitudes, dt)
}

/// Wheeled motion: smooth speed changes and turns, level device, broadband
/// rolling vibration above 6 Hz, no periodic component in the gait band.
pub fn synth_trolley<T: Real>(profile: &MotionProfile, seed: u64) -> Result<Vec<TruthPose<T>>> {
    require_kind(profile, &[MotionKind::Trolley])?;
    Ok(synth_level(profile, seed))
}

/// Constant speed (`speed_min`) along the turn schedule, level device.
pub fn synth_scripted<T: Real>(profile: &MotionProfile, seed: u64) -> Result<Vec<TruthPose<T>>> {
    require_kind(profile, &[MotionKind::Scripted])?;
    Ok(synth_level(profile, seed))
}

/// Dispatches on the profile kind.
pub fn simulate<T: Real>(profile: &MotionProfile, seed: u64) -> Result<Vec<TruthPose<T>>> {
    match profile.kind {
        MotionKind::Walk => synth_walk(profile, seed),
        MotionKind::Trolley => synth_trolley(profile, seed),
        MotionKind::Scripted => synth_scripted(profile, seed),
    }
}

/// Ideal IMU readings that drive `truth[k]` to `truth[k + 1]` under the strapdown update.
///
/// `w_k = log(C_k^T C_{k+1}) / dt` and `a_k = C_k^T ((v_{k+1} - v_k)/dt - g)`;
/// sample `k` carries the timestamp of `truth[k]`, so `N + 1` poses give `N` samples.
pub fn inverse_imu<T: Real>(truth: &[TruthPose<T>], g: &GravityVector<T>) -> Result<Vec<ImuSample<T>>> {
    if truth.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: truth.len(),
        });
    }
    let m = truth.len();
    let dt = (truth[m - 1].t - truth[0].t) / T::from_count(m - 1);
    let tol = dt * T::lit(1e-6);
    truth
        .windows(2)
        .map(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            if ((b.t - a.t) - dt).abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "truth not uniformly sampled near t={}",
                    a.t
                )));
            }
            let increment = a.attitude.transpose() * b.attitude;
            let phi = log_map(&increment);
            let angle = phi.norm();
            if angle > T::PI() - T::lit(1e-6) {
                return Err(Error::Aliasing {
                    angle: angle.to_f64_lossless(),
                });
            }
            let accel = a.attitude.inverse_rotate((b.velocity - a.velocity) / dt - g.vector());
            Ok(ImuSample::new(a.t, accel, phi / dt))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strapdown::{integrate_track, STANDARD_GRAVITY};

    fn round_trip_error(truth: &[TruthPose<f64>]) -> (f64, f64) {
        let g = GravityVector::standard();
        let imu = inverse_imu(truth, &g).unwrap();
        assert_eq!(imu.len(), truth.len() - 1);
        let track = integrate_track(&imu, &truth[0].nav_state(), &g).unwrap();
        track.iter().zip(&truth[1..]).fold((0.0, 0.0), |(p, a), (s, t)| {
            (
                p.max((s.position - t.position).norm()),
                a.max((*s.attitude.matrix() - *t.attitude.matrix()).max_abs()),
            )
        })
    }

    #[test]
    fn stationary_walk() {
        let truth: Vec<TruthPose<f64>> = synth_walk(&MotionProfile::walk(0.0, 5.0), 1).unwrap();
        assert_eq!(truth.len(), 501);
        assert!(truth
            .iter()
            .all(|p| p.position == Vec3::zeros() && p.velocity == Vec3::zeros()));
        let imu = inverse_imu(&truth, &GravityVector::standard()).unwrap();
        for s in &imu {
            assert!((s.accel - Vec3::new(0.0, 0.0, STANDARD_GRAVITY)).max_abs() < 1e-12);
            assert_eq!(s.gyro, Vec3::zeros());
        }
    }

    #[test]
    fn straight_walk_endpoint() {
        let truth: Vec<TruthPose<f64>> = synth_walk(&MotionProfile::walk(1.0, 60.0), 2).unwrap();
        let end = truth.last().unwrap().position;
        assert!((end.x - 60.0).abs() <= 0.05 && end.y.abs() <= 0.05, "{end:?}");
    }

    #[test]
    fn stride_grows_with_speed() {
        assert!(1.6 / cadence(1.6) > 0.8 / cadence(0.8));
        let fixed = MotionProfile {
            step_frequency: Some(2.0),
            ..MotionProfile::walk(0.8, 10.0)
        };
        let fast = MotionProfile {
            speed_min: 1.6,
            speed_max: 1.6,
            ..fixed.clone()
        };
        let f = |p: &MotionProfile| p.speed_min / p.step_frequency.unwrap();
        assert!(f(&fast) > f(&fixed));
    }

    #[test]
    fn trolley_constant_straight() {
        let truth: Vec<TruthPose<f64>> = synth_trolley(&MotionProfile::trolley(1.0, 30.0), 3).unwrap();
        let end = truth.last().unwrap().position;
        assert!((end.x - 30.0).abs() < 1e-9 && end.y == 0.0);
    }

    #[test]
    fn closed_square_returns_to_start() {
        let turns = (0..4)
            .map(|q| TurnSegment {
                start: 12.0 * q as f64 + 10.0,
                duration: 2.0,
                angle: PI / 2.0,
                shape: TurnShape::RaisedCosine,
            })
            .collect();
        let truth: Vec<TruthPose<f64>> = synth_scripted(&MotionProfile::scripted(1.0, 48.0, turns), 0).unwrap();
        assert!(truth.last().unwrap().position.norm() <= 0.01);
    }

    #[test]
    fn exact_inverse_for_all_kinds() {
        let walk = MotionProfile::walk(1.2, 10.0).with_turns(TurnSchedule::Random {
            mean_interval: 3.0,
            max_angle: 1.5,
            turn_duration: 1.5,
        });
        let trolley = MotionProfile::trolley(1.0, 10.0)
            .with_speed_range(0.5, 1.5)
            .with_turns(TurnSchedule::Random {
                mean_interval: 2.0,
                max_angle: 1.0,
                turn_duration: 2.0,
            });
        for (profile, seed) in [(walk, 5), (trolley, 6)] {
            let truth = simulate::<f64>(&profile, seed).unwrap();
            let (p, a) = round_trip_error(&truth);
            assert!(p <= 1e-6 && a <= 1e-8, "{:?}: {p} {a}", profile.kind);
        }
    }

    #[test]
    fn pure_spin_gives_constant_rate() {
        let spin = MotionProfile::scripted(
            0.0,
            10.0,
            vec![TurnSegment {
                start: 0.0,
                duration: 10.0,
                angle: 10.0,
                shape: TurnShape::Constant,
            }],
        );
        let truth = synth_scripted::<f64>(&spin, 0).unwrap();
        let imu = inverse_imu(&truth, &GravityVector::standard()).unwrap();
        for s in &imu {
            assert!((s.gyro - Vec3::new(0.0, 0.0, 1.0)).max_abs() <= 1e-12);
        }
        let (p, a) = round_trip_error(&truth);
        assert!(p <= 1e-6 && a <= 1e-8);
    }

    #[test]
    fn aliasing_is_detected() {
        let mut truth = synth_trolley::<f64>(&MotionProfile::trolley(1.0, 1.0), 0).unwrap();
        truth[10].attitude = RotationMatrix::rot_z(PI);
        assert!(matches!(
            inverse_imu(&truth, &GravityVector::standard()),
            Err(Error::Aliasing { .. })
        ));
    }

    #[test]
    fn profile_validation() {
        let mut p = MotionProfile::walk(1.0, 10.0);
        p.rate = 20.0;
        assert!(synth_walk::<f64>(&p, 0).is_err());
        assert!(synth_trolley::<f64>(&MotionProfile::walk(1.0, 10.0), 0).is_err());
        assert!(synth_walk::<f64>(&MotionProfile::walk(1.0, 0.0), 0).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let p = MotionProfile::walk(1.0, 20.0)
            .with_speed_range(0.8, 1.6)
            .with_turns(TurnSchedule::Random {
                mean_interval: 4.0,
                max_angle: 1.2,
                turn_duration: 2.0,
            });
        let a = synth_walk::<f64>(&p, 9).unwrap();
        let b = synth_walk::<f64>(&p, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_walk::<f64>(&p, 10).unwrap());
    }
}
