//! Open-loop strapdown integration (attitude, velocity, position).
//!
//! The update is explicit Euler on the pre-update state:
//! `C' = C * Omega(w, dt)`, `v' = v + (C a + g) dt`, `L' = L + v dt`,
//! where `g` is the gravitational acceleration in the navigation frame.
//! This index structure is what makes the window model identical to stepwise
//! integration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::so3::{rodrigues_increment, update_attitude, RotationMatrix, Vec3};

/// Standard gravity, m/s^2.
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Nominal step used when a stream is too short to infer its sample period.
pub const DEFAULT_DT: f64 = 0.01;

/// Relative tolerance on sample-period uniformity.
const UNIFORM_DT_TOLERANCE: f64 = 1e-6;

/// One timestamped 6-DoF inertial reading in the body frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample<T> {
    pub t: T,
    /// Specific force, m/s^2.
    pub accel: Vec3<T>,
    /// Angular rate, rad/s.
    pub gyro: Vec3<T>,
}

impl<T: Real> ImuSample<T> {
    pub fn new(t: T, accel: Vec3<T>, gyro: Vec3<T>) -> Self {
        Self { t, accel, gyro }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.accel.is_finite() && self.gyro.is_finite()
    }

    /// Channels in the order `ax, ay, az, wx, wy, wz`.
    pub fn channels(&self) -> [T; 6] {
        [
            self.accel.x,
            self.accel.y,
            self.accel.z,
            self.gyro.x,
            self.gyro.y,
            self.gyro.z,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavState<T> {
    pub attitude: RotationMatrix<T>,
    pub velocity: Vec3<T>,
    pub position: Vec3<T>,
}

impl<T: Real> NavState<T> {
    pub fn new(attitude: RotationMatrix<T>, velocity: Vec3<T>, position: Vec3<T>) -> Self {
        Self {
            attitude,
            velocity,
            position,
        }
    }

    /// Level, at rest, at the origin.
    pub fn at_rest() -> Self {
        Self::new(RotationMatrix::identity(), Vec3::zeros(), Vec3::zeros())
    }
}

/// Gravitational acceleration in the navigation frame (default `(0, 0, -g0)`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GravityVector<T>(Vec3<T>);

impl<T: Real> GravityVector<T> {
    pub fn standard() -> Self {
        Self(Vec3::new(T::zero(), T::zero(), -T::lit(STANDARD_GRAVITY)))
    }

    /// Downward gravity of magnitude `g0`, which must lie in `[9.7, 9.9]`.
    pub fn with_magnitude(g0: T) -> Result<Self> {
        if !(g0 >= T::lit(9.7) && g0 <= T::lit(9.9)) {
            return Err(Error::InvalidInput(format!(
                "gravity magnitude {g0} outside [9.7, 9.9]; use GravityVector::custom to override"
            )));
        }
        Ok(Self(Vec3::new(T::zero(), T::zero(), -g0)))
    }

    /// Arbitrary gravity vector, bypassing the magnitude check.
    pub fn custom(g: Vec3<T>) -> Self {
        Self(g)
    }

    pub fn vector(&self) -> Vec3<T> {
        self.0
    }

    pub fn magnitude(&self) -> T {
        self.0.norm()
    }

    /// Specific force sensed at rest, `-g` (points up).
    pub fn reaction(&self) -> Vec3<T> {
        -self.0
    }
}

impl<T: Real> Default for GravityVector<T> {
    fn default() -> Self {
        Self::standard()
    }
}

/// One strapdown step driven by `sample` over `dt`.
pub fn propagate<T: Real>(
    state: &NavState<T>,
    sample: &ImuSample<T>,
    dt: T,
    g: &GravityVector<T>,
) -> Result<NavState<T>> {
    if !sample.accel.is_finite() || !sample.gyro.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite IMU sample at t={}", sample.t)));
    }
    let omega = rodrigues_increment(sample.gyro, dt)?;
    let nav_accel = state.attitude.rotate(sample.accel) - g.reaction();
    Ok(NavState {
        attitude: update_attitude(&state.attitude, &omega),
        velocity: state.velocity + nav_accel * dt,
        position: state.position + state.velocity * dt,
    })
}

/// Infers the sample period of a stream, checking monotone and uniform timestamps.
pub fn uniform_dt<T: Real>(samples: &[ImuSample<T>]) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("IMU stream".into()));
    }
    if samples.len() == 1 {
        return Ok(T::lit(DEFAULT_DT));
    }
    for pair in samples.windows(2) {
        if !(pair[1].t > pair[0].t) {
            return Err(Error::InvalidInput(format!(
                "timestamps not strictly increasing at t={}",
                pair[1].t
            )));
        }
    }
    let n = samples.len();
    let dt = (samples[n - 1].t - samples[0].t) / T::from_count(n - 1);
    let tol = dt * T::lit(UNIFORM_DT_TOLERANCE);
    if let Some(pair) = samples.windows(2).find(|p| ((p[1].t - p[0].t) - dt).abs() > tol) {
        return Err(Error::InvalidInput(format!(
            "non-uniform sampling near t={} (expected dt={dt}); resample first",
            pair[0].t
        )));
    }
    Ok(dt)
}

/// Integrates a uniformly sampled stream; one state per sample.
pub fn integrate_track<T: Real>(
    samples: &[ImuSample<T>],
    initial: &NavState<T>,
    g: &GravityVector<T>,
) -> Result<Vec<NavState<T>>> {
    let dt = uniform_dt(samples)?;
    integrate_track_with_dt(samples, initial, g, dt)
}

/// Like [`integrate_track`] with an explicit sample period.
pub fn integrate_track_with_dt<T: Real>(
    samples: &[ImuSample<T>],
    initial: &NavState<T>,
    g: &GravityVector<T>,
    dt: T,
) -> Result<Vec<NavState<T>>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("IMU stream".into()));
    }
    let mut out = Vec::with_capacity(samples.len());
    let mut state = *initial;
    for sample in samples {
        state = propagate(&state, sample, dt, g)?;
        out.push(state);
    }
    Ok(out)
}

/// Horizontal error magnitudes caused by a constant tilt mis-projecting gravity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TiltDrift<T> {
    pub accel: T,
    pub velocity: T,
    pub position: T,
}

/// Closed form: `a = g0 sin(tilt)`, `v = a T`, `p = a T^2 / 2`.
pub fn tilt_drift<T: Real>(tilt: T, duration: T, g0: T) -> Result<TiltDrift<T>> {
    if !(duration >= T::zero()) {
        return Err(Error::InvalidInput(format!("duration must be >= 0, got {duration}")));
    }
    let accel = g0 * tilt.sin().abs();
    Ok(TiltDrift {
        accel,
        velocity: accel * duration,
        position: accel * duration * duration * T::lit(0.5),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn stream(n: usize, dt: f64, accel: Vec3<f64>, gyro: Vec3<f64>) -> Vec<ImuSample<f64>> {
        (0..n).map(|k| ImuSample::new(k as f64 * dt, accel, gyro)).collect()
    }

    #[test]
    fn stationary_state_is_unchanged() {
        let g = GravityVector::standard();
        let c = RotationMatrix::from_euler(0.2, -0.1, 1.0);
        let state = NavState::new(c, Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0));
        let sample = ImuSample::new(0.0, c.inverse_rotate(g.reaction()), Vec3::zeros());
        let next = propagate(&state, &sample, 0.01, &g).unwrap();
        assert!(next.velocity.max_abs() < 1e-15);
        assert_eq!(next.position, state.position);
        assert_eq!(next.attitude, state.attitude);
    }

    #[test]
    fn one_degree_tilt_leaks_gravity() {
        let g = GravityVector::standard();
        let sensed = Vec3::new(0.0, 0.0, STANDARD_GRAVITY);
        let tilted = NavState::new(RotationMatrix::rot_x(1f64.to_radians()), Vec3::zeros(), Vec3::zeros());
        let next = propagate(&tilted, &ImuSample::new(0.0, sensed, Vec3::zeros()), 1.0, &g).unwrap();
        let horizontal = next.velocity.horizontal_norm();
        assert!((horizontal - 0.1712).abs() / 0.1712 < 0.005, "{horizontal}");
    }

    #[test]
    fn constant_acceleration_matches_euler_sum() {
        let g = GravityVector::standard();
        let accel = Vec3::new(1.0, 0.0, 0.0) + g.reaction();
        let samples = stream(100, 0.01, accel, Vec3::zeros());
        let track = integrate_track(&samples, &NavState::at_rest(), &g).unwrap();
        let last = track.last().unwrap();
        // v = 100 * 0.01, L = sum_{k<100} k * 0.01 * 0.01
        let expected_l: f64 = (0..100).map(|k| k as f64 * 0.01 * 0.01).sum();
        assert!((last.velocity - Vec3::new(1.0, 0.0, 0.0)).max_abs() < 1e-12);
        assert!((last.position.x - expected_l).abs() < 1e-12);
        assert!((expected_l - 0.495).abs() < 1e-12);
    }

    #[test]
    fn single_sample_track() {
        let g = GravityVector::standard();
        let samples = vec![ImuSample::new(0.0, g.reaction(), Vec3::zeros())];
        let track = integrate_track(&samples, &NavState::at_rest(), &g).unwrap();
        assert_eq!(track, vec![NavState::at_rest()]);
    }

    #[test]
    fn empty_and_invalid_streams() {
        let g = GravityVector::<f64>::standard();
        assert!(matches!(
            integrate_track(&[], &NavState::at_rest(), &g),
            Err(Error::EmptyInput(_))
        ));
        let mut samples = stream(3, 0.01, g.reaction(), Vec3::zeros());
        samples[1].accel.x = f64::NAN;
        assert!(matches!(
            integrate_track(&samples, &NavState::at_rest(), &g),
            Err(Error::InvalidInput(_))
        ));
        let mut jittered = stream(5, 0.01, g.reaction(), Vec3::zeros());
        jittered[2].t += 0.003;
        assert!(integrate_track(&jittered, &NavState::at_rest(), &g).is_err());
        let backwards = vec![jittered[1], jittered[0]];
        assert!(integrate_track(&backwards, &NavState::at_rest(), &g).is_err());
    }

    #[test]
    fn constant_bias_matches_closed_form() {
        let g = GravityVector::standard();
        let dt = 0.01;
        let bias = Vec3::new(0.03, -0.04, 0.0);
        let samples = stream(1000, dt, g.reaction() + bias, Vec3::zeros());
        let track = integrate_track(&samples, &NavState::at_rest(), &g).unwrap();
        let t = 1000.0 * dt;
        let expected = bias.norm() * t * (t - dt) / 2.0;
        assert!((track.last().unwrap().position.norm() - expected).abs() < 1e-9);
    }

    #[test]
    fn white_accelerometer_noise_grows_as_three_halves_power() {
        // Position error of integrated white noise has std ~ T^(3/2): the
        // 60 s / 20 s ratio of the mean error is ~3^1.5 = 5.2.
        let g = GravityVector::standard();
        let dt = 0.01;
        let normal = Normal::new(0.0, 0.1).unwrap();
        let (mut e20, mut e60) = (0.0, 0.0);
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<_> = (0..6000)
                .map(|k| {
                    let noise = Vec3::new(
                        normal.sample(&mut rng),
                        normal.sample(&mut rng),
                        normal.sample(&mut rng),
                    );
                    ImuSample::new(k as f64 * dt, g.reaction() + noise, Vec3::zeros())
                })
                .collect();
            let track = integrate_track(&samples, &NavState::at_rest(), &g).unwrap();
            e20 += track[1999].position.norm();
            e60 += track[5999].position.norm();
        }
        let ratio = e60 / e20;
        assert!(ratio > 1.0, "superlinear growth expected");
        assert!((4.5..6.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn white_noise_on_both_sensors_grows_beyond_tenfold() {
        // Gyro noise tilts the attitude as a random walk and leaks gravity,
        // making the position error grow ~T^(5/2).
        let g = GravityVector::standard();
        let dt = 0.01;
        let accel_noise = Normal::new(0.0, 0.1).unwrap();
        let gyro_noise = Normal::new(0.0, 0.01).unwrap();
        let (mut e20, mut e60) = (0.0, 0.0);
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let samples: Vec<_> = (0..6000)
                .map(|k| {
                    let a = Vec3::new(
                        accel_noise.sample(&mut rng),
                        accel_noise.sample(&mut rng),
                        accel_noise.sample(&mut rng),
                    );
                    let w = Vec3::new(
                        gyro_noise.sample(&mut rng),
                        gyro_noise.sample(&mut rng),
                        gyro_noise.sample(&mut rng),
                    );
                    ImuSample::new(k as f64 * dt, g.reaction() + a, w)
                })
                .collect();
            let track = integrate_track(&samples, &NavState::at_rest(), &g).unwrap();
            e20 += track[1999].position.horizontal_norm();
            e60 += track[5999].position.horizontal_norm();
        }
        assert!(e60 > 10.0 * e20, "ratio {}", e60 / e20);
    }

    #[test]
    fn propagation_is_equivariant_under_navigation_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = GravityVector::standard();
        for _ in 0..200 {
            let r = RotationMatrix::from_euler(
                rng.random::<f64>() * 6.0,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() * 6.0,
            );
            let c = RotationMatrix::from_euler(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let v = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let sample = ImuSample::new(
                0.0,
                Vec3::new(
                    rng.random::<f64>() * 20.0 - 10.0,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() * 12.0,
                ),
                Vec3::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                ),
            );
            let base = NavState::new(c, v, Vec3::zeros());
            let rotated = NavState::new(r * c, r.rotate(v), Vec3::zeros());
            let g_rot = GravityVector::custom(r.rotate(g.vector()));
            let a = propagate(&base, &sample, 0.01, &g).unwrap();
            let b = propagate(&rotated, &sample, 0.01, &g_rot).unwrap();
            assert!((r.rotate(a.velocity - v) - (b.velocity - r.rotate(v))).max_abs() <= 1e-12);
            assert!((r.rotate(a.position) - b.position).max_abs() <= 1e-12);
            assert!((*(r * a.attitude).matrix() - *b.attitude.matrix()).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn integration_is_deterministic() {
        let g = GravityVector::standard();
        let samples = stream(500, 0.01, Vec3::new(0.3, 0.1, 9.9), Vec3::new(0.01, -0.02, 0.3));
        let a = integrate_track(&samples, &NavState::at_rest(), &g).unwrap();
        let b = integrate_track(&samples, &NavState::at_rest(), &g).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.position.x.to_bits(), y.position.x.to_bits());
            assert_eq!(x.attitude.matrix().to_row_major(), y.attitude.matrix().to_row_major());
        }
    }

    #[test]
    fn tilt_drift_examples() {
        let one = tilt_drift(1f64.to_radians(), 10.0, 9.81).unwrap();
        for (got, want) in [(one.accel, 0.1712), (one.velocity, 1.712), (one.position, 8.56)] {
            assert!((got - want).abs() / want < 0.005, "{got} vs {want}");
        }
        let two = tilt_drift(2f64.to_radians(), 10.0, 9.81).unwrap();
        for (got, want) in [(two.accel, 0.3424), (two.velocity, 3.424), (two.position, 17.12)] {
            assert!((got - want).abs() / want < 0.005, "{got} vs {want}");
        }
        let zero = tilt_drift(0.0, 42.0, 9.81).unwrap();
        assert_eq!((zero.accel, zero.velocity, zero.position), (0.0, 0.0, 0.0));
        assert!(tilt_drift(0.1, -1.0, 9.81).is_err());
    }

    #[test]
    fn gravity_magnitude_is_checked() {
        assert!(GravityVector::with_magnitude(9.81).is_ok());
        assert!(GravityVector::with_magnitude(1.62).is_err());
        assert_eq!(GravityVector::custom(Vec3::new(0.0, 0.0, -1.62)).magnitude(), 1.62);
    }
}
