use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::so3::{Mat3, Vec3};
use crate::strapdown::{uniform_dt, ImuSample};

const MAX_SCALE_ERROR: f64 = 0.05;
const MAX_MISALIGNMENT: f64 = 2.0 * std::f64::consts::PI / 180.0;

/// Error model of one triad: `x = M S x_true + b(t) + n`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorErrors {
    /// Initial bias per axis.
    pub bias: [f64; 3],
    /// Bias random-walk rate, units per sqrt(s).
    pub bias_walk: f64,
    /// White-noise density per axis, units per sqrt(Hz).
    pub noise_density: [f64; 3],
    /// Scale-factor error per axis, fractional.
    pub scale: [f64; 3],
    /// Small-angle misalignment, rad.
    pub misalignment: [f64; 3],
}

impl SensorErrors {
    fn validate(&self, name: &str) -> Result<()> {
        let finite = self
            .bias
            .iter()
            .chain(&self.noise_density)
            .chain(&self.scale)
            .chain(&self.misalignment)
            .chain(std::iter::once(&self.bias_walk))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput(format!("{name}: non-finite noise parameter")));
        }
        if self.bias_walk < 0.0 || self.noise_density.iter().any(|&d| d < 0.0) {
            return Err(Error::InvalidInput(format!("{name}: noise densities must be >= 0")));
        }
        if self.scale.iter().any(|s| s.abs() > MAX_SCALE_ERROR) {
            return Err(Error::InvalidInput(format!("{name}: scale factor error exceeds 5%")));
        }
        if self.misalignment.iter().any(|m| m.abs() > MAX_MISALIGNMENT) {
            return Err(Error::InvalidInput(format!("{name}: misalignment exceeds 2 degrees")));
        }
        Ok(())
    }

    fn has_transform(&self) -> bool {
        self.scale != [0.0; 3] || self.misalignment != [0.0; 3]
    }

    fn transform<T: Real>(&self) -> Mat3<T> {
        let m = Mat3::identity() + Mat3::skew(Vec3::from_array(self.misalignment));
        let s = Mat3::diagonal(Vec3::from_array(self.scale.map(|v| 1.0 + v)));
        (m * s).cast()
    }
}

/// Accelerometer and gyroscope error models plus the seed of their random processes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub accel: SensorErrors,
    pub gyro: SensorErrors,
    pub seed: u64,
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Consumer-grade MEMS values.
    pub fn consumer_mems(seed: u64) -> Self {
        Self {
            accel: SensorErrors {
                bias: [0.05, -0.03, 0.02],
                bias_walk: 1e-4,
                noise_density: [2e-3; 3],
                scale: [0.01, -0.008, 0.005],
                misalignment: [0.002, -0.001, 0.0015],
            },
            gyro: SensorErrors {
                bias: [0.002, -0.001, 0.0015],
                bias_walk: 2e-5,
                noise_density: [1.5e-4; 3],
                scale: [0.005, -0.004, 0.003],
                misalignment: [0.001, 0.0015, -0.001],
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.accel.validate("accel")?;
        self.gyro.validate("gyro")
    }

    pub fn is_zero(&self) -> bool {
        self.accel == SensorErrors::default() && self.gyro == SensorErrors::default()
    }
}

struct Channel<T> {
    errors: SensorErrors,
    transform: Option<Mat3<T>>,
    bias: Vec3<f64>,
    white_sigma: [f64; 3],
    walk_sigma: f64,
}

impl<T: Real> Channel<T> {
    fn new(errors: SensorErrors, dt: f64) -> Self {
        Self {
            errors,
            transform: errors.has_transform().then(|| errors.transform()),
            bias: Vec3::from_array(errors.bias),
            white_sigma: errors.noise_density.map(|d| d / dt.sqrt()),
            walk_sigma: errors.bias_walk * dt.sqrt(),
        }
    }

    fn apply(&mut self, x: Vec3<T>, rng: &mut ChaCha8Rng) -> Vec3<T> {
        let white: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let walk: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let mut out = match &self.transform {
            Some(m) => *m * x,
            None => x,
        };
        if self.errors.bias != [0.0; 3] || self.walk_sigma > 0.0 {
            out += self.bias.cast();
        }
        if self.white_sigma != [0.0; 3] {
            out += Vec3::new(
                white[0] * self.white_sigma[0],
                white[1] * self.white_sigma[1],
                white[2] * self.white_sigma[2],
            )
            .cast();
        }
        if self.walk_sigma > 0.0 {
            self.bias += Vec3::from_array(walk) * self.walk_sigma;
        }
        out
    }
}

/// Applies the error model; identical inputs and seed give bit-identical output,
/// and the zero model returns the input unchanged.
pub fn corrupt<T: Real>(samples: &[ImuSample<T>], model: &NoiseModel) -> Result<Vec<ImuSample<T>>> {
    model.validate()?;
    if samples.is_empty() || model.is_zero() {
        return Ok(samples.to_vec());
    }
    let dt = uniform_dt(samples)?.to_f64_lossless();
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut accel = Channel::new(model.accel, dt);
    let mut gyro = Channel::new(model.gyro, dt);
    Ok(samples
        .iter()
        .map(|s| {
            let a = accel.apply(s.accel, &mut rng);
            let w = gyro.apply(s.gyro, &mut rng);
            ImuSample::new(s.t, a, w)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{inverse_imu, synth_walk, MotionProfile};
    use crate::strapdown::GravityVector;

    fn clean() -> Vec<ImuSample<f64>> {
        let truth = synth_walk(&MotionProfile::walk(1.2, 20.0), 4).unwrap();
        inverse_imu(&truth, &GravityVector::standard()).unwrap()
    }

    #[test]
    fn zero_model_is_identity() {
        let s = clean();
        assert_eq!(corrupt(&s, &NoiseModel::zero()).unwrap(), s);
        let seeded = NoiseModel {
            seed: 77,
            ..NoiseModel::zero()
        };
        assert_eq!(corrupt(&s, &seeded).unwrap(), s);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let s = clean();
        let m = NoiseModel::consumer_mems(3);
        assert_eq!(corrupt(&s, &m).unwrap(), corrupt(&s, &m).unwrap());
        assert_ne!(
            corrupt(&s, &m).unwrap(),
            corrupt(&s, &NoiseModel::consumer_mems(4)).unwrap()
        );
    }

    #[test]
    fn constant_bias_is_added() {
        let s = clean();
        let mut m = NoiseModel::zero();
        m.gyro.bias = [0.01, 0.0, -0.02];
        let out = corrupt(&s, &m).unwrap();
        for (a, b) in s.iter().zip(&out) {
            assert_eq!(b.accel, a.accel);
            assert!((b.gyro - a.gyro - Vec3::new(0.01, 0.0, -0.02)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn white_noise_has_expected_sigma() {
        let s: Vec<ImuSample<f64>> = (0..40_000)
            .map(|k| ImuSample::new(k as f64 * 0.01, Vec3::zeros(), Vec3::zeros()))
            .collect();
        let mut m = NoiseModel::zero();
        m.accel.noise_density = [0.002; 3];
        let out = corrupt(&s, &m).unwrap();
        let var = out.iter().map(|x| x.accel.x * x.accel.x).sum::<f64>() / out.len() as f64;
        let expected = 0.002 * 10.0;
        assert!((var.sqrt() / expected - 1.0).abs() < 0.02, "{}", var.sqrt());
    }

    #[test]
    fn scale_and_misalignment_limits() {
        let mut m = NoiseModel::zero();
        m.accel.scale = [0.06, 0.0, 0.0];
        assert!(m.validate().is_err());
        m.accel.scale = [0.05, 0.0, 0.0];
        m.gyro.misalignment = [0.0, 0.04, 0.0];
        assert!(m.validate().is_err());
        assert!(NoiseModel::consumer_mems(0).validate().is_ok());
    }
}
