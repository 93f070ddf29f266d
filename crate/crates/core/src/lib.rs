//! Windowed inertial odometry.
//!
//! The crate covers the full pipeline: rotation algebra and open-loop
//! strapdown integration, the windowed polar-delta model (distance and
//! heading change per fixed-length IMU window), a bidirectional LSTM
//! regressor trained from scratch, a step-based pedestrian dead-reckoning
//! baseline, an IMU simulator whose streams invert the strapdown equations
//! exactly, and trajectory error metrics.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*F64` aliases
//! below name the double-precision instantiations used by the CLI.

pub mod error;
pub mod eval;
pub mod io;
pub mod neural;
pub mod pdr;
pub mod real;
pub mod sim;
pub mod so3;
pub mod strapdown;
pub mod window;

pub use error::{Error, Result};
pub use real::{wrap_angle, Real};

pub type Vec3F64 = so3::Vec3<f64>;
pub type Vec3F32 = so3::Vec3<f32>;
pub type Mat3F64 = so3::Mat3<f64>;
pub type RotationF64 = so3::RotationMatrix<f64>;
pub type RotationF32 = so3::RotationMatrix<f32>;
pub type ImuSampleF64 = strapdown::ImuSample<f64>;
pub type ImuSampleF32 = strapdown::ImuSample<f32>;
pub type NavStateF64 = strapdown::NavState<f64>;
pub type GravityF64 = strapdown::GravityVector<f64>;
pub type TruthPoseF64 = sim::TruthPose<f64>;
pub type PolarDeltaF64 = window::PolarDelta<f64>;
pub type Pose2DF64 = window::Pose2D<f64>;
pub type TrackPointF64 = window::TrackPoint<f64>;
pub type OdometryModelF64 = neural::OdometryModel<f64>;
pub type ModelParamsF64 = neural::ModelParams<f64>;
