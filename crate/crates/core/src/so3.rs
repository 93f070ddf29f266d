//! Rotation algebra for strapdown integration.
//!
//! Frames: the navigation frame is x-east, y-north, z-up and right-handed.
//! A [`RotationMatrix`] maps body-frame vectors into the navigation frame, and
//! gyroscope increments post-multiply the attitude (body-frame increments).

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{wrap_angle, Real};

/// Below this rotation angle the Rodrigues coefficients switch to their series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Body x-axis closer than this to vertical has no defined heading.
pub const HEADING_DEGENERACY: f64 = 1e-6;

/// Matrices farther than this from orthogonal are rejected by [`reorthonormalize`].
pub const MAX_REORTHONORMALIZE_ERROR: f64 = 1e-3;

/// Tolerance accepted by [`RotationMatrix::from_matrix`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zeros() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &Self) -> Self {
        Self::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    /// Length of the (x, y) projection.
    pub fn horizontal_norm(&self) -> T {
        self.x.hypot(self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(&self) -> T {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.to_f64_lossless()),
            U::lit(self.y.to_f64_lossless()),
            U::lit(self.z.to_f64_lossless()),
        )
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// General 3x3 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub const fn from_rows(m: [[T; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self::from_rows([[o, z, z], [z, o, z], [z, z, o]])
    }

    pub fn zeros() -> Self {
        Self::from_rows([[T::zero(); 3]; 3])
    }

    pub fn diagonal(d: Vec3<T>) -> Self {
        let z = T::zero();
        Self::from_rows([[d.x, z, z], [z, d.y, z], [z, z, d.z]])
    }

    /// Cross-product matrix `[v x]`.
    pub fn skew(v: Vec3<T>) -> Self {
        let z = T::zero();
        Self::from_rows([[z, -v.z, v.y], [v.z, z, -v.x], [-v.y, v.x, z]])
    }

    /// Row-major flat copy (c11, c12, ..., c33).
    pub fn to_row_major(&self) -> [T; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn from_row_major(a: [T; 9]) -> Self {
        Self::from_rows([[a[0], a[1], a[2]], [a[3], a[4], a[5]], [a[6], a[7], a[8]]])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Self::from_rows([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn column(&self, j: usize) -> Vec3<T> {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        out.m.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    pub fn max_abs(&self) -> T {
        self.m.iter().flatten().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    /// `max |(M^T M - I)_ij|`.
    pub fn orthogonality_error(&self) -> T {
        (self.transpose() * *self - Self::identity()).max_abs()
    }

    pub fn cast<U: Real>(&self) -> Mat3<U> {
        let mut out = Mat3::<U>::zeros();
        for (dst, src) in out.m.iter_mut().flatten().zip(self.m.iter().flatten()) {
            *dst = U::lit(src.to_f64_lossless());
        }
        out
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = self.m[i][0] * rhs.m[0][j] + self.m[i][1] * rhs.m[1][j] + self.m[i][2] * rhs.m[2][j];
            }
        }
        out
    }
}

impl<T: Real> Mul<Vec3<T>> for Mat3<T> {
    type Output = Vec3<T>;
    fn mul(self, v: Vec3<T>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        for (a, b) in out.m.iter_mut().flatten().zip(rhs.m.iter().flatten()) {
            *a += *b;
        }
        out
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut out = self;
        for (a, b) in out.m.iter_mut().flatten().zip(rhs.m.iter().flatten()) {
            *a -= *b;
        }
        out
    }
}

/// Direction cosine matrix (body to navigation).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RotationMatrix<T>(Mat3<T>);

impl<T: Real> RotationMatrix<T> {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Validates orthogonality and a positive determinant within [`ROTATION_TOLERANCE`].
    pub fn from_matrix(m: Mat3<T>) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidInput("rotation matrix has non-finite entries".into()));
        }
        let tol = T::lit(ROTATION_TOLERANCE);
        let err = m.orthogonality_error();
        if err > tol || (m.determinant() - T::one()).abs() > tol {
            return Err(Error::DegenerateInput(format!(
                "matrix is not a proper rotation (orthogonality error {err})"
            )));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix the caller knows to be a rotation.
    pub fn from_matrix_unchecked(m: Mat3<T>) -> Self {
        Self(m)
    }

    pub fn rot_x(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, z) = (T::one(), T::zero());
        Self(Mat3::from_rows([[o, z, z], [z, c, -s], [z, s, c]]))
    }

    pub fn rot_y(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, z) = (T::one(), T::zero());
        Self(Mat3::from_rows([[c, z, s], [z, o, z], [-s, z, c]]))
    }

    pub fn rot_z(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, z) = (T::one(), T::zero());
        Self(Mat3::from_rows([[c, -s, z], [s, c, z], [z, z, o]]))
    }

    /// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_euler(roll: T, pitch: T, yaw: T) -> Self {
        Self(Self::rot_z(yaw).0 * Self::rot_y(pitch).0 * Self::rot_x(roll).0)
    }

    pub fn matrix(&self) -> &Mat3<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Mat3<T> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: Vec3<T>) -> Vec3<T> {
        self.0 * v
    }

    /// Applies the inverse rotation (`R^T v`).
    pub fn inverse_rotate(&self, v: Vec3<T>) -> Vec3<T> {
        self.0.transpose() * v
    }

    pub fn orthogonality_error(&self) -> T {
        self.0.orthogonality_error()
    }

    pub fn cast<U: Real>(&self) -> RotationMatrix<U> {
        RotationMatrix(self.0.cast())
    }
}

impl<T: Real> Mul for RotationMatrix<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self(self.0 * rhs.0)
    }
}

impl<T: Real> Mul<Vec3<T>> for RotationMatrix<T> {
    type Output = Vec3<T>;
    fn mul(self, v: Vec3<T>) -> Vec3<T> {
        self.0 * v
    }
}

/// Rodrigues coefficients `sin(t)/t` and `(1 - cos t)/t^2` for `t^2 = theta_sq`.
fn rodrigues_coefficients<T: Real>(theta_sq: T) -> (T, T) {
    let small = T::lit(SMALL_ANGLE);
    if theta_sq < small * small {
        (T::one() - theta_sq / T::lit(6.0), T::lit(0.5) - theta_sq / T::lit(24.0))
    } else {
        let theta = theta_sq.sqrt();
        (theta.sin() / theta, (T::one() - theta.cos()) / theta_sq)
    }
}

/// Exponential map: rotation vector to rotation matrix.
pub fn exp_map<T: Real>(phi: Vec3<T>) -> RotationMatrix<T> {
    let (a, b) = rodrigues_coefficients(phi.norm_squared());
    let k = Mat3::skew(phi);
    RotationMatrix(Mat3::identity() + k.scale(a) + (k * k).scale(b))
}

/// Rotation increment for one gyroscope reading held over `dt`.
pub fn rodrigues_increment<T: Real>(w: Vec3<T>, dt: T) -> Result<RotationMatrix<T>> {
    if !w.is_finite() || !dt.is_finite() {
        return Err(Error::InvalidInput("non-finite angular rate or dt".into()));
    }
    if dt <= T::zero() {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    Ok(exp_map(w * dt))
}

/// Logarithm map: rotation matrix to rotation vector with angle in `[0, pi]`.
///
/// Uses `atan2(|vee(R - R^T)|/2, (tr R - 1)/2)` for the angle, which stays
/// accurate near zero; close to `pi` the axis is taken from the symmetric part.
pub fn log_map<T: Real>(r: &RotationMatrix<T>) -> Vec3<T> {
    let m = &r.0.m;
    let half = T::lit(0.5);
    let v = Vec3::new(m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]) * half;
    let sin_theta = v.norm();
    let cos_theta = (r.0.trace() - T::one()) * half;
    let theta = sin_theta.atan2(cos_theta);

    if theta < T::lit(SMALL_ANGLE) {
        // theta / sin(theta) = 1 + theta^2/6 + O(theta^4)
        return v * (T::one() + theta * theta / T::lit(6.0));
    }
    if T::PI() - theta > T::lit(1e-4) {
        return v * (theta / sin_theta);
    }

    // Near pi: (R + R^T)/2 = cos(t) I + (1 - cos t) n n^T.
    let one_minus_cos = T::one() - cos_theta;
    let diag = [m[0][0], m[1][1], m[2][2]];
    let k = (0..3)
        .max_by(|&a, &b| diag[a].partial_cmp(&diag[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    let nk = ((diag[k] - cos_theta) / one_minus_cos).max(T::zero()).sqrt();
    let mut n = [T::zero(); 3];
    n[k] = nk;
    for j in 0..3 {
        if j != k {
            n[j] = (m[k][j] + m[j][k]) * half / (one_minus_cos * nk);
        }
    }
    let mut axis = Vec3::from_array(n);
    axis = axis / axis.norm();
    if axis.dot(&v) < T::zero() {
        axis = -axis;
    }
    axis * theta
}

/// Tolerance above which [`update_attitude`] re-projects its product.
fn drift_tolerance<T: Real>() -> T {
    T::epsilon() * T::lit(4096.0)
}

/// Attitude composition `C * Omega`, re-orthonormalized once the product drifts.
pub fn update_attitude<T: Real>(c: &RotationMatrix<T>, omega: &RotationMatrix<T>) -> RotationMatrix<T> {
    let product = c.0 * omega.0;
    if product.orthogonality_error() > drift_tolerance() {
        RotationMatrix(polar_iterate(product))
    } else {
        RotationMatrix(product)
    }
}

fn polar_step<T: Real>(r: Mat3<T>) -> Mat3<T> {
    r.scale(T::lit(1.5)) - (r * (r.transpose() * r)).scale(T::lit(0.5))
}

fn polar_iterate<T: Real>(mut r: Mat3<T>) -> Mat3<T> {
    let target = T::epsilon() * T::lit(8.0);
    let mut err = r.orthogonality_error();
    for _ in 0..16 {
        if err <= target {
            break;
        }
        let next = polar_step(r);
        let next_err = next.orthogonality_error();
        if next_err >= err {
            break;
        }
        r = next;
        err = next_err;
    }
    r
}

/// Nearest proper rotation via the iteration `R <- 1.5 R - 0.5 R R^T R`.
pub fn reorthonormalize<T: Real>(c: &Mat3<T>) -> Result<RotationMatrix<T>> {
    if !c.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let err = c.orthogonality_error();
    if err > T::lit(MAX_REORTHONORMALIZE_ERROR) || c.determinant() <= T::zero() {
        return Err(Error::DegenerateInput(format!(
            "matrix is too far from a proper rotation (orthogonality error {err})"
        )));
    }
    Ok(RotationMatrix(polar_iterate(*c)))
}

/// Heading of the body x-axis in the horizontal plane, `atan2(C21, C11)` in `(-pi, pi]`.
pub fn yaw_of<T: Real>(c: &RotationMatrix<T>) -> Result<T> {
    let (c11, c21) = (c.0.m[0][0], c.0.m[1][0]);
    if c11.hypot(c21) < T::lit(HEADING_DEGENERACY) {
        return Err(Error::DegenerateHeading {
            tolerance: HEADING_DEGENERACY,
        });
    }
    Ok(wrap_angle(c21.atan2(c11)))
}
