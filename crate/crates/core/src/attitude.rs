//! Attitude representations and the rigid-rotation helpers shared by the
//! identification and estimation code.
//!
//! Conventions used throughout the crate:
//!
//! * Quaternions are stored scalar-last, `[x, y, z, w]`.
//! * A unit quaternion encodes the inertial-to-camera attitude matrix
//!   `C(q) = (w² − |v|²) I + 2 v vᵀ − 2 w [v×]`.
//! * Composition `a.compose(&b)` satisfies `C(a ⊗ b) = C(a) C(b)`, so the
//!   pure-quaternion operator `[ω_q ⊗]` applied from the left propagates an
//!   attitude about a camera-frame axis, and `C(propagate(q0, ω, dt))` equals
//!   `delta_c(ω̂, Ω dt) · C(q0)`.

use std::fmt;
use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when validating that an input vector is unit norm.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Arcseconds per radian.
pub const ARCSEC_PER_RAD: f64 = 180.0 * 3600.0 / std::f64::consts::PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttitudeError {
    #[error("vector norm {norm} deviates from unity by more than {UNIT_NORM_TOL}")]
    NotUnit { norm: f64 },
    #[error("cannot normalize a zero or non-finite vector")]
    Degenerate,
    #[error("at least {needed} vector pairs are required, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("observation, reference and weight counts differ ({obs}, {refs}, {weights})")]
    LengthMismatch {
        obs: usize,
        refs: usize,
        weights: usize,
    },
    #[error("weights must be positive and finite")]
    BadWeight,
    #[error("all vector pairs are collinear; attitude is unobservable")]
    DegenerateGeometry,
    #[error("non-finite input")]
    NonFinite,
}

/// Converts arcseconds to radians.
pub fn arcsec(value: f64) -> f64 {
    value / ARCSEC_PER_RAD
}

/// A direction in 3-space with unit norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitVec3(Vector3<f64>);

impl UnitVec3 {
    /// Accepts a vector whose norm is within [`UNIT_NORM_TOL`] of one and
    /// renormalizes it exactly.
    pub fn try_new(v: Vector3<f64>) -> Result<Self, AttitudeError> {
        let n = v.norm();
        if !n.is_finite() {
            return Err(AttitudeError::NonFinite);
        }
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(AttitudeError::NotUnit { norm: n });
        }
        Ok(Self(v / n))
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalize(v: Vector3<f64>) -> Result<Self, AttitudeError> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(AttitudeError::Degenerate);
        }
        Ok(Self(v / n))
    }

    pub(crate) fn new_unchecked(v: Vector3<f64>) -> Self {
        Self(v)
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Result<Self, AttitudeError> {
        Self::normalize(Vector3::new(x, y, z))
    }

    pub fn x_axis() -> Self {
        Self(Vector3::x())
    }

    pub fn y_axis() -> Self {
        Self(Vector3::y())
    }

    pub fn z_axis() -> Self {
        Self(Vector3::z())
    }

    /// Unit vector from right ascension and declination, both in radians.
    pub fn from_ra_dec(ra: f64, dec: f64) -> Self {
        let (sd, cd) = dec.sin_cos();
        let (sa, ca) = ra.sin_cos();
        Self(Vector3::new(cd * ca, cd * sa, sd))
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    #[inline]
    pub fn dot(&self, other: &UnitVec3) -> f64 {
        self.0.dot(&other.0)
    }

    /// Angle to another direction, stable for small and near-π separations.
    pub fn angle_to(&self, other: &UnitVec3) -> f64 {
        self.0.cross(&other.0).norm().atan2(self.0.dot(&other.0))
    }
}

impl Neg for UnitVec3 {
    type Output = UnitVec3;
    fn neg(self) -> UnitVec3 {
        UnitVec3(-self.0)
    }
}

impl TryFrom<[f64; 3]> for UnitVec3 {
    type Error = AttitudeError;
    fn try_from(a: [f64; 3]) -> Result<Self, Self::Error> {
        Self::try_new(Vector3::new(a[0], a[1], a[2]))
    }
}

impl From<UnitVec3> for [f64; 3] {
    fn from(v: UnitVec3) -> Self {
        v.to_array()
    }
}

/// Angular velocity written as an axis and a signed rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularVelocity {
    pub axis: UnitVec3,
    pub rate: f64,
}

impl AngularVelocity {
    pub fn new(axis: UnitVec3, rate: f64) -> Self {
        Self { axis, rate }
    }

    /// Splits a rate vector into axis and magnitude. A zero vector maps to
    /// zero rate about +z.
    pub fn from_vector(w: Vector3<f64>) -> Self {
        let n = w.norm();
        if n < 1e-300 {
            Self::new(UnitVec3::z_axis(), 0.0)
        } else {
            Self::new(UnitVec3::new_unchecked(w / n), n)
        }
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.axis.0 * self.rate
    }
}

/// Attitude quaternion, scalar-last.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Quaternion {
    pub const fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Self { x, y, z, w }
    }

    pub const fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0, 1.0)
    }

    /// Pure quaternion `{v; 0}`.
    pub fn pure(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z, 0.0)
    }

    /// Rotation by `angle` about `axis`; `C(q)` equals `delta_c(axis, angle)`.
    pub fn from_axis_angle(axis: &UnitVec3, angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis.as_vector();
        Self::new(a.x * s, a.y * s, a.z * s, c)
    }

    pub fn from_vector4(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector4(self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.z, self.w)
    }

    pub fn vector_part(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self::new(self.x / n, self.y / n, self.z / n, self.w / n)
    }

    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z + self.w * o.w
    }

    pub fn conjugate(self) -> Self {
        Self::new(-self.x, -self.y, -self.z, self.w)
    }

    /// Multiplicative inverse; equals the conjugate for unit quaternions.
    pub fn inverse(self) -> Self {
        let n2 = self.dot(&self);
        let c = self.conjugate();
        Self::new(c.x / n2, c.y / n2, c.z / n2, c.w / n2)
    }

    /// `self ⊗ other`, ordered so that `C(self ⊗ other) = C(self) C(other)`.
    pub fn compose(&self, other: &Quaternion) -> Quaternion {
        let a = self.vector_part();
        let b = other.vector_part();
        let v = b * self.w + a * other.w - a.cross(&b);
        Quaternion::new(v.x, v.y, v.z, self.w * other.w - a.dot(&b))
    }

    /// The 4×4 matrix `[q ⊗]` with `[q ⊗] p = q ⊗ p`.
    pub fn left_matrix(&self) -> Matrix4<f64> {
        let (x, y, z, w) = (self.x, self.y, self.z, self.w);
        Matrix4::new(
            w, z, -y, x, //
            -z, w, x, y, //
            y, -x, w, z, //
            -x, -y, -z, w,
        )
    }

    pub fn to_rotation_matrix(&self) -> RotationMatrix {
        let v = self.vector_part();
        let w = self.w;
        let m = Matrix3::identity() * (w * w - v.dot(&v)) + v * v.transpose() * 2.0
            - skew(&v) * (2.0 * w);
        RotationMatrix(m)
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_rotation_matrix(c: &RotationMatrix) -> Quaternion {
        let m = &c.0;
        let tr = m.trace();
        // candidates: 4w², 4x², 4y², 4z²
        let cands = [
            1.0 + tr,
            1.0 + 2.0 * m[(0, 0)] - tr,
            1.0 + 2.0 * m[(1, 1)] - tr,
            1.0 + 2.0 * m[(2, 2)] - tr,
        ];
        let (imax, _) = cands
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let q = match imax {
            0 => {
                let w = 0.5 * cands[0].sqrt();
                let f = 0.25 / w;
                Quaternion::new(
                    (m[(1, 2)] - m[(2, 1)]) * f,
                    (m[(2, 0)] - m[(0, 2)]) * f,
                    (m[(0, 1)] - m[(1, 0)]) * f,
                    w,
                )
            }
            1 => {
                let x = 0.5 * cands[1].sqrt();
                let f = 0.25 / x;
                Quaternion::new(
                    x,
                    (m[(0, 1)] + m[(1, 0)]) * f,
                    (m[(0, 2)] + m[(2, 0)]) * f,
                    (m[(1, 2)] - m[(2, 1)]) * f,
                )
            }
            2 => {
                let y = 0.5 * cands[2].sqrt();
                let f = 0.25 / y;
                Quaternion::new(
                    (m[(0, 1)] + m[(1, 0)]) * f,
                    y,
                    (m[(1, 2)] + m[(2, 1)]) * f,
                    (m[(2, 0)] - m[(0, 2)]) * f,
                )
            }
            _ => {
                let z = 0.5 * cands[3].sqrt();
                let f = 0.25 / z;
                Quaternion::new(
                    (m[(0, 2)] + m[(2, 0)]) * f,
                    (m[(1, 2)] + m[(2, 1)]) * f,
                    z,
                    (m[(0, 1)] - m[(1, 0)]) * f,
                )
            }
        };
        q.normalized()
    }

    /// Rotation angle between two attitudes, insensitive to quaternion sign.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        let r = self.conjugate().compose(other);
        2.0 * r.vector_part().norm().atan2(r.w.abs())
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.x, -self.y, -self.z, -self.w)
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.12}, {:.12}, {:.12}; {:.12}]", self.x, self.y, self.z, self.w)
    }
}

/// Direction cosine matrix; maps inertial vectors into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix that the caller asserts is a proper rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Rigid rotation through `angle` about `axis`:
    /// `I cos φ + (1 − cos φ) ω̂ω̂ᵀ − [ω̂×] sin φ`.
    pub fn about_axis(axis: &UnitVec3, angle: f64) -> Self {
        let a = axis.as_vector();
        let (s, c) = angle.sin_cos();
        Self(Matrix3::identity() * c + a * a.transpose() * (1.0 - c) - skew(a) * s)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: &UnitVec3) -> UnitVec3 {
        UnitVec3::new_unchecked(self.0 * v.0)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn is_proper(&self, tol: f64) -> bool {
        let orth = (self.0 * self.0.transpose() - Matrix3::identity()).abs().max();
        orth <= tol && (self.0.determinant() - 1.0).abs() <= tol
    }

    pub fn to_quaternion(&self) -> Quaternion {
        Quaternion::from_rotation_matrix(self)
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<&RotationMatrix> for &RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: &RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

/// Cross-product matrix `[v×]`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation `δC` that maps a direction seen at one epoch to where it is
/// expected after turning `angle` radians about `axis`.
pub fn delta_c(axis: &Vector3<f64>, angle: f64) -> Result<RotationMatrix, AttitudeError> {
    if !angle.is_finite() {
        return Err(AttitudeError::NonFinite);
    }
    let axis = UnitVec3::try_new(*axis)?;
    Ok(RotationMatrix::about_axis(&axis, angle))
}

/// Closed-form solution of the quaternion kinematics under constant angular
/// velocity: `[I cos(Ωδt/2) + sin(Ωδt/2) [ω̂_q ⊗]] q0`.
pub fn propagate_quaternion(q0: &Quaternion, omega: &AngularVelocity, dt: f64) -> Quaternion {
    let half = 0.5 * omega.rate * dt;
    let (s, c) = half.sin_cos();
    let op = Quaternion::pure(omega.axis.as_vector()).left_matrix();
    let q = (Matrix4::identity() * c + op * s) * q0.to_vector4();
    Quaternion::from_vector4(&q)
}

/// Result of a Wahba solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WahbaSolution {
    pub quaternion: Quaternion,
    /// Attained loss `½ Σ wᵢ |bᵢ − C rᵢ|²`.
    pub cost: f64,
    pub n_stars: usize,
}

impl WahbaSolution {
    pub fn attitude(&self) -> RotationMatrix {
        self.quaternion.to_rotation_matrix()
    }
}

/// Davenport q-method: the attitude is the eigenvector of the 4×4 K matrix
/// with the largest eigenvalue.
pub fn solve_wahba(
    obs: &[UnitVec3],
    refs: &[UnitVec3],
    weights: &[f64],
) -> Result<WahbaSolution, AttitudeError> {
    if obs.len() != refs.len() || obs.len() != weights.len() {
        return Err(AttitudeError::LengthMismatch {
            obs: obs.len(),
            refs: refs.len(),
            weights: weights.len(),
        });
    }
    if obs.len() < 2 {
        return Err(AttitudeError::InsufficientData {
            needed: 2,
            got: obs.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(AttitudeError::BadWeight);
    }
    if collinear(obs) || collinear(refs) {
        return Err(AttitudeError::DegenerateGeometry);
    }

    let mut b = Matrix3::zeros();
    for ((bo, r), w) in obs.iter().zip(refs).zip(weights) {
        b += bo.0 * r.0.transpose() * *w;
    }
    let sigma = b.trace();
    let s = b + b.transpose();
    let z = Vector3::new(
        b[(1, 2)] - b[(2, 1)],
        b[(2, 0)] - b[(0, 2)],
        b[(0, 1)] - b[(1, 0)],
    );
    let mut k = Matrix4::zeros();
    k.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(s - Matrix3::identity() * sigma));
    k.fixed_view_mut::<3, 1>(0, 3).copy_from(&z);
    k.fixed_view_mut::<1, 3>(3, 0).copy_from(&z.transpose());
    k[(3, 3)] = sigma;

    let eig = SymmetricEigen::new(k);
    let imax = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(imax);
    let mut q = Quaternion::new(v[0], v[1], v[2], v[3]).normalized();
    if q.w < 0.0 {
        q = -q;
    }

    let c = q.to_rotation_matrix();
    let cost = obs
        .iter()
        .zip(refs)
        .zip(weights)
        .map(|((bo, r), w)| 0.5 * w * (bo.0 - c.0 * r.0).norm_squared())
        .sum();

    Ok(WahbaSolution {
        quaternion: q,
        cost,
        n_stars: obs.len(),
    })
}

fn collinear(v: &[UnitVec3]) -> bool {
    let first = v[0].0;
    v.iter().all(|x| first.cross(&x.0).norm() < 1e-12)
}

/// Principal angle of the relative rotation `c1ᵀ c2`, in `[0, π]`.
pub fn principal_angle(c1: &RotationMatrix, c2: &RotationMatrix) -> f64 {
    let tr = (c1.0.transpose() * c2.0).trace();
    (0.5 * (tr - 1.0)).clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn approx_mat(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) -> bool {
        (a - b).abs().max() <= tol
    }

    #[test]
    fn delta_c_zero_and_full_turn_are_identity() {
        let z = delta_c(&Vector3::z(), 0.0).unwrap();
        assert_eq!(*z.matrix(), Matrix3::identity());
        let axis = Vector3::new(0.3, -0.4, 0.5).normalize();
        let full = delta_c(&axis, 2.0 * PI).unwrap();
        assert!(approx_mat(full.matrix(), &Matrix3::identity(), 1e-12));
    }

    #[test]
    fn delta_c_quarter_turn_about_z() {
        let c = delta_c(&Vector3::z(), FRAC_PI_2).unwrap();
        let out = c.apply(&UnitVec3::x_axis());
        assert!((out.as_vector() - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn delta_c_rejects_non_unit_axis() {
        let err = delta_c(&Vector3::new(0.0, 0.0, 1.001), 0.1).unwrap_err();
        assert!(matches!(err, AttitudeError::NotUnit { .. }));
        assert!(delta_c(&Vector3::new(0.0, 0.0, 1.0 + 1e-11), 0.1).is_ok());
    }

    #[test]
    fn propagate_half_turn_about_z() {
        let w = AngularVelocity::new(UnitVec3::z_axis(), PI);
        let q = propagate_quaternion(&Quaternion::identity(), &w, 1.0);
        assert!((q.x).abs() < 1e-15 && (q.y).abs() < 1e-15);
        assert!((q.z - 1.0).abs() < 1e-15 && q.w.abs() < 1e-15);
    }

    #[test]
    fn propagate_zero_rate_is_identity_map() {
        let q0 = Quaternion::new(0.1, -0.2, 0.3, 0.9).normalized();
        let w = AngularVelocity::new(UnitVec3::y_axis(), 0.0);
        assert_eq!(propagate_quaternion(&q0, &w, 123.0), q0);
    }

    #[test]
    fn compose_matches_matrix_product() {
        let a = Quaternion::new(0.1, 0.7, -0.2, 0.4).normalized();
        let b = Quaternion::new(-0.5, 0.1, 0.3, 0.8).normalized();
        let lhs = a.compose(&b).to_rotation_matrix();
        let rhs = a.to_rotation_matrix() * b.to_rotation_matrix();
        assert!(approx_mat(lhs.matrix(), rhs.matrix(), 1e-14));
        let via_matrix = Quaternion::from_vector4(&(a.left_matrix() * b.to_vector4()));
        assert!((via_matrix.to_vector4() - a.compose(&b).to_vector4()).norm() < 1e-15);
    }

    #[test]
    fn matrix_quaternion_round_trip() {
        for q in [
            Quaternion::new(0.9, 0.1, 0.1, 0.1),
            Quaternion::new(0.1, 0.9, 0.1, 0.1),
            Quaternion::new(0.1, 0.1, 0.9, 0.1),
            Quaternion::new(0.1, 0.2, 0.3, 0.9),
        ] {
            let q = q.normalized();
            let back = Quaternion::from_rotation_matrix(&q.to_rotation_matrix());
            assert!(back.angle_to(&q) < 1e-7, "{q} vs {back}");
        }
    }

    #[test]
    fn principal_angle_basics() {
        let c = Quaternion::new(0.3, 0.1, -0.2, 0.9)
            .normalized()
            .to_rotation_matrix();
        assert!(principal_angle(&c, &c) < 1e-7);
        let d = delta_c(&Vector3::z(), 0.3).unwrap();
        assert!((principal_angle(&RotationMatrix::identity(), &d) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn wahba_identity_attitude() {
        let r: Vec<UnitVec3> = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.6, 0.8]]
            .iter()
            .map(|a| UnitVec3::try_from(*a).unwrap())
            .collect();
        let sol = solve_wahba(&r, &r, &[1.0; 3]).unwrap();
        assert!(sol.quaternion.angle_to(&Quaternion::identity()) < 1e-7);
        assert!(sol.cost < 1e-20);
    }

    #[test]
    fn wahba_error_paths() {
        let a = UnitVec3::x_axis();
        assert!(matches!(
            solve_wahba(&[a], &[a], &[1.0]),
            Err(AttitudeError::InsufficientData { .. })
        ));
        assert!(matches!(
            solve_wahba(&[a, -a], &[a, -a], &[1.0, 1.0]),
            Err(AttitudeError::DegenerateGeometry)
        ));
        assert!(matches!(
            solve_wahba(&[a, UnitVec3::y_axis()], &[a], &[1.0, 1.0]),
            Err(AttitudeError::LengthMismatch { .. })
        ));
        assert!(matches!(
            solve_wahba(&[a, UnitVec3::y_axis()], &[a, UnitVec3::y_axis()], &[1.0, 0.0]),
            Err(AttitudeError::BadWeight)
        ));
    }
}
