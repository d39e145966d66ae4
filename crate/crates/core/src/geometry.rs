//! Rigid-body geometry on SE(3).
//!
//! Poses follow the column-vector convention: `a.compose(&b)` is the matrix
//! product `a·b`, i.e. the transform that applies `b` first and then `a`.
//! A pose maps points from its child frame into its parent frame, so a sensor
//! pose in the world maps sensor-frame points to world coordinates.
//!
//! Tangent vectors ([`Twist`]) are ordered rotation first: `[ω; v]`.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Matrix6, Point3, Rotation3, UnitQuaternion, Vector3, Vector6};

/// Element of se(3), `[ωx, ωy, ωz, vx, vy, vz]` (radians, meters).
pub type Twist = Vector6<f64>;

const SMALL_ANGLE: f64 = 1e-6;
const SERIES_ANGLE: f64 = 0.05;

/// A rigid transform with an optional timestamp (seconds).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub stamp: Option<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            stamp: None,
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
            stamp: None,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::new(x, y, z))
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    /// Rotation from roll/pitch/yaw in radians (applied as `Rz(yaw)·Ry(pitch)·Rx(roll)`).
    pub fn from_rpy(translation: Vector3<f64>, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(UnitQuaternion::from_euler_angles(roll, pitch, yaw), translation)
    }

    pub fn with_stamp(mut self, stamp: f64) -> Self {
        self.stamp = Some(stamp);
        self
    }

    /// Builds a pose from a homogeneous matrix, re-orthonormalizing the rotation block.
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix(&r));
        Self::new(rotation, m.fixed_view::<3, 1>(0, 3).into_owned())
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.to_rotation_matrix().matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    /// `self · other`: applies `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: renormalize(self.rotation * other.rotation),
            translation: self.rotation * other.translation + self.translation,
            stamp: other.stamp.or(self.stamp),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
            stamp: self.stamp,
        }
    }

    /// `self⁻¹ · other`, the motion from `self` to `other`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    /// `delta · p · delta⁻¹`: the motion `p` re-expressed in the frame related by `delta`.
    pub fn conjugate(delta: &Pose, p: &Pose) -> Pose {
        let mut out = delta.compose(p).compose(&delta.inverse());
        out.stamp = p.stamp;
        out
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn transform_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.transform_point(p)).collect(),
            intensity: cloud.intensity.clone(),
        }
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let q = canonical(self.rotation);
        2.0 * q.imag().norm().atan2(q.w)
    }

    /// The same pose with a non-negative quaternion scalar part.
    pub fn canonical(&self) -> Pose {
        Pose {
            rotation: canonical(self.rotation),
            ..*self
        }
    }

    pub fn exp(xi: &Twist) -> Pose {
        let omega = xi.fixed_rows::<3>(0).into_owned();
        let v = xi.fixed_rows::<3>(3).into_owned();
        Pose::new(so3_exp(&omega), so3_left_jacobian(&omega) * v)
    }

    pub fn log(&self) -> Twist {
        let omega = so3_log(&self.rotation);
        let v = so3_left_jacobian_inv(&omega) * self.translation;
        let mut out = Twist::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&omega);
        out.fixed_rows_mut::<3>(3).copy_from(&v);
        out
    }

    /// Adjoint in `[ω; v]` ordering: `exp(Ad·ξ) = T·exp(ξ)·T⁻¹`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation_matrix();
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(skew(&self.translation) * r));
        ad
    }

    /// Translation distance and rotation angle between two poses.
    pub fn distance_to(&self, other: &Pose) -> (f64, f64) {
        let d = self.between(other);
        (d.translation.norm(), d.angle())
    }

    /// Interpolates with linear translation and spherical rotation, `s ∈ [0, 1]`.
    pub fn interpolate(&self, other: &Pose, s: f64) -> Pose {
        let q0 = self.rotation;
        let mut q1 = other.rotation;
        if q0.coords.dot(&q1.coords) < 0.0 {
            q1 = UnitQuaternion::new_unchecked(-q1.into_inner());
        }
        let rotation = q0.try_slerp(&q1, s, 1e-12).unwrap_or(q0);
        Pose::new(
            rotation,
            self.translation + (other.translation - self.translation) * s,
        )
    }

    pub fn position(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a Pose> for &'a Pose {
    type Output = Pose;
    fn mul(self, rhs: &'a Pose) -> Pose {
        self.compose(rhs)
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn so3_exp(omega: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta = omega.norm();
    if theta < SMALL_ANGLE {
        let half = omega * 0.5;
        return UnitQuaternion::new_normalize(nalgebra::Quaternion::new(1.0, half.x, half.y, half.z));
    }
    UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(omega / theta), theta)
}

pub fn so3_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = canonical(*q);
    let imag = q.imag();
    let n = imag.norm();
    if n < SMALL_ANGLE {
        // first order; w ≈ 1
        return imag * (2.0 / q.w);
    }
    let theta = 2.0 * n.atan2(q.w);
    imag * (theta / n)
}

/// Left Jacobian of SO(3); also the `V` matrix of the SE(3) exponential.
pub fn so3_left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = skew(omega);
    let (a, b) = if theta < SERIES_ANGLE {
        (
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
            1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0,
        )
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() + w * a + w * w * b
}

pub fn so3_left_jacobian_inv(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = skew(omega);
    let c = if theta < SERIES_ANGLE {
        1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0
    } else {
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / theta2
    };
    Matrix3::identity() - w * 0.5 + w * w * c
}

// Coupling block of the SE(3) left Jacobian.
fn se3_q(omega: &Vector3<f64>, v: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let (c1, c2, c3) = if theta < SERIES_ANGLE {
        let t4 = theta2 * theta2;
        let c1 = 1.0 / 6.0 - theta2 / 120.0 + t4 / 5040.0;
        let c2 = 1.0 / 24.0 - theta2 / 720.0 + t4 / 40320.0;
        let d = -1.0 / 120.0 + theta2 / 5040.0 - t4 / 362880.0;
        (c1, c2, 0.5 * (c2 + 3.0 * d))
    } else {
        let (s, c) = theta.sin_cos();
        let t3 = theta2 * theta;
        let t4 = theta2 * theta2;
        let c1 = (theta - s) / t3;
        let c2 = (0.5 * theta2 + c - 1.0) / t4;
        let d = (theta - s - t3 / 6.0) / (t4 * theta);
        (c1, c2, 0.5 * (c2 + 3.0 * d))
    };
    let p = skew(omega);
    let r = skew(v);
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    r * 0.5 + (pr + rp + prp) * c1 + (p * pr + rp * p - prp * 3.0) * c2 + (prp * p + p * prp) * c3
}

/// Left Jacobian of SE(3) in `[ω; v]` ordering.
pub fn se3_left_jacobian(xi: &Twist) -> Matrix6<f64> {
    let omega = xi.fixed_rows::<3>(0).into_owned();
    let v = xi.fixed_rows::<3>(3).into_owned();
    let j = so3_left_jacobian(&omega);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&se3_q(&omega, &v));
    out
}

/// Inverse of the right Jacobian of SE(3): `log(exp(ξ)·exp(δ)) ≈ ξ + J_r⁻¹(ξ)·δ`.
pub fn se3_right_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    let neg = -xi;
    let omega = neg.fixed_rows::<3>(0).into_owned();
    let v = neg.fixed_rows::<3>(3).into_owned();
    let j_inv = so3_left_jacobian_inv(&omega);
    let q = se3_q(&omega, &v);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j_inv);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j_inv);
    out.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(-(j_inv * q * j_inv)));
    out
}

/// Least-squares rigid transform `T` minimizing `Σ |T·src_i − dst_i|²`
/// (Horn's closed-form quaternion solution).
///
/// Returns `None` for empty or mismatched inputs. Degenerate configurations
/// (collinear points) still yield a transform, with the rotation about the
/// common line left unconstrained.
pub fn rigid_align(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Option<Pose> {
    if src.is_empty() || src.len() != dst.len() {
        return None;
    }
    let n = src.len() as f64;
    let cs = src.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let cd = dst.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let mut m = Matrix3::zeros();
    for (a, b) in src.iter().zip(dst) {
        m += (a.coords - cs) * (b.coords - cd).transpose();
    }
    let (sxx, sxy, sxz) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let (syx, syy, syz) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let (szx, szy, szz) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    #[rustfmt::skip]
    let k = Matrix4::new(
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,       -sxx + syy - szz,  syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,       -sxx - syy + szz,
    );
    let eig = k.symmetric_eigen();
    let q = eig.eigenvectors.column(eig.eigenvalues.imax());
    if !q.iter().all(|v| v.is_finite()) {
        return None;
    }
    let rotation = UnitQuaternion::new_normalize(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    Some(Pose::new(rotation, cd - rotation * cs))
}

/// A set of 3D points with optional per-point intensity in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    intensity: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<Point3<f64>>) -> Self {
        debug_assert!(points.iter().all(|p| p.coords.iter().all(|c| c.is_finite())));
        Self {
            points,
            intensity: None,
        }
    }

    /// Fails if lengths differ, a coordinate is not finite, or an intensity is outside `[0, 1]`.
    pub fn with_intensity(points: Vec<Point3<f64>>, intensity: Vec<f64>) -> crate::Result<Self> {
        if points.len() != intensity.len() {
            return Err(crate::Error::Input(format!(
                "{} points but {} intensities",
                points.len(),
                intensity.len()
            )));
        }
        if intensity.iter().any(|i| !(0.0..=1.0).contains(i)) {
            return Err(crate::Error::Input("intensity outside [0, 1]".into()));
        }
        if points.iter().any(|p| p.coords.iter().any(|c| !c.is_finite())) {
            return Err(crate::Error::Input("non-finite point coordinate".into()));
        }
        Ok(Self {
            points,
            intensity: Some(intensity),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn intensity(&self) -> Option<&[f64]> {
        self.intensity.as_deref()
    }

    /// Appends a point. Clouds carrying intensities record `intensity` (default 1).
    pub fn push(&mut self, p: Point3<f64>, intensity: Option<f64>) {
        if self.points.is_empty() && self.intensity.is_none() && intensity.is_some() {
            self.intensity = Some(Vec::new());
        }
        self.points.push(p);
        if let Some(values) = self.intensity.as_mut() {
            values.push(intensity.unwrap_or(1.0).clamp(0.0, 1.0));
        }
    }

    /// Appends all points of `other`; intensities are dropped unless both clouds carry them.
    pub fn extend(&mut self, other: &PointCloud) {
        let keep = match (&self.intensity, &other.intensity) {
            (Some(_), Some(_)) => true,
            (None, Some(_)) if self.points.is_empty() => {
                self.intensity = Some(Vec::new());
                true
            }
            _ => false,
        };
        self.points.extend_from_slice(&other.points);
        if keep {
            if let (Some(a), Some(b)) = (self.intensity.as_mut(), other.intensity.as_ref()) {
                a.extend_from_slice(b);
            }
        } else {
            self.intensity = None;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point3<f64>> {
        self.points.iter()
    }

    /// Keeps the points at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            intensity: self
                .intensity
                .as_ref()
                .map(|v| indices.iter().map(|&i| v[i]).collect()),
        }
    }
}

impl FromIterator<Point3<f64>> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point3<f64>>>(iter: I) -> Self {
        Self::from_points(iter.into_iter().collect())
    }
}

/// One sonar frame: returns in the sensor frame at a timestamp.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scan {
    pub stamp: f64,
    pub cloud: PointCloud,
}

impl Scan {
    pub fn new(stamp: f64, cloud: PointCloud) -> Self {
        Self { stamp, cloud }
    }
}


#[cfg(test)]
pub(crate) mod test_util {
    use super::Pose;

    pub fn pose_close(a: &Pose, b: &Pose, tol: f64) -> bool {
        let (dt, dr) = a.distance_to(b);
        dt <= tol && dr <= tol
    }
}
