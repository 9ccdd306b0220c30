//! Rigid-body transforms in three dimensions.

use core::f64::consts::PI;
use core::ops::Mul;

use nalgebra::{Rotation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use thiserror::Error;

use crate::{math, Mat3, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Se3Error {
    #[error("invalid sampling bounds: max_translation={max_translation}, max_rotation={max_rotation}")]
    InvalidBounds { max_translation: f64, max_rotation: f64 },
    #[error("quaternion has zero or non-finite norm")]
    InvalidQuaternion,
    #[error("matrix is not a proper rotation")]
    NotARotation,
}

/// Rigid transform `p -> R p + t`. Translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    rotation: Rotation3<f64>,
    translation: Vec3,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Transform {
            rotation: Rotation3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_rotation_translation(rotation: Rotation3<f64>, translation: Vec3) -> Self {
        Transform { rotation, translation }
    }

    /// Builds a transform from a raw matrix, checking it is orthonormal with
    /// determinant +1 to within `1e-6`.
    pub fn from_matrix_translation(rotation: Mat3, translation: Vec3) -> Result<Self, Se3Error> {
        let orth = (rotation.transpose() * rotation - Mat3::identity()).abs().max();
        if !(orth < 1e-6) || math::abs(rotation.determinant() - 1.0) > 1e-6 {
            return Err(Se3Error::NotARotation);
        }
        Ok(Transform {
            rotation: Rotation3::from_matrix_unchecked(rotation),
            translation,
        })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Transform {
            rotation: Rotation3::identity(),
            translation,
        }
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Self {
        Self::from_translation(Vec3::new(x, y, z))
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let rotation = match Unit::try_new(axis, 1e-15) {
            Some(axis) => Rotation3::from_axis_angle(&axis, angle),
            None => Rotation3::identity(),
        };
        Transform {
            rotation,
            translation: Vec3::zeros(),
        }
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::z(), angle)
    }

    /// Quaternion in `(x, y, z, w)` order.
    pub fn from_quaternion(translation: Vec3, q: [f64; 4]) -> Result<Self, Se3Error> {
        let [x, y, z, w] = q;
        let norm = math::sqrt(x * x + y * y + z * z + w * w);
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Se3Error::InvalidQuaternion);
        }
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z));
        Ok(Transform {
            rotation: q.to_rotation_matrix(),
            translation,
        })
    }

    /// Quaternion in `(x, y, z, w)` order with `w >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&self.rotation);
        let c = q.coords;
        // coords are stored (i, j, k, w)
        if c[3] < 0.0 {
            [-c[0], -c[1], -c[2], -c[3]]
        } else {
            [c[0], c[1], c[2], c[3]]
        }
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> &Mat3 {
        self.rotation.matrix()
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Transform {
        let rotation = self.rotation.inverse();
        Transform {
            rotation,
            translation: -(rotation * self.translation),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Rotates a direction; translation is ignored.
    #[inline]
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Geodesic angle of the rotational part, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(self.rotation.matrix())
    }

    /// Re-projects the rotation onto SO(3). Long chains of compositions
    /// accumulate rounding; callers iterating many times use this.
    pub fn renormalized(&self) -> Transform {
        let mut rotation = self.rotation;
        rotation.renormalize();
        Transform {
            rotation,
            translation: self.translation,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.matrix().iter().all(|v| v.is_finite()) && self.translation.iter().all(|v| v.is_finite())
    }
}

impl Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        self.compose(&rhs)
    }
}

impl Mul<&Transform> for &Transform {
    type Output = Transform;

    fn mul(self, rhs: &Transform) -> Transform {
        self.compose(rhs)
    }
}

pub(crate) fn rotation_angle(r: &Mat3) -> f64 {
    // atan2 form stays accurate near 0 and π, unlike acos of the trace.
    let cos = 0.5 * (r.trace() - 1.0);
    let vx = r[(2, 1)] - r[(1, 2)];
    let vy = r[(0, 2)] - r[(2, 0)];
    let vz = r[(1, 0)] - r[(0, 1)];
    let sin = 0.5 * math::sqrt(vx * vx + vy * vy + vz * vz);
    math::atan2(sin, cos)
}

/// Translation and rotation discrepancy between two poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// Euclidean distance between translations, meters.
    pub translation_error: f64,
    /// Angle of `R_true⁻¹ R_est`, radians.
    pub rotation_error: f64,
}

pub fn pose_error(estimate: &Transform, truth: &Transform) -> PoseError {
    let translation_error = (estimate.translation - truth.translation).norm();
    let relative = truth.rotation.matrix().transpose() * estimate.rotation.matrix();
    PoseError {
        translation_error,
        rotation_error: rotation_angle(&relative),
    }
}

/// Samples a pose around `center`: translation uniform in a ball of radius
/// `max_translation`, rotation about a uniformly drawn axis with an angle
/// uniform in `[0, max_rotation]`. The offset is applied in the frame of
/// `center`, so `pose_error(result, center)` stays inside both bounds.
pub fn random_pose_in_ball(
    center: &Transform,
    max_translation: f64,
    max_rotation: f64,
    seed: u64,
) -> Result<Transform, Se3Error> {
    if !(max_translation >= 0.0) || !max_translation.is_finite() || !(0.0..=PI).contains(&max_rotation) {
        return Err(Se3Error::InvalidBounds {
            max_translation,
            max_rotation,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: [f64; 3] = UnitSphere.sample(&mut rng);
    let radius = max_translation * math::cbrt(rng.random::<f64>());
    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
    let angle = max_rotation * rng.random::<f64>();

    let offset = Transform {
        rotation: Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::from(axis)), angle),
        translation: Vec3::from(dir) * radius,
    };
    Ok(center.compose(&offset))
}
