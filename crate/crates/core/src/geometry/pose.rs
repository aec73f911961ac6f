use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-9;

/// Rigid transform `p -> R p + t`.
///
/// Poses in this crate map points from the *target* camera frame into the
/// *source* camera frame, e.g. `pose_t_to_prev` takes a point expressed in
/// camera `t` coordinates to camera `t-1` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation given as an axis-angle vector in radians.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *Rotation3::new(axis_angle).matrix(),
            translation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .rotation
            .iter()
            .chain(self.translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidPose("non-finite entry".into()));
        }
        let rtr = self.rotation.transpose() * self.rotation;
        let err = (rtr - Matrix3::identity()).amax();
        if err > ORTHO_TOL {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {err:e})"
            )));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::InvalidPose(format!("det(R) = {det}, expected +1")));
        }
        Ok(())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidPose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }
}
