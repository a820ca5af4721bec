//! Rotation-matrix algebra on SO(3).
//!
//! Conventions: matrices are right-handed, columns are the body axes expressed
//! in the world frame, and the world frame coincides with the arm base frame.
//! Rotation vectors are axis-angle vectors whose norm is the angle in radians.

use nalgebra::{Matrix3, Vector3};
use std::ops::Mul;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Below this angle the exp and log maps switch to their series expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Rotation angles closer than this to a half turn are rejected by [`log_so3`].
pub const ANTIPODE_MARGIN: f64 = 1e-6;

const SKEW_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum So3Error {
    #[error("matrix is not skew-symmetric (|M + M^T| = {0:e})")]
    NotSkew(f64),
    #[error("log near antipode (angle {0}); axis ill-conditioned by this formula")]
    NearAntipode(f64),
    #[error("matrix is not a rotation (orthonormality error {ortho:e}, det {det})")]
    NotRotation { ortho: f64, det: f64 },
}

/// A 3x3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix after checking `R^T R = I` and `det R = 1` to `tol`.
    pub fn from_matrix(m: Matrix3<f64>, tol: f64) -> Result<Self, So3Error> {
        let ortho = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        if !(ortho <= tol && (det - 1.0).abs() <= tol) {
            return Err(So3Error::NotRotation { ortho, det });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix without validation. Callers own the invariant.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Builds a rotation from row-major entries without validation.
    pub fn from_row_slice(rows: &[f64; 9]) -> Self {
        Self(Matrix3::from_row_slice(rows))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Row-major entries.
    pub fn to_row_array(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn column(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    /// Frobenius norm of `R^T R - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Rotation angle of `self^T other`, in [0, pi].
    pub fn angle_to(&self, other: &RotationMatrix) -> f64 {
        let rel = self.transpose() * *other;
        let c = ((rel.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        let s = vee_unchecked(&(rel.0 - rel.0.transpose())).norm() / 2.0;
        s.atan2(c)
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &RotationMatrix {
    type Output = Vec3;

    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Skew-symmetric matrix such that `hat(v) * u == v.cross(&u)`.
pub fn hat(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Rejects matrices with `|M + M^T| >= 1e-8`.
pub fn vee(m: &Matrix3<f64>) -> Result<Vec3, So3Error> {
    let asym = (m + m.transpose()).norm();
    if asym >= SKEW_TOL {
        return Err(So3Error::NotSkew(asym));
    }
    Ok(vee_unchecked(m))
}

fn vee_unchecked(m: &Matrix3<f64>) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues formula. Falls back to `I + W + W^2 / 2` for tiny angles.
pub fn exp_so3(w: &Vec3) -> RotationMatrix {
    let theta = w.norm();
    let k = hat(w);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        return RotationMatrix(Matrix3::identity() + k + k2 * 0.5);
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    RotationMatrix(Matrix3::identity() + k * a + k2 * b)
}

/// Logarithm map `w = (phi / (2 sin phi) (R - R^T))^vee`,
/// `phi = arccos((tr R - 1) / 2)`.
///
/// The formula is singular at a half turn, so angles within
/// [`ANTIPODE_MARGIN`] of pi are an error rather than a guess.
pub fn log_so3(r: &RotationMatrix) -> Result<Vec3, So3Error> {
    let m = r.matrix();
    let cos_phi = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let phi = cos_phi.acos();
    if phi > std::f64::consts::PI - ANTIPODE_MARGIN {
        return Err(So3Error::NearAntipode(phi));
    }
    let skew = vee_unchecked(&(m - m.transpose()));
    if phi < SMALL_ANGLE {
        return Ok(skew * 0.5);
    }
    Ok(skew * (phi / (2.0 * phi.sin())))
}

/// Rotation about the world z axis.
pub fn rot_z(theta: f64) -> RotationMatrix {
    let (s, c) = theta.sin_cos();
    RotationMatrix(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
}

/// End-effector orientation at zero yaw: gripper z axis pointing straight down.
pub fn downward_orientation() -> RotationMatrix {
    RotationMatrix(Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0))
}

/// Desired grasp orientation `R_c * R_z(theta_d)`.
pub fn grasp_orientation(theta_d: f64) -> RotationMatrix {
    downward_orientation() * rot_z(theta_d)
}

/// Orientation error `sum_i r_d,i x r_i` over the columns of the desired
/// and current rotations.
///
/// For a current orientation offset from the desired one by angle `phi`
/// about a unit axis `k` (in the world frame), this equals `2 sin(phi) k`.
pub fn rotation_error(desired: &RotationMatrix, current: &RotationMatrix) -> Vec3 {
    (0..3).fold(Vec3::zeros(), |acc, i| {
        acc + desired.column(i).cross(&current.column(i))
    })
}
