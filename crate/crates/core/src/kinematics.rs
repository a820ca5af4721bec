//! Serial-arm kinematics and the workspace PD velocity law.
//!
//! Forward kinematics uses the product of exponentials over revolute joint
//! screws given in the base frame at the zero configuration. Jacobian rows
//! are ordered (linear; angular): the linear rows give the velocity of the
//! end-effector point, the angular rows the world-frame angular velocity.

use crate::so3::{exp_so3, rotation_error, RotationMatrix, Vec3};
use crate::trajectory::TrajectorySample;
use nalgebra::{Matrix3, SMatrix, SVector};
use std::path::Path;
use thiserror::Error;

pub const DOF: usize = 7;

pub type JointVector = SVector<f64, DOF>;
pub type Twist = SVector<f64, 6>;
pub type Jacobian = SMatrix<f64, 6, DOF>;
pub type JacobianPinv = SMatrix<f64, DOF, 6>;

/// Eigenvalue ratio of `J J^T + lambda^2 I` below which it counts as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("J J^T + lambda^2 I is singular (rcond {0:e}); use damping lambda > 0")]
    Singular(f64),
    #[error("arm file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("arm description must have exactly {DOF} joints, found {0}")]
    JointCount(usize),
    #[error("arm description is missing the zero-pose line")]
    MissingZeroPose,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub rotation: RotationMatrix,
}

/// A revolute joint: unit axis and a point on the axis, both in the base
/// frame at the zero configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub axis: Vec3,
    pub point: Vec3,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    pub zero_pose: Pose,
    pub joints: [Joint; DOF],
}

const SAWYER_LIKE: &str = include_str!("../data/sawyer_like.arm");

impl ArmModel {
    /// The bundled 7-joint arm, modeled loosely on a Sawyer with its
    /// zero configuration folded into a gripper-down ready pose.
    pub fn sawyer_like() -> Self {
        Self::parse(SAWYER_LIKE).expect("bundled arm description parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KinematicsError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| KinematicsError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    /// Parses the plain-text arm description:
    ///
    /// ```text
    /// # comment
    /// zero  px py pz  r11 r12 r13 r21 r22 r23 r31 r32 r33
    /// joint ax ay az  px py pz  lower upper
    /// ```
    pub fn parse(text: &str) -> Result<Self, KinematicsError> {
        let mut zero = None;
        let mut joints = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| KinematicsError::Parse { line: i + 1, msg };
            let mut tokens = line.split_whitespace();
            let kind = tokens.next().expect("nonempty line");
            let values = tokens
                .map(|t| t.parse::<f64>().map_err(|_| err(format!("not a number: {t}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(err("non-finite value".into()));
            }
            match kind {
                "zero" => {
                    if values.len() != 12 {
                        return Err(err(format!("zero line needs 12 values, got {}", values.len())));
                    }
                    let r = Matrix3::from_row_slice(&values[3..12]);
                    let rotation = RotationMatrix::from_matrix(r, 1e-9)
                        .map_err(|e| err(format!("zero-pose rotation: {e}")))?;
                    zero = Some(Pose {
                        position: Vec3::new(values[0], values[1], values[2]),
                        rotation,
                    });
                }
                "joint" => {
                    if values.len() != 8 {
                        return Err(err(format!("joint line needs 8 values, got {}", values.len())));
                    }
                    let axis = Vec3::new(values[0], values[1], values[2]);
                    if (axis.norm() - 1.0).abs() > 1e-9 {
                        return Err(err(format!("axis norm {} is not 1", axis.norm())));
                    }
                    if values[6] > values[7] {
                        return Err(err("lower limit exceeds upper limit".into()));
                    }
                    joints.push(Joint {
                        axis,
                        point: Vec3::new(values[3], values[4], values[5]),
                        lower: values[6],
                        upper: values[7],
                    });
                }
                other => return Err(err(format!("unknown record {other:?}"))),
            }
        }
        let zero_pose = zero.ok_or(KinematicsError::MissingZeroPose)?;
        let joints: [Joint; DOF] = joints
            .try_into()
            .map_err(|v: Vec<Joint>| KinematicsError::JointCount(v.len()))?;
        Ok(Self { zero_pose, joints })
    }

    pub fn clamp_to_limits(&self, q: &JointVector) -> JointVector {
        JointVector::from_fn(|i, _| q[i].clamp(self.joints[i].lower, self.joints[i].upper))
    }
}

/// Product-of-exponentials prefix: the rigid motion of joints `0..k` as
/// (rotation, translation), for every k in `0..=DOF`.
fn prefix_motions(arm: &ArmModel, q: &JointVector) -> Vec<(RotationMatrix, Vec3)> {
    let mut out = Vec::with_capacity(DOF + 1);
    let mut rot = RotationMatrix::identity();
    let mut trans = Vec3::zeros();
    out.push((rot, trans));
    for (j, joint) in arm.joints.iter().enumerate() {
        let r = exp_so3(&(joint.axis * q[j]));
        let t = joint.point - r * joint.point;
        trans += rot * t;
        rot = rot * r;
        out.push((rot, trans));
    }
    out
}

pub fn fk(arm: &ArmModel, q: &JointVector) -> Pose {
    let (rot, trans) = *prefix_motions(arm, q).last().expect("DOF + 1 entries");
    Pose {
        position: rot * arm.zero_pose.position + trans,
        rotation: rot * arm.zero_pose.rotation,
    }
}

/// Column j: the j-th joint's current axis `w` through point `r` gives
/// `[w x (p - r); w]` at the end-effector point `p`.
pub fn spatial_jacobian(arm: &ArmModel, q: &JointVector) -> Jacobian {
    let prefix = prefix_motions(arm, q);
    let (rot_all, trans_all) = prefix[DOF];
    let p = rot_all * arm.zero_pose.position + trans_all;
    let mut jac = Jacobian::zeros();
    for (j, joint) in arm.joints.iter().enumerate() {
        let (rot, trans) = prefix[j];
        let w = rot * joint.axis;
        let r = rot * joint.point + trans;
        let v = w.cross(&(p - r));
        jac.fixed_view_mut::<3, 1>(0, j).copy_from(&v);
        jac.fixed_view_mut::<3, 1>(3, j).copy_from(&w);
    }
    jac
}

/// Damped least-squares inverse `J^T (J J^T + lambda^2 I)^-1`. With
/// `lambda = 0` this is the Moore-Penrose pseudo-inverse of a full-rank J.
pub fn pinv(jac: &Jacobian, damping: f64) -> Result<JacobianPinv, KinematicsError> {
    let gram = jac * jac.transpose() + SMatrix::<f64, 6, 6>::identity() * (damping * damping);
    let eig = gram.symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if !(rcond > SINGULAR_RCOND) {
        return Err(KinematicsError::Singular(rcond));
    }
    let inv_diag = SMatrix::<f64, 6, 6>::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let gram_inv = eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    Ok(jac.transpose() * gram_inv)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorTwist {
    pub e_p: Vec3,
    pub e_o: Vec3,
}

impl ErrorTwist {
    pub fn zero() -> Self {
        Self {
            e_p: Vec3::zeros(),
            e_o: Vec3::zeros(),
        }
    }

    pub fn stacked(&self) -> Twist {
        Twist::new(
            self.e_p.x, self.e_p.y, self.e_p.z, self.e_o.x, self.e_o.y, self.e_o.z,
        )
    }
}

/// `e_p = p - p_d`, `e_o = sum_i r_d,i x r_i`.
pub fn compute_error(current: &Pose, desired: &TrajectorySample) -> ErrorTwist {
    ErrorTwist {
        e_p: current.position - desired.p_d,
        e_o: rotation_error(&desired.r_d, &current.rotation),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self { kp: 0.8, kd: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlConfig {
    pub gains: Gains,
    /// Damping for the least-squares inverse.
    pub damping: f64,
    /// Per-joint velocity clamp, rad/s.
    pub qdot_max: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            gains: Gains::default(),
            damping: 1e-3,
            qdot_max: 1.5,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |m: &str| Err(KinematicsError::InvalidParameter(m.to_string()));
        if !(self.gains.kp > 0.0) {
            return bad("kp must be positive");
        }
        if !(self.gains.kd >= 0.0) {
            return bad("kd must be non-negative");
        }
        if !(self.damping >= 0.0) {
            return bad("damping must be non-negative");
        }
        if !(self.qdot_max > 0.0) {
            return bad("qdot_max must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub qdot: JointVector,
    pub error: ErrorTwist,
    /// Workspace command `-Kp e - Kd de/dt + V_d` before projection.
    pub command: Twist,
}

/// One step of `qdot = J^+ (-Kp e - Kd de/dt + V_d)`, with `de/dt` from a
/// backward difference against `prev_error` (zero on the first step) and
/// the result clamped per joint to `+-qdot_max`.
pub fn control_step(
    arm: &ArmModel,
    q: &JointVector,
    sample: &TrajectorySample,
    config: &ControlConfig,
    prev_error: Option<&ErrorTwist>,
    dt: f64,
) -> Result<ControlOutput, KinematicsError> {
    if !(dt > 0.0) {
        return Err(KinematicsError::InvalidParameter("dt must be positive".into()));
    }
    let error = compute_error(&fk(arm, q), sample);
    let e = error.stacked();
    let e_dot = prev_error.map_or(Twist::zeros(), |prev| (e - prev.stacked()) / dt);
    let feedforward = Twist::new(
        sample.pdot_d.x,
        sample.pdot_d.y,
        sample.pdot_d.z,
        sample.w_ff.x,
        sample.w_ff.y,
        sample.w_ff.z,
    );
    let command = -config.gains.kp * e - config.gains.kd * e_dot + feedforward;
    let qdot = (pinv(&spatial_jacobian(arm, q), config.damping)? * command)
        .map(|v| v.clamp(-config.qdot_max, config.qdot_max));
    Ok(ControlOutput {
        qdot,
        error,
        command,
    })
}
