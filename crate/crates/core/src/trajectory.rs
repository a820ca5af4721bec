//! Rest-to-rest cubic trajectories for end-effector position and orientation.
//!
//! Position follows `p_d(t) = a + b t + c t^2 + d t^3` per axis. Orientation
//! follows `R_d(t) = R_start exp(hat(w(t)))` where `w(t)` is a cubic per
//! component running from zero to `log(R_start^T R_f)`. Coefficients are in
//! absolute time.

use crate::kinematics::Pose;
use crate::proposal::GraspProposal;
use crate::so3::{exp_so3, grasp_orientation, log_so3, RotationMatrix, So3Error, Vec3};
use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

/// Maximum allowed residual of the 4x4 boundary-condition solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("invalid time window: t_f ({t_f}) must exceed t_i ({t_i})")]
    InvalidWindow { t_i: f64, t_f: f64 },
    #[error("boundary-condition solve failed (residual {0:e})")]
    IllConditioned(f64),
    #[error("orientation planning failed: {0}")]
    Rotation(#[from] So3Error),
}

/// Coefficients `(a, b, c, d)` of a scalar cubic in absolute time.
pub type Cubic = [f64; 4];

fn eval(c: &Cubic, t: f64) -> f64 {
    c[0] + t * (c[1] + t * (c[2] + t * c[3]))
}

fn eval_rate(c: &Cubic, t: f64) -> f64 {
    c[1] + t * (2.0 * c[2] + t * 3.0 * c[3])
}

/// Solves `A p = q` with `q = (x_i, x_f, 0, 0)` for a rest-to-rest cubic.
pub fn cubic_coeffs(t_i: f64, t_f: f64, x_i: f64, x_f: f64) -> Result<Cubic, TrajectoryError> {
    if !(t_f > t_i) {
        return Err(TrajectoryError::InvalidWindow { t_i, t_f });
    }
    let a = Matrix4::new(
        1.0, t_i, t_i * t_i, t_i.powi(3),
        1.0, t_f, t_f * t_f, t_f.powi(3),
        0.0, 1.0, 2.0 * t_i, 3.0 * t_i * t_i,
        0.0, 1.0, 2.0 * t_f, 3.0 * t_f * t_f,
    );
    let q = Vector4::new(x_i, x_f, 0.0, 0.0);
    let p = a
        .lu()
        .solve(&q)
        .ok_or(TrajectoryError::IllConditioned(f64::INFINITY))?;
    let residual = (a * p - q).amax();
    if !(residual < SOLVE_RESIDUAL_TOL) {
        return Err(TrajectoryError::IllConditioned(residual));
    }
    Ok([p[0], p[1], p[2], p[3]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubicTrajectory {
    pub t_i: f64,
    pub t_f: f64,
    /// One cubic per world axis.
    pub pos_coeffs: [Cubic; 3],
    /// One cubic per rotation-vector component, in the start frame.
    pub rot_coeffs: [Cubic; 3],
    pub r_start: RotationMatrix,
    pub p_start: Vec3,
    pub p_final: Vec3,
    pub r_final: RotationMatrix,
    pub w_final: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub p_d: Vec3,
    pub pdot_d: Vec3,
    pub r_d: RotationMatrix,
    /// Angular feedforward velocity in the world frame.
    pub w_ff: Vec3,
}

/// Plans from `start` to the top-down grasp `(target.x, target.y, grasp_z)`
/// with yaw `target.theta`.
pub fn plan(
    start: &Pose,
    target: &GraspProposal,
    grasp_z: f64,
    t_i: f64,
    t_f: f64,
) -> Result<CubicTrajectory, TrajectoryError> {
    if !(t_f > t_i) {
        return Err(TrajectoryError::InvalidWindow { t_i, t_f });
    }
    let p_final = Vec3::new(target.x, target.y, grasp_z);
    let r_final = grasp_orientation(target.theta);
    let w_final = log_so3(&(start.rotation.transpose() * r_final))?;
    let mut pos_coeffs = [[0.0; 4]; 3];
    let mut rot_coeffs = [[0.0; 4]; 3];
    for i in 0..3 {
        pos_coeffs[i] = cubic_coeffs(t_i, t_f, start.position[i], p_final[i])?;
        // log(I) = 0 at the start
        rot_coeffs[i] = cubic_coeffs(t_i, t_f, 0.0, w_final[i])?;
    }
    Ok(CubicTrajectory {
        t_i,
        t_f,
        pos_coeffs,
        rot_coeffs,
        r_start: start.rotation,
        p_start: start.position,
        p_final,
        r_final,
        w_final,
    })
}

impl CubicTrajectory {
    pub fn omega(&self, t: f64) -> Vec3 {
        let t = t.clamp(self.t_i, self.t_f);
        Vec3::from_fn(|i, _| eval(&self.rot_coeffs[i], t))
    }

    /// Samples the reference at `t`, clamped to `[t_i, t_f]`.
    ///
    /// All rotation-vector components share one normalized time profile, so
    /// `w(t)` and its derivative stay parallel and the world-frame angular
    /// velocity of `R_d` is exactly `R_start * dw/dt`.
    pub fn sample(&self, t: f64) -> TrajectorySample {
        let t = t.clamp(self.t_i, self.t_f);
        let p_d = Vec3::from_fn(|i, _| eval(&self.pos_coeffs[i], t));
        let pdot_d = Vec3::from_fn(|i, _| eval_rate(&self.pos_coeffs[i], t));
        let w = Vec3::from_fn(|i, _| eval(&self.rot_coeffs[i], t));
        let w_dot = Vec3::from_fn(|i, _| eval_rate(&self.rot_coeffs[i], t));
        TrajectorySample {
            t,
            p_d,
            pdot_d,
            r_d: self.r_start * exp_so3(&w),
            w_ff: self.r_start * w_dot,
        }
    }

    pub fn duration(&self) -> f64 {
        self.t_f - self.t_i
    }
}
