//! Grasp proposals and their JSON-lines wire format.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::BufRead;
use thiserror::Error;

/// Candidate top-down grasp: workspace target (meters), gripper yaw about
/// the world z axis (radians, in `(-pi/2, pi/2]`) and a timestamp (seconds).
///
/// Serialized as one JSON object per line: `{"x":..,"y":..,"theta":..,"t":..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspProposal {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub t: f64,
}

#[derive(Debug, Error)]
pub enum ProposalError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: non-finite field")]
    NonFinite { line: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl GraspProposal {
    pub fn new(x: f64, y: f64, theta: f64, t: f64) -> Self {
        Self { x, y, theta, t }
    }

    pub fn target(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() && self.t.is_finite()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

/// Maps an angle onto `(-pi/2, pi/2]`. A parallel-jaw grasp is unchanged by
/// a half turn, so angles are taken modulo pi.
pub fn wrap_grasp_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(PI);
    if a > FRAC_PI_2 {
        a -= PI;
    }
    a
}

/// Parses JSON-lines proposals, skipping blank lines.
pub fn read_proposals(reader: impl BufRead) -> Result<Vec<GraspProposal>, ProposalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: GraspProposal =
            serde_json::from_str(&line).map_err(|source| ProposalError::Json {
                line: i + 1,
                source,
            })?;
        if !p.is_finite() {
            return Err(ProposalError::NonFinite { line: i + 1 });
        }
        out.push(p);
    }
    Ok(out)
}
