//! Temporal buffering and clustering of grasp proposals.
//!
//! Proposals from the last `window` seconds are grouped by single-linkage
//! under a distance threshold; the largest group's centroid and modal yaw
//! become the grasp.

use crate::proposal::GraspProposal;
use std::collections::BTreeMap;
use thiserror::Error;

/// Width of the yaw histogram bins used to take the mode.
pub const THETA_BIN: f64 = 5.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenoiseError {
    #[error("timestamp {got} is older than latest buffered timestamp {latest}")]
    OutOfOrder { latest: f64, got: f64 },
    #[error("no proposals")]
    NoProposals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalBuffer {
    proposals: Vec<GraspProposal>,
    pub window: f64,
    pub distance_threshold: f64,
}

impl Default for ProposalBuffer {
    fn default() -> Self {
        Self::new(10.0, 0.02)
    }
}

impl ProposalBuffer {
    pub fn new(window: f64, distance_threshold: f64) -> Self {
        Self {
            proposals: Vec::new(),
            window,
            distance_threshold,
        }
    }

    pub fn proposals(&self) -> &[GraspProposal] {
        &self.proposals
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    /// Appends a proposal. Timestamps must be non-decreasing.
    pub fn push(&mut self, proposal: GraspProposal) -> Result<(), DenoiseError> {
        if let Some(last) = self.proposals.last() {
            if proposal.t < last.t {
                return Err(DenoiseError::OutOfOrder {
                    latest: last.t,
                    got: proposal.t,
                });
            }
        }
        self.proposals.push(proposal);
        Ok(())
    }

    /// Keeps proposals with `now - t <= window`.
    pub fn window_filter(&mut self, now: f64) {
        let window = self.window;
        self.proposals.retain(|p| now - p.t <= window);
    }

    /// Filters to the window ending at `now`, clusters and selects.
    pub fn denoise(&mut self, now: f64) -> Result<GraspProposal, DenoiseError> {
        self.window_filter(now);
        select(&cluster(&self.proposals, self.distance_threshold))
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clusters: connected components of the graph joining
/// proposals whose targets are within `threshold` (inclusive).
///
/// Clusters are ordered by their first member's input index and members
/// keep input order.
pub fn cluster(proposals: &[GraspProposal], threshold: f64) -> Vec<Vec<GraspProposal>> {
    let n = proposals.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (proposals[i].x - proposals[j].x).hypot(proposals[i].y - proposals[j].y);
            if d <= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<GraspProposal>> = BTreeMap::new();
    for (i, p) in proposals.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(*p);
    }
    // roots are each component's smallest index, so map order is first-member order
    groups.into_values().collect()
}

fn max_t(c: &[GraspProposal]) -> f64 {
    c.iter().map(|p| p.t).fold(f64::NEG_INFINITY, f64::max)
}

/// Chooses the cluster with the most members (ties: latest member
/// timestamp, then first in order) and returns its centroid with the modal
/// yaw. The mode is taken over 5 degree bins; ties go to the bin holding the
/// smallest |theta|, and the reported yaw is the mean of the winning bin.
pub fn select(clusters: &[Vec<GraspProposal>]) -> Result<GraspProposal, DenoiseError> {
    let mut best: Option<&Vec<GraspProposal>> = None;
    for c in clusters.iter().filter(|c| !c.is_empty()) {
        best = match best {
            None => Some(c),
            Some(b) if c.len() > b.len() || (c.len() == b.len() && max_t(c) > max_t(b)) => Some(c),
            keep => keep,
        };
    }
    let winner = best.ok_or(DenoiseError::NoProposals)?;
    let n = winner.len() as f64;
    let x = winner.iter().map(|p| p.x).sum::<f64>() / n;
    let y = winner.iter().map(|p| p.y).sum::<f64>() / n;

    let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for p in winner {
        bins.entry((p.theta / THETA_BIN).floor() as i64)
            .or_default()
            .push(p.theta);
    }
    let min_abs = |v: &[f64]| v.iter().map(|t| t.abs()).fold(f64::INFINITY, f64::min);
    let modal = bins
        .values()
        .max_by(|a, b| {
            a.len()
                .cmp(&b.len())
                .then_with(|| min_abs(b).total_cmp(&min_abs(a)))
        })
        .expect("winner is nonempty");
    let theta = modal.iter().sum::<f64>() / modal.len() as f64;
    Ok(GraspProposal::new(x, y, theta, max_t(winner)))
}
