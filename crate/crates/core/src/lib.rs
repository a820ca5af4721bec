//! Grasp planning and workspace control for top-down grasps on clear
//! plastic bags.
//!
//! The pipeline runs from an RGB (and optionally depth) frame to joint
//! velocities on a 7-joint arm:
//!
//! * [`classical`] and [`learned`] propose grasps from images,
//! * [`denoise`] clusters a stream of proposals into one grasp,
//! * [`trajectory`] plans a smooth cubic motion to the grasp pose,
//! * [`kinematics`] tracks it with a workspace PD velocity controller,
//! * [`sim`] closes the loop on synthetic scenes with a kinematic plant.

pub mod classical;
pub mod config;
pub mod denoise;
pub mod image;
pub mod kinematics;
pub mod learned;
pub mod proposal;
pub mod sim;
pub mod so3;
pub mod trajectory;

pub use proposal::GraspProposal;
