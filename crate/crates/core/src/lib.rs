//! Learning trotting, turning and side-stepping gaits for a small
//! quadruped with a linear policy over spline foot trajectories, trained by
//! Augmented Random Search.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ars;
pub mod cli;
pub mod config;
pub mod env;
pub mod gaits;
pub mod kinematics;
pub mod policy;
pub mod trajectory;
