//! Hierarchical social navigation.
//!
//! A Dijkstra global planner feeds a learned local planner and velocity
//! controller that fuse plan, lidar, odometry and pedestrian-history features
//! with soft attention. The crate also carries everything needed to train and
//! measure that stack: a 2D simulator with social-forces pedestrians, a
//! privileged scripted expert, two concatenation baselines, behavioral-cloning
//! training in three stages, and the evaluation metrics.

// Validation writes `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod config;
pub mod eval;
pub mod expert;
pub mod global_planner;
pub mod nn;
pub mod par;
pub mod pedestrians;
pub mod pipeline;
pub mod policy;
pub mod training;
pub mod worldsim;
