//! Mesh ICP localization core.
//!
//! Registers range-sensor scans directly against triangle mesh maps. Each
//! correction step casts the sensor's rays from the current pose estimate
//! into the map, projects every real measurement onto the plane of its
//! simulated hit and solves for the rigid correction with an SVD of the
//! base-anchored cross-covariance. Statistics from several sensors are
//! merged before the solve, so heterogeneous sensors correct one pose.
//!
//! The crate is `no_std` compatible (it needs `alloc`). The default `std`
//! feature adds data-parallel raycasting through rayon and wall-clock phase
//! timings; without it everything runs sequentially and timings read zero.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod math;
mod par;

pub mod bvh;
pub mod mesh;
pub mod registration;
pub mod se3;
pub mod sensor;
pub mod spc;
pub mod timing;

pub use bvh::{BruteForce, Bvh, Hit, Ray, Raycaster, RAY_EPSILON};
pub use mesh::{MeshError, MeshStats, TriangleMesh};
pub use registration::{
    cross_statistics, merge_statistics, micp_converge, micp_step, solve_umeyama, CrossStatistics, MicpParams,
    MicpResult, RegistrationError, StepDiagnostics,
};
pub use se3::{pose_error, random_pose_in_ball, PoseError, Se3Error, Transform};
pub use sensor::{Scan, SensorError, SensorModel, SensorRig};
pub use spc::{find_correspondences, CorrespondenceSet, SpcError, SpcParams};
pub use timing::PhaseTimings;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
