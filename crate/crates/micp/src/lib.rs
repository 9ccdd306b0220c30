//! Mesh ICP localization toolkit: mesh and scan file formats, experiment
//! harness and the pieces behind the `micp` command-line tool.
//!
//! The algorithms live in [`micp_core`], which is re-exported as `core`.

pub use micp_core as core;

pub mod config;
pub mod harness;
pub mod mesh_io;
pub mod serial;
pub mod trajectory;

pub use harness::{run_sphere_benchmark, run_trajectory_experiment, BenchmarkReport, SphereBenchmark};
pub use mesh_io::{load_mesh, save_mesh, MeshFormat};
pub use trajectory::{noisy_odometry, trajectory_mean_error, Trajectory};
