//! Experiment drivers: the sphere convergence/runtime benchmark and the
//! odometry-correction drive.

use micp_core::mesh::generate_sphere;
use micp_core::sensor::simulate_scan;
use micp_core::{
    micp_converge, pose_error, random_pose_in_ball, BruteForce, Bvh, MicpParams, PhaseTimings, Raycaster,
    RegistrationError, Scan, SensorModel, SensorRig, Transform, TriangleMesh, Vec3,
};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::serial::{PoseJson, ResultJson};
use crate::trajectory::{increments, trajectory_mean_error, OdometryNoise, Trajectory, TrajectoryError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no face counts given")]
    NoFaceCounts,
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

fn setup<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Setup(e.to_string())
}

/// Per-pose seed derived from a run seed.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CasterKind {
    Bvh,
    BruteForce,
}

/// Random guesses around the center of a sphere, registered against a
/// scan taken at the center.
#[derive(Debug, Clone)]
pub struct SphereBenchmark {
    pub face_counts: Vec<usize>,
    pub poses: usize,
    pub model: SensorModel,
    pub radius: f64,
    pub max_translation: f64,
    pub max_rotation: f64,
    pub params: MicpParams,
    pub seed: u64,
    pub caster: CasterKind,
    /// Translation error below which a converged run counts as a success.
    pub success_tolerance: f64,
}

impl Default for SphereBenchmark {
    fn default() -> Self {
        SphereBenchmark {
            face_counts: vec![10_000, 100_000, 1_000_000],
            poses: 1000,
            model: SensorModel::vlp16(900),
            radius: 1.0,
            max_translation: 0.5,
            max_rotation: 0.3,
            params: MicpParams::default(),
            seed: 0,
            caster: CasterKind::Bvh,
            success_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PoseOutcome {
    pub index: usize,
    pub initial: PoseJson,
    pub result: ResultJson,
    pub translation_error: f64,
    pub rotation_error: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub target_faces: usize,
    pub face_count: usize,
    pub caster: CasterKind,
    pub poses: usize,
    pub iterations: usize,
    pub mean_iterations: f64,
    /// Converged with translation error within the success tolerance.
    pub convergence_rate: f64,
    pub max_translation_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_iteration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_iteration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p95_iteration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svd_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub outcomes: Vec<PoseOutcome>,
}

impl BenchmarkRow {
    /// Drops every wall-clock field, leaving only reproducible content.
    pub fn normalize_timing(&mut self) {
        self.mean_iteration_s = None;
        self.median_iteration_s = None;
        self.p95_iteration_s = None;
        self.simulation_fraction = None;
        self.reduction_fraction = None;
        self.svd_fraction = None;
        for o in &mut self.outcomes {
            o.result.phase_timings = None;
            o.result.iteration_timings = None;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    pub fn normalize_timing(&mut self) {
        self.rows.iter_mut().for_each(BenchmarkRow::normalize_timing);
    }

    pub fn without_outcomes(&self) -> BenchmarkReport {
        BenchmarkReport {
            rows: self
                .rows
                .iter()
                .map(|r| BenchmarkRow {
                    outcomes: Vec::new(),
                    ..r.clone()
                })
                .collect(),
        }
    }

    /// One line per row; phase fraction columns only with `phases`.
    pub fn to_csv(&self, phases: bool) -> String {
        let mut out = String::from(
            "target_faces,face_count,caster,poses,iterations,mean_iterations,convergence_rate,\
             mean_iteration_s,median_iteration_s,p95_iteration_s",
        );
        if phases {
            out.push_str(",simulation_fraction,reduction_fraction,svd_fraction");
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            let caster = match r.caster {
                CasterKind::Bvh => "bvh",
                CasterKind::BruteForce => "brute_force",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}",
                r.target_faces,
                r.face_count,
                caster,
                r.poses,
                r.iterations,
                r.mean_iterations,
                r.convergence_rate,
                opt(r.mean_iteration_s),
                opt(r.median_iteration_s),
                opt(r.p95_iteration_s)
            ));
            if phases {
                out.push_str(&format!(
                    ",{},{},{}",
                    opt(r.simulation_fraction),
                    opt(r.reduction_fraction),
                    opt(r.svd_fraction)
                ));
            }
            out.push('\n');
        }
        out
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

/// Registers `poses` random guesses on one mesh. Guesses are evaluated in
/// parallel; results come back in guess order.
pub fn run_sphere_row<R: Raycaster + Sync>(
    caster: &R,
    bench: &SphereBenchmark,
    target_faces: usize,
) -> Result<BenchmarkRow, HarnessError> {
    let center = Transform::identity();
    let rig = SensorRig::new(bench.model.clone(), Transform::identity()).map_err(setup)?;
    let scan = simulate_scan(caster, &bench.model, &center, 0.0, bench.seed).map_err(setup)?;
    let rigs = [rig];
    let scans = [scan];

    let outcomes: Result<Vec<(PoseOutcome, Vec<PhaseTimings>)>, HarnessError> = (0..bench.poses)
        .into_par_iter()
        .map(|i| {
            let initial = random_pose_in_ball(
                &center,
                bench.max_translation,
                bench.max_rotation,
                derive_seed(bench.seed, i),
            )
            .map_err(setup)?;
            let result = micp_converge(caster, &rigs, &scans, &initial, &bench.params)?;
            let e = pose_error(&result.pose, &center);
            let outcome = PoseOutcome {
                index: i,
                initial: (&initial).into(),
                result: ResultJson::new(&result, true),
                translation_error: e.translation_error,
                rotation_error: e.rotation_error,
                success: result.converged && e.translation_error <= bench.success_tolerance,
            };
            Ok((outcome, result.iteration_timings))
        })
        .collect();
    let outcomes = outcomes?;

    let mut per_iteration: Vec<f64> = Vec::new();
    let mut phases = PhaseTimings::default();
    for (_, timings) in &outcomes {
        for t in timings {
            per_iteration.push(t.total());
            phases += *t;
        }
    }
    per_iteration.sort_by(f64::total_cmp);
    let iterations = per_iteration.len();
    let n = outcomes.len().max(1) as f64;
    let fractions = phases.fractions();
    let successes = outcomes.iter().filter(|(o, _)| o.success).count();
    Ok(BenchmarkRow {
        target_faces,
        face_count: caster.face_count(),
        caster: bench.caster,
        poses: outcomes.len(),
        iterations,
        mean_iterations: iterations as f64 / n,
        convergence_rate: successes as f64 / n,
        max_translation_error: outcomes.iter().map(|(o, _)| o.translation_error).fold(0.0, f64::max),
        mean_iteration_s: Some(per_iteration.iter().sum::<f64>() / iterations.max(1) as f64),
        median_iteration_s: Some(percentile(&per_iteration, 0.5)),
        p95_iteration_s: Some(percentile(&per_iteration, 0.95)),
        simulation_fraction: Some(fractions.simulation),
        reduction_fraction: Some(fractions.reduction),
        svd_fraction: Some(fractions.svd),
        outcomes: outcomes.into_iter().map(|(o, _)| o).collect(),
    })
}

/// One row per face count: generate the sphere, scan from its center and
/// register every guess.
pub fn run_sphere_benchmark(bench: &SphereBenchmark) -> Result<BenchmarkReport, HarnessError> {
    if bench.face_counts.is_empty() {
        return Err(HarnessError::NoFaceCounts);
    }
    let mut rows = Vec::with_capacity(bench.face_counts.len());
    for &faces in &bench.face_counts {
        let mesh = generate_sphere(bench.radius, faces).map_err(setup)?;
        let row = match bench.caster {
            CasterKind::Bvh => run_sphere_row(&Bvh::build(&mesh), bench, faces)?,
            CasterKind::BruteForce => run_sphere_row(&BruteForce(&mesh), bench, faces)?,
        };
        rows.push(row);
    }
    Ok(BenchmarkReport { rows })
}

/// Odometry noise and scan noise of a correction drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveNoise {
    pub noise_per_meter: f64,
    pub noise_per_rad: f64,
    /// Range noise standard deviation of the simulated scans, meters.
    pub scan_sigma: f64,
}

#[derive(Debug, Clone)]
pub struct DriveOutcome {
    pub odometry: Trajectory,
    pub corrected: Trajectory,
    pub odometry_me: f64,
    pub micp_me: f64,
    /// Translation error of the last corrected pose.
    pub final_error: f64,
    pub rejected_steps: usize,
    pub results: Vec<ResultJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriveSummary {
    pub samples: usize,
    pub odometry_me: f64,
    pub micp_me: f64,
    pub final_error: f64,
    pub rejected_steps: usize,
    pub corrected: Vec<PoseJson>,
}

impl DriveOutcome {
    pub fn summary(&self) -> DriveSummary {
        DriveSummary {
            samples: self.corrected.len(),
            odometry_me: self.odometry_me,
            micp_me: self.micp_me,
            final_error: self.final_error,
            rejected_steps: self.rejected_steps,
            corrected: self.corrected.poses().map(Into::into).collect(),
        }
    }
}

/// Drives along `truth`, predicting each pose from the previous corrected
/// one with a noisy odometry increment, then correcting it against scans
/// simulated at the true pose. The pure odometry chain shares the same
/// noisy increments.
pub fn run_trajectory_experiment<R: Raycaster + Sync>(
    caster: &R,
    truth: &Trajectory,
    rigs: &[SensorRig],
    params: &MicpParams,
    noise: &DriveNoise,
    seed: u64,
) -> Result<DriveOutcome, HarnessError> {
    let mut odometry_noise = OdometryNoise::new(noise.noise_per_meter, noise.noise_per_rad, seed)?;
    let steps = increments(truth);
    let samples = truth.samples();

    let mut odom = samples[0].1;
    let mut estimate = samples[0].1;
    let mut odometry = Vec::with_capacity(samples.len());
    let mut corrected = Vec::with_capacity(samples.len());
    let mut results = Vec::with_capacity(samples.len());
    let mut rejected_steps = 0;

    for (k, (t, true_pose)) in samples.iter().enumerate() {
        if k > 0 {
            let step = odometry_noise.perturb(&steps[k - 1]);
            odom = odom.compose(&step).renormalized();
            estimate = estimate.compose(&step).renormalized();
        }
        let scans: Result<Vec<Scan>, _> = rigs
            .iter()
            .enumerate()
            .map(|(j, rig)| {
                let sensor_pose = true_pose.compose(rig.sensor_to_base());
                simulate_scan(
                    caster,
                    rig.model(),
                    &sensor_pose,
                    noise.scan_sigma,
                    derive_seed(seed, k * rigs.len() + j),
                )
            })
            .collect();
        let scans = scans.map_err(setup)?;
        let result = micp_converge(caster, rigs, &scans, &estimate, params)?;
        if result.rejected {
            rejected_steps += 1;
        } else {
            estimate = result.pose;
        }
        results.push(ResultJson::new(&result, false));
        odometry.push((*t, odom));
        corrected.push((*t, estimate));
    }

    let odometry = Trajectory::new(odometry)?;
    let corrected = Trajectory::new(corrected)?;
    let last = samples.len() - 1;
    Ok(DriveOutcome {
        odometry_me: trajectory_mean_error(&odometry, truth)?,
        micp_me: trajectory_mean_error(&corrected, truth)?,
        final_error: (corrected.samples()[last].1.translation() - samples[last].1.translation()).norm(),
        odometry,
        corrected,
        rejected_steps,
        results,
    })
}

/// Virtual wheel-contact sensor: one downward ray from each wheel center,
/// given in the base frame, measuring the wheel radius.
pub fn wheel_sensor(wheel_centers: &[Vec3], wheel_radius: f64) -> Result<(SensorRig, Scan), HarnessError> {
    let model = SensorModel::OnDn {
        origins: wheel_centers.to_vec(),
        directions: vec![-Vec3::z(); wheel_centers.len()],
        range_min: 0.0,
        range_max: 4.0 * wheel_radius,
    };
    let scan = Scan::new(&model, vec![wheel_radius; wheel_centers.len()]).map_err(setup)?;
    let rig = SensorRig::new(model, Transform::identity()).map_err(setup)?;
    Ok((rig, scan))
}

/// Box room mesh with optional pillars, for drives and stationary tests.
pub fn pillar_room(extents: Vec3, pillars: &[(f64, f64)], pillar_size: f64) -> Result<TriangleMesh, HarnessError> {
    let obstacles: Vec<(Vec3, Vec3)> = pillars
        .iter()
        .map(|&(x, y)| (Vec3::new(x, y, 0.0), Vec3::new(pillar_size, pillar_size, extents.z)))
        .collect();
    micp_core::mesh::generate_room_world(&[(Vec3::zeros(), extents)], &obstacles).map_err(setup)
}
