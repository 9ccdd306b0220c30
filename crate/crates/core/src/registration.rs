//! Pose correction from correspondences and the iterated registration loop.
//!
//! Correspondences live in the base frame of the current estimate, so the
//! base origin is the zero vector and the cross-covariance anchored at the
//! base reduces to `C = (1/n) Σ m_i s_iᵀ`. The rotation comes from the SVD
//! of `C`, the translation from the means: `Δt = m̄ − ΔR s̄`. Statistics of
//! several sensors share that anchor, which is what makes a weighted
//! average of them meaningful.

use alloc::vec::Vec;

use nalgebra::Rotation3;
use thiserror::Error;

use crate::bvh::Raycaster;
use crate::se3::Transform;
use crate::sensor::{Scan, SensorRig};
use crate::spc::{find_correspondences, CorrespondenceSet, SpcError, SpcParams};
use crate::timing::{PhaseTimings, Stopwatch};
use crate::{Mat3, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("{count} correspondences are too few for a correction")]
    TooFewCorrespondences { count: usize },
    #[error("cross-statistics contain non-finite values")]
    NonFinite,
    #[error("no statistics carry correspondences")]
    NoCorrespondences,
    #[error("invalid weights: {0}")]
    InvalidWeights(&'static str),
    #[error("{rigs} sensor rigs but {scans} scans")]
    RigScanMismatch { rigs: usize, scans: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Correspondence(#[from] SpcError),
}

/// Sufficient statistics of a correspondence set for the closed-form solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossStatistics {
    /// `(1/n) Σ m_i s_iᵀ`, anchored at the base origin.
    pub covariance: Mat3,
    pub mean_scan: Vec3,
    pub mean_map: Vec3,
    pub count: usize,
}

impl Default for CrossStatistics {
    fn default() -> Self {
        Self::zero()
    }
}

impl CrossStatistics {
    pub fn zero() -> Self {
        CrossStatistics {
            covariance: Mat3::zeros(),
            mean_scan: Vec3::zeros(),
            mean_map: Vec3::zeros(),
            count: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.covariance.iter().all(|v| v.is_finite())
            && self.mean_scan.iter().all(|v| v.is_finite())
            && self.mean_map.iter().all(|v| v.is_finite())
    }
}

/// Accumulates in correspondence order, so the result is bit-stable.
pub fn cross_statistics(corr: &CorrespondenceSet) -> CrossStatistics {
    let n = corr.len();
    if n == 0 {
        return CrossStatistics::zero();
    }
    let mut covariance = Mat3::zeros();
    let mut sum_scan = Vec3::zeros();
    let mut sum_map = Vec3::zeros();
    for (s, m) in corr.scan_points.iter().zip(&corr.map_points) {
        covariance += m * s.transpose();
        sum_scan += s;
        sum_map += m;
    }
    let inv = 1.0 / n as f64;
    CrossStatistics {
        covariance: covariance * inv,
        mean_scan: sum_scan * inv,
        mean_map: sum_map * inv,
        count: n,
    }
}

/// Weighted average of per-sensor statistics.
///
/// Without explicit weights each sensor counts in proportion to its
/// correspondences, `w_i = n_i / Σ n`, which makes the merge identical to
/// computing statistics over the concatenated sets. Explicit weights are
/// renormalized to sum to one over the sensors that have correspondences;
/// sensors with `n_i = 0` never contribute.
pub fn merge_statistics(
    stats: &[CrossStatistics],
    weights: Option<&[f64]>,
) -> Result<CrossStatistics, RegistrationError> {
    let total: usize = stats.iter().map(|s| s.count).sum();
    let effective: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != stats.len() {
                return Err(RegistrationError::InvalidWeights(
                    "one weight per statistic is required",
                ));
            }
            if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(RegistrationError::InvalidWeights(
                    "weights must be finite and non-negative",
                ));
            }
            stats
                .iter()
                .zip(w)
                .map(|(s, &x)| if s.count > 0 { x } else { 0.0 })
                .collect()
        }
        None => stats.iter().map(|s| s.count as f64).collect(),
    };
    let sum: f64 = effective.iter().sum();
    if total == 0 {
        return Err(RegistrationError::NoCorrespondences);
    }
    if !(sum > 0.0) {
        return Err(RegistrationError::InvalidWeights(
            "weights of sensors with correspondences sum to zero",
        ));
    }

    let mut merged = CrossStatistics::zero();
    for (s, w) in stats.iter().zip(&effective) {
        if *w == 0.0 {
            continue;
        }
        let w = w / sum;
        merged.covariance += s.covariance * w;
        merged.mean_scan += s.mean_scan * w;
        merged.mean_map += s.mean_map * w;
    }
    merged.count = total;
    Ok(merged)
}

/// Rigid correction `ΔT` mapping scan points onto map points.
///
/// `C = U Σ Vᵀ`, `ΔR = U diag(1, 1, d) Vᵀ` with `d = det(U Vᵀ)` flipping the
/// weakest axis when the plain product would be a reflection, and
/// `Δt = m̄ − ΔR s̄`.
pub fn solve_umeyama(stats: &CrossStatistics) -> Result<Transform, RegistrationError> {
    if stats.count < 3 {
        return Err(RegistrationError::TooFewCorrespondences { count: stats.count });
    }
    if !stats.is_finite() {
        return Err(RegistrationError::NonFinite);
    }
    let svd = stats.covariance.svd(true, true);
    let (Some(mut u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(RegistrationError::NonFinite);
    };
    if (u * v_t).determinant() < 0.0 {
        let weakest = svd.singular_values.imin();
        u.column_mut(weakest).neg_mut();
    }
    let rotation = u * v_t;
    if !rotation.iter().all(|v| v.is_finite()) {
        return Err(RegistrationError::NonFinite);
    }
    let translation = stats.mean_map - rotation * stats.mean_scan;
    Ok(Transform::from_rotation_translation(
        Rotation3::from_matrix_unchecked(rotation),
        translation,
    ))
}

/// Mean squared alignment error `(1/n) Σ ‖m_i − (ΔR s_i + Δt)‖²`.
pub fn objective(corr: &CorrespondenceSet, delta: &Transform) -> f64 {
    if corr.is_empty() {
        return 0.0;
    }
    let sum: f64 = corr
        .scan_points
        .iter()
        .zip(&corr.map_points)
        .map(|(s, m)| (m - delta.apply(s)).norm_squared())
        .sum();
    sum / corr.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicpParams {
    pub max_iterations: usize,
    /// Stop once `‖Δt‖` falls below this, meters (together with the rotation test).
    pub translation_epsilon: f64,
    /// Stop once the angle of `ΔR` falls below this, radians.
    pub rotation_epsilon: f64,
    /// Steps with fewer correspondences over all sensors are rejected.
    pub min_correspondences: usize,
    pub spc: SpcParams,
}

impl Default for MicpParams {
    fn default() -> Self {
        MicpParams {
            max_iterations: 50,
            translation_epsilon: 1e-4,
            rotation_epsilon: 1e-4,
            min_correspondences: 10,
            spc: SpcParams::default(),
        }
    }
}

impl MicpParams {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        if self.max_iterations < 1 {
            return Err(RegistrationError::InvalidParams("max_iterations must be at least 1"));
        }
        if !(self.translation_epsilon > 0.0) || !(self.rotation_epsilon > 0.0) {
            return Err(RegistrationError::InvalidParams(
                "convergence epsilons must be positive",
            ));
        }
        if self.min_correspondences < 3 {
            return Err(RegistrationError::InvalidParams(
                "min_correspondences must be at least 3",
            ));
        }
        self.spc.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// Correction applied in the base frame (identity when rejected).
    pub delta: Transform,
    /// Correspondences per rig, in rig order.
    pub correspondence_counts: Vec<usize>,
    pub correspondence_count: usize,
    /// Mean |projective distance| over all correspondences of the step.
    pub mean_abs_projective_distance: f64,
    pub timings: PhaseTimings,
    /// Too few correspondences; the pose was left unchanged.
    pub rejected: bool,
}

/// Fusion weights for `rigs`: overrides where set, the count-proportional
/// default elsewhere. `None` when no rig overrides.
fn rig_weights(rigs: &[SensorRig], stats: &[CrossStatistics]) -> Option<Vec<f64>> {
    if rigs.iter().all(|r| r.weight_override().is_none()) {
        return None;
    }
    let total: usize = stats.iter().map(|s| s.count).sum();
    let total = total.max(1) as f64;
    Some(
        rigs.iter()
            .zip(stats)
            .map(|(r, s)| r.weight_override().unwrap_or(s.count as f64 / total))
            .collect(),
    )
}

fn check_inputs(rigs: &[SensorRig], scans: &[Scan], params: &MicpParams) -> Result<(), RegistrationError> {
    if rigs.len() != scans.len() || rigs.is_empty() {
        return Err(RegistrationError::RigScanMismatch {
            rigs: rigs.len(),
            scans: scans.len(),
        });
    }
    params.validate()
}

/// One correction: correspondences per rig, statistics, merge, solve, and
/// `pose' = pose · ΔT`.
pub fn micp_step<R: Raycaster + Sync>(
    caster: &R,
    rigs: &[SensorRig],
    scans: &[Scan],
    pose: &Transform,
    params: &MicpParams,
) -> Result<(Transform, StepDiagnostics), RegistrationError> {
    check_inputs(rigs, scans, params)?;
    let mut timings = PhaseTimings::default();
    let mut stats = Vec::with_capacity(rigs.len());
    let mut counts = Vec::with_capacity(rigs.len());
    let mut abs_distance = 0.0;

    for (rig, scan) in rigs.iter().zip(scans) {
        let clock = Stopwatch::start();
        let corr = find_correspondences(caster, rig, scan, pose, &params.spc)?;
        timings.simulation += clock.elapsed();

        let clock = Stopwatch::start();
        abs_distance += corr.sum_abs_projective_distance();
        stats.push(cross_statistics(&corr));
        counts.push(corr.len());
        timings.reduction += clock.elapsed();
    }

    let total: usize = counts.iter().sum();
    let mut diag = StepDiagnostics {
        delta: Transform::identity(),
        correspondence_counts: counts,
        correspondence_count: total,
        mean_abs_projective_distance: if total > 0 { abs_distance / total as f64 } else { 0.0 },
        timings,
        rejected: false,
    };
    if total < params.min_correspondences {
        diag.rejected = true;
        return Ok((*pose, diag));
    }

    let clock = Stopwatch::start();
    let weights = rig_weights(rigs, &stats);
    let merged = merge_statistics(&stats, weights.as_deref());
    diag.timings.reduction += clock.elapsed();
    let merged = match merged {
        Ok(m) => m,
        Err(RegistrationError::InvalidWeights(_)) | Err(RegistrationError::NoCorrespondences) => {
            diag.rejected = true;
            return Ok((*pose, diag));
        }
        Err(e) => return Err(e),
    };

    let clock = Stopwatch::start();
    let delta = solve_umeyama(&merged)?;
    diag.timings.svd += clock.elapsed();

    diag.delta = delta;
    Ok((pose.compose(&delta).renormalized(), diag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicpResult {
    pub pose: Transform,
    pub iterations_run: usize,
    /// Mean |projective distance| at the final pose, meters.
    pub final_residual: f64,
    pub converged: bool,
    /// The loop stopped on a step without enough correspondences.
    pub rejected: bool,
    /// Correspondences found at the final pose.
    pub correspondence_count: usize,
    /// Sum over all iterations.
    pub phase_timings: PhaseTimings,
    pub iteration_timings: Vec<PhaseTimings>,
}

/// Mean |projective distance| and correspondence count at `pose`.
pub fn residual<R: Raycaster + Sync>(
    caster: &R,
    rigs: &[SensorRig],
    scans: &[Scan],
    pose: &Transform,
    spc: &SpcParams,
) -> Result<(f64, usize), RegistrationError> {
    let mut sum = 0.0;
    let mut count = 0;
    for (rig, scan) in rigs.iter().zip(scans) {
        let corr = find_correspondences(caster, rig, scan, pose, spc)?;
        sum += corr.sum_abs_projective_distance();
        count += corr.len();
    }
    Ok((if count > 0 { sum / count as f64 } else { 0.0 }, count))
}

/// Repeats [`micp_step`] until the correction is below both epsilons or the
/// iteration cap is reached. A rejected step ends the loop unconverged.
pub fn micp_converge<R: Raycaster + Sync>(
    caster: &R,
    rigs: &[SensorRig],
    scans: &[Scan],
    initial_pose: &Transform,
    params: &MicpParams,
) -> Result<MicpResult, RegistrationError> {
    check_inputs(rigs, scans, params)?;
    let mut pose = *initial_pose;
    let mut converged = false;
    let mut rejected = false;
    let mut iteration_timings = Vec::new();

    for _ in 0..params.max_iterations {
        let (next, diag) = micp_step(caster, rigs, scans, &pose, params)?;
        iteration_timings.push(diag.timings);
        if diag.rejected {
            rejected = true;
            break;
        }
        pose = next;
        if diag.delta.translation().norm() < params.translation_epsilon
            && diag.delta.rotation_angle() < params.rotation_epsilon
        {
            converged = true;
            break;
        }
    }

    let (final_residual, correspondence_count) = residual(caster, rigs, scans, &pose, &params.spc)?;
    let phase_timings = iteration_timings
        .iter()
        .fold(PhaseTimings::default(), |acc, t| acc + *t);
    Ok(MicpResult {
        pose,
        iterations_run: iteration_timings.len(),
        final_residual,
        converged,
        rejected,
        correspondence_count,
        phase_timings,
        iteration_timings,
    })
}
