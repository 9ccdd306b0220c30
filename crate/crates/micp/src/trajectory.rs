//! Timestamped pose sequences, their text format, the mean translation
//! error between two of them, and a drifting odometry generator.

use std::fmt::Write as _;
use std::path::Path;

use micp_core::{Transform, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::serial::{read_text, write_text, FormatError};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("trajectory is empty")]
    Empty,
    #[error("timestamps must be finite and strictly increasing (sample {0})")]
    NotIncreasing(usize),
    #[error("estimate timestamp {0} lies outside the reference time span")]
    OutOfSpan(f64),
    #[error("noise parameters must be finite and non-negative")]
    InvalidNoise,
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<(f64, Transform)>,
}

impl Trajectory {
    pub fn new(samples: Vec<(f64, Transform)>) -> Result<Self, TrajectoryError> {
        if samples.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        for (i, (t, _)) in samples.iter().enumerate() {
            if !t.is_finite() || (i > 0 && *t <= samples[i - 1].0) {
                return Err(TrajectoryError::NotIncreasing(i));
            }
        }
        Ok(Trajectory { samples })
    }

    pub fn samples(&self) -> &[(f64, Transform)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|(t, _)| *t)
    }

    pub fn poses(&self) -> impl Iterator<Item = &Transform> + '_ {
        self.samples.iter().map(|(_, p)| p)
    }

    /// Translation at `t` by linear interpolation between neighbors.
    pub fn translation_at(&self, t: f64) -> Option<Vec3> {
        let first = self.samples[0].0;
        let last = self.samples[self.samples.len() - 1].0;
        if !(t >= first && t <= last) {
            return None;
        }
        let k = self.samples.partition_point(|(ts, _)| *ts <= t);
        if k == self.samples.len() {
            return Some(*self.samples[k - 1].1.translation());
        }
        let (t0, p0) = &self.samples[k - 1];
        let (t1, p1) = &self.samples[k];
        let a = (t - t0) / (t1 - t0);
        Some(p0.translation() * (1.0 - a) + p1.translation() * a)
    }

    /// Each sample transformed as `offset · pose`.
    pub fn transformed(&self, offset: &Transform) -> Trajectory {
        Trajectory {
            samples: self.samples.iter().map(|(t, p)| (*t, offset.compose(p))).collect(),
        }
    }

    /// Parses lines of `timestamp tx ty tz qx qy qz qw`. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, TrajectoryError> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| FormatError::Parse { line: line_no, msg };
            let values: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            let values = values.map_err(|_| err("non-numeric field".into()))?;
            let [t, x, y, z, qx, qy, qz, qw] = values[..] else {
                return Err(err(format!("expected 8 fields, found {}", values.len())).into());
            };
            let pose =
                Transform::from_quaternion(Vec3::new(x, y, z), [qx, qy, qz, qw]).map_err(|e| err(e.to_string()))?;
            if !t.is_finite() || !pose.is_finite() {
                return Err(err("non-finite value".into()).into());
            }
            if let Some((prev, _)) = samples.last() {
                if t <= *prev {
                    return Err(err("timestamps must be strictly increasing".into()).into());
                }
            }
            samples.push((t, pose));
        }
        Trajectory::new(samples)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, p) in &self.samples {
            let v = p.translation();
            let [qx, qy, qz, qw] = p.quaternion();
            writeln!(out, "{t} {} {} {} {qx} {qy} {qz} {qw}", v.x, v.y, v.z).unwrap();
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrajectoryError> {
        Trajectory::parse(&read_text(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrajectoryError> {
        Ok(write_text(path.as_ref(), &self.to_text())?)
    }
}

/// Mean Euclidean distance between each estimate translation and the
/// reference translation interpolated at the same timestamp.
pub fn trajectory_mean_error(estimate: &Trajectory, truth: &Trajectory) -> Result<f64, TrajectoryError> {
    let mut sum = 0.0;
    for (t, pose) in &estimate.samples {
        let reference = truth.translation_at(*t).ok_or(TrajectoryError::OutOfSpan(*t))?;
        sum += (pose.translation() - reference).norm();
    }
    Ok(sum / estimate.len() as f64)
}

/// Relative motion between consecutive samples, `T_{k-1}⁻¹ · T_k`.
pub fn increments(trajectory: &Trajectory) -> Vec<Transform> {
    trajectory
        .samples
        .windows(2)
        .map(|w| w[0].1.inverse().compose(&w[1].1))
        .collect()
}

/// Scales the translation and the rotation angle of a relative motion.
fn scale_increment(step: &Transform, translation_scale: f64, rotation_scale: f64) -> Transform {
    let angle = step.rotation_angle();
    let rotation = match step.rotation().axis() {
        Some(axis) if angle > 0.0 => Transform::from_axis_angle(axis.into_inner(), angle * rotation_scale),
        _ => Transform::identity(),
    };
    Transform::from_translation(step.translation() * translation_scale).compose(&rotation)
}

/// Per-step multiplicative noise source for dead reckoning.
#[derive(Debug, Clone)]
pub struct OdometryNoise {
    rng: ChaCha8Rng,
    translation: Normal<f64>,
    rotation: Normal<f64>,
}

impl OdometryNoise {
    /// `noise_per_meter` and `noise_per_rad` are the standard deviations of
    /// the relative error on each step's distance and turn angle.
    pub fn new(noise_per_meter: f64, noise_per_rad: f64, seed: u64) -> Result<Self, TrajectoryError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(noise_per_meter) || !ok(noise_per_rad) {
            return Err(TrajectoryError::InvalidNoise);
        }
        Ok(OdometryNoise {
            rng: ChaCha8Rng::seed_from_u64(seed),
            translation: Normal::new(0.0, noise_per_meter).map_err(|_| TrajectoryError::InvalidNoise)?,
            rotation: Normal::new(0.0, noise_per_rad).map_err(|_| TrajectoryError::InvalidNoise)?,
        })
    }

    /// Noisy version of a true relative motion. Both factors are drawn on
    /// every call, so the stream position depends only on the step count.
    pub fn perturb(&mut self, step: &Transform) -> Transform {
        let a = self.translation.sample(&mut self.rng);
        let b = self.rotation.sample(&mut self.rng);
        scale_increment(step, 1.0 + a, 1.0 + b)
    }
}

/// Dead-reckons the truth's relative motions with multiplicative Gaussian
/// errors on distance and turn angle, starting from the true first pose.
pub fn noisy_odometry(
    truth: &Trajectory,
    noise_per_meter: f64,
    noise_per_rad: f64,
    seed: u64,
) -> Result<Trajectory, TrajectoryError> {
    let mut noise = OdometryNoise::new(noise_per_meter, noise_per_rad, seed)?;
    let mut pose = truth.samples[0].1;
    let mut samples = vec![(truth.samples[0].0, pose)];
    for ((t, _), step) in truth.samples[1..].iter().zip(increments(truth)) {
        pose = pose.compose(&noise.perturb(&step)).renormalized();
        samples.push((*t, pose));
    }
    Trajectory::new(samples)
}

/// Closed rectangular drive on the plane `z`: straight legs sampled every
/// `step` meters and in-place 90° left turns split into `turn_steps`
/// samples, driven `laps` times. Timestamps advance by one second per
/// sample.
pub fn rectangle_loop(width: f64, height: f64, z: f64, step: f64, turn_steps: usize, laps: usize) -> Trajectory {
    let mut samples = Vec::new();
    let mut pose = Transform::from_xyz(-width / 2.0, -height / 2.0, z);
    samples.push((0.0, pose));
    for leg in 0..4 * laps.max(1) {
        let length = if leg % 2 == 0 { width } else { height };
        let n = (length / step).round().max(1.0) as usize;
        for _ in 0..n {
            pose = pose.compose(&Transform::from_xyz(length / n as f64, 0.0, 0.0));
            samples.push((samples.len() as f64, pose));
        }
        let turn = std::f64::consts::FRAC_PI_2 / turn_steps.max(1) as f64;
        for _ in 0..turn_steps.max(1) {
            pose = pose.compose(&Transform::rot_z(turn)).renormalized();
            samples.push((samples.len() as f64, pose));
        }
    }
    Trajectory::new(samples).expect("timestamps increase by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Trajectory {
        Trajectory::new(
            (0..n)
                .map(|i| (i as f64, Transform::from_xyz(i as f64, 0.0, 0.0)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_is_zero_and_shift_is_shift() {
        let truth = line(10);
        assert_eq!(trajectory_mean_error(&truth, &truth).unwrap(), 0.0);
        let shifted = Trajectory::new(
            truth
                .samples()
                .iter()
                .map(|(t, p)| (*t, Transform::from_xyz(0.1, 0.0, 0.0).compose(p)))
                .collect(),
        )
        .unwrap();
        assert!((trajectory_mean_error(&shifted, &truth).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn interpolates_between_samples() {
        let truth = line(3);
        let est = Trajectory::new(vec![
            (0.5, Transform::from_xyz(0.5, 0.0, 0.0)),
            (1.25, Transform::from_xyz(1.0, 0.0, 0.0)),
        ])
        .unwrap();
        assert!((trajectory_mean_error(&est, &truth).unwrap() - 0.125).abs() < 1e-12);
        let outside = Trajectory::new(vec![(5.0, Transform::identity())]).unwrap();
        assert!(matches!(
            trajectory_mean_error(&outside, &truth),
            Err(TrajectoryError::OutOfSpan(_))
        ));
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(Trajectory::new(vec![]), Err(TrajectoryError::Empty)));
        let dup = vec![(1.0, Transform::identity()), (1.0, Transform::identity())];
        assert!(matches!(Trajectory::new(dup), Err(TrajectoryError::NotIncreasing(1))));
    }

    #[test]
    fn text_round_trip_and_line_numbers() {
        let truth = rectangle_loop(4.0, 2.0, 0.0, 0.5, 3, 1);
        let back = Trajectory::parse(&truth.to_text()).unwrap();
        assert_eq!(back.len(), truth.len());
        for ((ta, a), (tb, b)) in truth.samples().iter().zip(back.samples()) {
            assert_eq!(ta, tb);
            let e = micp_core::pose_error(a, b);
            assert!(e.translation_error < 1e-12 && e.rotation_error < 1e-7);
        }
        let err = Trajectory::parse("# header\n0 0 0 0 0 0 0 1\n1 0 0 0 0 0 1\n").unwrap_err();
        assert!(
            matches!(err, TrajectoryError::Format(FormatError::Parse { line: 3, .. })),
            "{err}"
        );
        let err = Trajectory::parse("0 0 0 0 0 0 0 1\n0 1 0 0 0 0 0 1\n").unwrap_err();
        assert!(matches!(
            err,
            TrajectoryError::Format(FormatError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn zero_noise_reproduces_truth() {
        let truth = rectangle_loop(10.0, 6.0, 0.0, 1.0, 3, 1);
        let odom = noisy_odometry(&truth, 0.0, 0.0, 3).unwrap();
        assert!(trajectory_mean_error(&odom, &truth).unwrap() < 1e-9);
        let a = noisy_odometry(&truth, 0.05, 0.05, 3).unwrap();
        let b = noisy_odometry(&truth, 0.05, 0.05, 3).unwrap();
        assert_eq!(a, b);
        assert!(noisy_odometry(&truth, -0.1, 0.0, 0).is_err());
    }

    #[test]
    fn rectangle_closes() {
        let t = rectangle_loop(10.0, 6.0, 0.5, 1.0, 3, 1);
        let (first, last) = (t.samples()[0].1, t.samples()[t.len() - 1].1);
        let e = micp_core::pose_error(&first, &last);
        assert!(e.translation_error < 1e-9 && e.rotation_error < 1e-9);
        assert_eq!(t.len(), 1 + 10 + 6 + 10 + 6 + 12);
    }
}
