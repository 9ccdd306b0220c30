//! Range sensor models, scans and scan simulation.
//!
//! Four ray layouts are supported:
//!
//! * [`SensorModel::Spherical`]: rotating LiDAR grid. Azimuth `theta` turns
//!   about +z, elevation `phi` is measured from the xy-plane, forward is +x.
//! * [`SensorModel::Pinhole`]: depth camera looking down +z. Ranges are
//!   measured along each pixel ray, not as z-depth.
//! * [`SensorModel::O1Dn`]: one origin, arbitrary directions.
//! * [`SensorModel::OnDn`]: arbitrary origin/direction pairs, e.g. virtual
//!   sensors scanning from wheel centers to the ground.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::bvh::{Ray, Raycaster};
use crate::se3::Transform;
use crate::{math, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("invalid sensor model: {0}")]
    InvalidModel(&'static str),
    #[error("scan has {got} ranges but the model has {expected} rays")]
    LengthMismatch { expected: usize, got: usize },
    #[error("noise sigma must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
    #[error("weight override must be finite and non-negative, got {0}")]
    InvalidWeight(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorModel {
    Spherical {
        theta_min: f64,
        theta_max: f64,
        n_horizontal: usize,
        phi_min: f64,
        phi_max: f64,
        n_vertical: usize,
        range_min: f64,
        range_max: f64,
    },
    Pinhole {
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        range_min: f64,
        range_max: f64,
    },
    O1Dn {
        origin: Vec3,
        directions: Vec<Vec3>,
        range_min: f64,
        range_max: f64,
    },
    OnDn {
        origins: Vec<Vec3>,
        directions: Vec<Vec3>,
        range_min: f64,
        range_max: f64,
    },
}

const UNIT_TOLERANCE: f64 = 1e-9;

fn is_full_turn(span: f64) -> bool {
    math::abs(span - 2.0 * PI) < 1e-9
}

/// `n` angles over `[min, max]`, endpoints included unless the span is a full turn.
fn angles(min: f64, max: f64, n: usize) -> impl Iterator<Item = f64> {
    let span = max - min;
    let step = if n <= 1 {
        0.0
    } else if is_full_turn(span) {
        span / n as f64
    } else {
        span / (n - 1) as f64
    };
    (0..n).map(move |i| min + step * i as f64)
}

impl SensorModel {
    /// Velodyne VLP-16 style layout: 16 rings over ±15° elevation and a
    /// full azimuth sweep with `n_horizontal` columns.
    pub fn vlp16(n_horizontal: usize) -> Self {
        SensorModel::Spherical {
            theta_min: -PI,
            theta_max: PI,
            n_horizontal,
            phi_min: -15f64.to_radians(),
            phi_max: 15f64.to_radians(),
            n_vertical: 16,
            range_min: 0.05,
            range_max: 130.0,
        }
    }

    /// Single-ring planar scanner with a full azimuth sweep.
    pub fn planar_lidar(n_horizontal: usize, range_max: f64) -> Self {
        SensorModel::Spherical {
            theta_min: -PI,
            theta_max: PI,
            n_horizontal,
            phi_min: 0.0,
            phi_max: 0.0,
            n_vertical: 1,
            range_min: 0.05,
            range_max,
        }
    }

    pub fn range_bounds(&self) -> (f64, f64) {
        match self {
            SensorModel::Spherical {
                range_min, range_max, ..
            }
            | SensorModel::Pinhole {
                range_min, range_max, ..
            }
            | SensorModel::O1Dn {
                range_min, range_max, ..
            }
            | SensorModel::OnDn {
                range_min, range_max, ..
            } => (*range_min, *range_max),
        }
    }

    pub fn ray_count(&self) -> usize {
        match self {
            SensorModel::Spherical {
                n_horizontal,
                n_vertical,
                ..
            } => n_horizontal * n_vertical,
            SensorModel::Pinhole { width, height, .. } => width * height,
            SensorModel::O1Dn { directions, .. } | SensorModel::OnDn { directions, .. } => directions.len(),
        }
    }

    /// A range is valid when it is finite and inside `[range_min, range_max]`.
    #[inline]
    pub fn is_valid_range(&self, range: f64) -> bool {
        let (lo, hi) = self.range_bounds();
        range.is_finite() && range >= lo && range <= hi
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let (lo, hi) = self.range_bounds();
        if !(lo >= 0.0 && lo < hi) || !lo.is_finite() || hi.is_nan() {
            return Err(SensorError::InvalidModel(
                "range bounds must satisfy 0 <= range_min < range_max",
            ));
        }
        if self.ray_count() == 0 {
            return Err(SensorError::InvalidModel("model has no rays"));
        }
        let unit = |d: &Vec3| math::abs(d.norm() - 1.0) <= UNIT_TOLERANCE;
        match self {
            SensorModel::Spherical {
                theta_min,
                theta_max,
                phi_min,
                phi_max,
                ..
            } => {
                let finite = [theta_min, theta_max, phi_min, phi_max].iter().all(|a| a.is_finite());
                if !finite || theta_min > theta_max || phi_min > phi_max {
                    return Err(SensorError::InvalidModel("angle bounds must be finite and ordered"));
                }
                if *theta_max - *theta_min > 2.0 * PI + 1e-9 {
                    return Err(SensorError::InvalidModel("horizontal span exceeds a full turn"));
                }
                if *phi_min < -FRAC_PI_2 || *phi_max > FRAC_PI_2 {
                    return Err(SensorError::InvalidModel("elevation must lie within ±π/2"));
                }
            }
            SensorModel::Pinhole { fx, fy, cx, cy, .. } => {
                if !(*fx > 0.0 && *fy > 0.0) || !fx.is_finite() || !fy.is_finite() || !cx.is_finite() || !cy.is_finite()
                {
                    return Err(SensorError::InvalidModel("focal lengths must be positive and finite"));
                }
            }
            SensorModel::O1Dn { origin, directions, .. } => {
                if !origin.iter().all(|c| c.is_finite()) || !directions.iter().all(unit) {
                    return Err(SensorError::InvalidModel("directions must be unit vectors"));
                }
            }
            SensorModel::OnDn {
                origins, directions, ..
            } => {
                if origins.len() != directions.len() {
                    return Err(SensorError::InvalidModel("origins and directions differ in length"));
                }
                if !origins.iter().all(|o| o.iter().all(|c| c.is_finite())) || !directions.iter().all(unit) {
                    return Err(SensorError::InvalidModel("directions must be unit vectors"));
                }
            }
        }
        Ok(())
    }

    /// Rays in the sensor frame, in measurement order.
    pub fn rays(&self) -> Vec<Ray> {
        match self {
            SensorModel::Spherical {
                theta_min,
                theta_max,
                n_horizontal,
                phi_min,
                phi_max,
                n_vertical,
                ..
            } => {
                let thetas: Vec<f64> = angles(*theta_min, *theta_max, *n_horizontal).collect();
                let mut rays = Vec::with_capacity(n_horizontal * n_vertical);
                for phi in angles(*phi_min, *phi_max, *n_vertical) {
                    let (sp, cp) = (math::sin(phi), math::cos(phi));
                    for &theta in &thetas {
                        let d = Vec3::new(cp * math::cos(theta), cp * math::sin(theta), sp);
                        rays.push(Ray::new(Vec3::zeros(), d));
                    }
                }
                rays
            }
            SensorModel::Pinhole {
                width,
                height,
                fx,
                fy,
                cx,
                cy,
                ..
            } => {
                let mut rays = Vec::with_capacity(width * height);
                for v in 0..*height {
                    for u in 0..*width {
                        let d = Vec3::new((u as f64 - cx) / fx, (v as f64 - cy) / fy, 1.0);
                        rays.push(Ray::new(Vec3::zeros(), d));
                    }
                }
                rays
            }
            SensorModel::O1Dn { origin, directions, .. } => directions.iter().map(|d| Ray::new(*origin, *d)).collect(),
            SensorModel::OnDn {
                origins, directions, ..
            } => origins.iter().zip(directions).map(|(o, d)| Ray::new(*o, *d)).collect(),
        }
    }
}

/// Measured ranges plus their validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    ranges: Vec<f64>,
    valid: Vec<bool>,
}

impl Scan {
    /// Validity is derived from the model's range bounds.
    pub fn new(model: &SensorModel, ranges: Vec<f64>) -> Result<Self, SensorError> {
        let valid = ranges.iter().map(|&r| model.is_valid_range(r)).collect();
        Self::checked(model, ranges, valid)
    }

    /// Keeps an externally supplied mask, additionally invalidating ranges
    /// outside the model's bounds.
    pub fn with_mask(model: &SensorModel, ranges: Vec<f64>, mask: Vec<bool>) -> Result<Self, SensorError> {
        if mask.len() != ranges.len() {
            return Err(SensorError::LengthMismatch {
                expected: ranges.len(),
                got: mask.len(),
            });
        }
        let valid = ranges
            .iter()
            .zip(&mask)
            .map(|(&r, &m)| m && model.is_valid_range(r))
            .collect();
        Self::checked(model, ranges, valid)
    }

    fn checked(model: &SensorModel, ranges: Vec<f64>, valid: Vec<bool>) -> Result<Self, SensorError> {
        if ranges.len() != model.ray_count() {
            return Err(SensorError::LengthMismatch {
                expected: model.ray_count(),
                got: ranges.len(),
            });
        }
        Ok(Scan { ranges, valid })
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Cartesian points `origin + range · direction` in the sensor frame.
pub fn scan_to_points(model: &SensorModel, scan: &Scan) -> Result<Vec<Option<Vec3>>, SensorError> {
    if scan.len() != model.ray_count() {
        return Err(SensorError::LengthMismatch {
            expected: model.ray_count(),
            got: scan.len(),
        });
    }
    Ok(model
        .rays()
        .iter()
        .zip(scan.ranges.iter().zip(&scan.valid))
        .map(|(ray, (&r, &ok))| ok.then(|| ray.at(r)))
        .collect())
}

/// Casts the model's rays from `sensor_pose` and records the hit distances,
/// perturbed by zero-mean Gaussian range noise. The noise stream is drawn
/// in ray order from `seed`, so each ray index always receives the same
/// sample. Misses and out-of-bounds ranges are invalid.
pub fn simulate_scan<R: Raycaster + Sync>(
    caster: &R,
    model: &SensorModel,
    sensor_pose: &Transform,
    noise_sigma: f64,
    seed: u64,
) -> Result<Scan, SensorError> {
    model.validate()?;
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(SensorError::InvalidNoise(noise_sigma));
    }
    let (_, range_max) = model.range_bounds();
    let rays: Vec<Ray> = model
        .rays()
        .iter()
        .map(|r| Ray::new(sensor_pose.apply(r.origin()), sensor_pose.apply_vector(r.direction())))
        .collect();
    let hits = caster.batch_closest_hit(&rays, range_max);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sigma).map_err(|_| SensorError::InvalidNoise(noise_sigma))?;
    let ranges = hits
        .iter()
        .map(|hit| {
            let noise = if noise_sigma > 0.0 {
                normal.sample(&mut rng)
            } else {
                0.0
            };
            hit.map_or(f64::NAN, |h| h.distance + noise)
        })
        .collect();
    Scan::new(model, ranges)
}

/// A sensor mounted on the robot: its model, the fixed sensor-to-base
/// transform and an optional fusion weight.
#[derive(Debug, Clone)]
pub struct SensorRig {
    model: SensorModel,
    sensor_to_base: Transform,
    weight_override: Option<f64>,
    rays: Vec<Ray>,
}

impl SensorRig {
    pub fn new(model: SensorModel, sensor_to_base: Transform) -> Result<Self, SensorError> {
        model.validate()?;
        let rays = model.rays();
        Ok(SensorRig {
            model,
            sensor_to_base,
            weight_override: None,
            rays,
        })
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self, SensorError> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(SensorError::InvalidWeight(weight));
        }
        self.weight_override = Some(weight);
        Ok(self)
    }

    pub fn model(&self) -> &SensorModel {
        &self.model
    }

    pub fn sensor_to_base(&self) -> &Transform {
        &self.sensor_to_base
    }

    pub fn weight_override(&self) -> Option<f64> {
        self.weight_override
    }

    /// Sensor-frame rays, cached at construction.
    pub fn rays(&self) -> &[Ray] {
        &self.rays
    }
}
