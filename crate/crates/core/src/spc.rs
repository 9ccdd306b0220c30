//! Simulative projective correspondences.
//!
//! For every valid measurement the sensor ray is cast into the map from the
//! current pose estimate. The real measured point is then projected onto
//! the plane of the simulated hit; that projection is its map
//! correspondence. Because the search follows the ray, a measurement can
//! only pair with surface the estimate actually sees, never with geometry
//! behind a wall.

use alloc::vec::Vec;

use thiserror::Error;

use crate::bvh::{Ray, Raycaster};
use crate::se3::Transform;
use crate::sensor::{Scan, SensorRig};
use crate::{math, par, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpcError {
    #[error("scan has {got} ranges but the sensor model has {expected} rays")]
    ScanMismatch { expected: usize, got: usize },
    #[error("invalid correspondence parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpcParams {
    /// Correspondences whose point-to-plane offset exceeds this are dropped, meters.
    pub max_projective_distance: f64,
    /// Range limit of the simulated rays, meters.
    pub max_range: f64,
}

impl Default for SpcParams {
    fn default() -> Self {
        SpcParams {
            max_projective_distance: 1.0,
            max_range: 200.0,
        }
    }
}

impl SpcParams {
    pub fn validate(&self) -> Result<(), SpcError> {
        if !(self.max_projective_distance > 0.0) {
            return Err(SpcError::InvalidParams("max_projective_distance must be positive"));
        }
        if !(self.max_range > 0.0) {
            return Err(SpcError::InvalidParams("max_range must be positive"));
        }
        Ok(())
    }
}

/// Paired scan points `s_i` and map points `m_i`, both expressed in the base
/// frame of the pose estimate they were computed from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub scan_points: Vec<Vec3>,
    pub map_points: Vec<Vec3>,
    /// Signed offset of the real point from the hit plane along the normal.
    pub projective_distances: Vec<f64>,
    /// Hit normals in the base frame, facing the sensor.
    pub normals: Vec<Vec3>,
    /// Measurement index each pair came from.
    pub ray_indices: Vec<usize>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.scan_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scan_points.is_empty()
    }

    pub fn push(&mut self, scan: Vec3, map: Vec3) {
        self.scan_points.push(scan);
        self.map_points.push(map);
        self.projective_distances.push((map - scan).norm());
        self.normals.push(Vec3::zeros());
        self.ray_indices.push(self.ray_indices.len());
    }

    pub fn from_pairs(scan_points: Vec<Vec3>, map_points: Vec<Vec3>) -> Self {
        let mut set = CorrespondenceSet::default();
        for (s, m) in scan_points.into_iter().zip(map_points) {
            set.push(s, m);
        }
        set
    }

    /// Concatenation, keeping measurement indices as they are.
    pub fn extend(&mut self, other: &CorrespondenceSet) {
        self.scan_points.extend_from_slice(&other.scan_points);
        self.map_points.extend_from_slice(&other.map_points);
        self.projective_distances.extend_from_slice(&other.projective_distances);
        self.normals.extend_from_slice(&other.normals);
        self.ray_indices.extend_from_slice(&other.ray_indices);
    }

    pub fn sum_abs_projective_distance(&self) -> f64 {
        self.projective_distances.iter().map(|d| math::abs(*d)).sum()
    }
}

struct Pair {
    scan: Vec3,
    map: Vec3,
    distance: f64,
    normal: Vec3,
}

/// Builds the correspondences of one sensor at `base_pose`.
///
/// Rays that miss the map are dropped, as are pairs whose projective
/// distance exceeds `params.max_projective_distance` in magnitude. Output
/// follows measurement order.
pub fn find_correspondences<R: Raycaster + Sync>(
    caster: &R,
    rig: &SensorRig,
    scan: &Scan,
    base_pose: &Transform,
    params: &SpcParams,
) -> Result<CorrespondenceSet, SpcError> {
    params.validate()?;
    let rays = rig.rays();
    if scan.len() != rays.len() {
        return Err(SpcError::ScanMismatch {
            expected: rays.len(),
            got: scan.len(),
        });
    }
    let sensor_pose = base_pose.compose(rig.sensor_to_base());
    let map_to_base = base_pose.inverse();
    let ranges = scan.ranges();
    let valid = scan.valid();

    let pairs = par::map_indexed(rays.len(), |i| {
        if !valid[i] {
            return None;
        }
        let ray = Ray::new(
            sensor_pose.apply(rays[i].origin()),
            sensor_pose.apply_vector(rays[i].direction()),
        );
        let hit = caster.closest_hit(&ray, params.max_range)?;
        let real = ray.at(ranges[i]);
        let distance = hit.normal.dot(&(real - hit.point));
        if math::abs(distance) > params.max_projective_distance {
            return None;
        }
        let projected = real - hit.normal * distance;
        Some(Pair {
            scan: map_to_base.apply(&real),
            map: map_to_base.apply(&projected),
            distance,
            normal: map_to_base.apply_vector(&hit.normal),
        })
    });

    let mut set = CorrespondenceSet::default();
    for (i, pair) in pairs.into_iter().enumerate() {
        if let Some(p) = pair {
            set.scan_points.push(p.scan);
            set.map_points.push(p.map);
            set.projective_distances.push(p.distance);
            set.normals.push(p.normal);
            set.ray_indices.push(i);
        }
    }
    Ok(set)
}
