//! Triangle mesh maps and the synthetic worlds used by the experiments.

use alloc::vec::Vec;
use core::f64::consts::PI;

use thiserror::Error;

use crate::{math, Vec3};

/// Faces with area at or below this are rejected, in m².
pub const MIN_FACE_AREA: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh has no faces")]
    Empty,
    #[error("face {face} references vertex {index} but only {vertex_count} vertices exist")]
    IndexOutOfRange {
        face: usize,
        index: u32,
        vertex_count: usize,
    },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("face {0} is degenerate")]
    Degenerate(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// Indexed triangle mesh with one precomputed unit normal per face.
///
/// Normals follow counter-clockwise winding: `normalize((v1 - v0) × (v2 - v0))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    normals: Vec<Vec3>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        let mut normals = Vec::with_capacity(faces.len());
        for (face, f) in faces.iter().enumerate() {
            for &index in f {
                if index as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        face,
                        index,
                        vertex_count: vertices.len(),
                    });
                }
            }
            let [a, b, c] = f.map(|i| vertices[i as usize]);
            let cross = (b - a).cross(&(c - a));
            let norm = cross.norm();
            if !(0.5 * norm > MIN_FACE_AREA) {
                return Err(MeshError::Degenerate(face));
            }
            normals.push(cross / norm);
        }
        Ok(TriangleMesh {
            vertices,
            faces,
            normals,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Axis-aligned bounds over all vertices.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            min = min.inf(v);
            max = max.sup(v);
        }
        (min, max)
    }

    pub fn stats(&self) -> MeshStats {
        let (min, max) = self.bounds();
        MeshStats {
            vertex_count: self.vertex_count(),
            face_count: self.face_count(),
            bounds_min: min,
            bounds_max: max,
            surface_area: self.surface_area(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    pub vertex_count: usize,
    pub face_count: usize,
    pub bounds_min: Vec3,
    pub bounds_max: Vec3,
    /// m²
    pub surface_area: f64,
}

/// Which side of a box its face normals point to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Facing {
    /// Normals point out of the box: a solid obstacle.
    Outward,
    /// Normals point into the box: a room seen from inside.
    Inward,
}

/// Incrementally assembles a mesh from boxes and loose triangles.
#[derive(Debug, Default, Clone)]
pub struct MeshBuilder {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
}

impl MeshBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, v: Vec3) -> u32 {
        self.vertices.push(v);
        (self.vertices.len() - 1) as u32
    }

    pub fn add_triangle(&mut self, a: Vec3, b: Vec3, c: Vec3) -> &mut Self {
        let i = self.add_vertex(a);
        self.add_vertex(b);
        self.add_vertex(c);
        self.faces.push([i, i + 1, i + 2]);
        self
    }

    /// Appends the 12 triangles of an axis-aligned box.
    pub fn add_box(&mut self, center: Vec3, extents: Vec3, facing: Facing) -> &mut Self {
        let h = extents * 0.5;
        let base = self.vertices.len() as u32;
        for i in 0..8u32 {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            self.vertices.push(center + Vec3::new(sx * h.x, sy * h.y, sz * h.z));
        }
        // outward counter-clockwise quads
        const QUADS: [[u32; 4]; 6] = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        for [a, b, c, d] in QUADS {
            let (a, b, c, d) = (base + a, base + b, base + c, base + d);
            match facing {
                Facing::Outward => {
                    self.faces.push([a, b, c]);
                    self.faces.push([a, c, d]);
                }
                Facing::Inward => {
                    self.faces.push([a, c, b]);
                    self.faces.push([a, d, c]);
                }
            }
        }
        self
    }

    pub fn build(self) -> Result<TriangleMesh, MeshError> {
        TriangleMesh::new(self.vertices, self.faces)
    }
}

fn check_extents(extents: &Vec3) -> Result<(), MeshError> {
    if extents.iter().all(|e| e.is_finite() && *e > 0.0) {
        Ok(())
    } else {
        Err(MeshError::InvalidArgument("box extents must be positive and finite"))
    }
}

/// Closed box room centered at the origin with normals facing inward.
pub fn generate_box_room(extents: Vec3) -> Result<TriangleMesh, MeshError> {
    check_extents(&extents)?;
    let mut b = MeshBuilder::new();
    b.add_box(Vec3::zeros(), extents, Facing::Inward);
    b.build()
}

/// A set of rooms (inward boxes) furnished with solid obstacles (outward boxes).
pub fn generate_room_world(rooms: &[(Vec3, Vec3)], obstacles: &[(Vec3, Vec3)]) -> Result<TriangleMesh, MeshError> {
    let mut b = MeshBuilder::new();
    for (center, extents) in rooms {
        check_extents(extents)?;
        b.add_box(*center, *extents, Facing::Inward);
    }
    for (center, extents) in obstacles {
        check_extents(extents)?;
        b.add_box(*center, *extents, Facing::Outward);
    }
    b.build()
}

/// Picks UV-sphere stacks and slices whose face count `2·slices·(stacks-1)`
/// is close to `target_faces`.
fn sphere_resolution(target_faces: usize) -> (usize, usize) {
    let target = target_faces as f64;
    let stacks = (math::round(math::sqrt(target / 4.0)) as usize).max(2);
    let slices = (math::round(target / (2.0 * (stacks - 1) as f64)) as usize).max(3);
    (stacks, slices)
}

/// UV-sphere centered at the origin with outward normals and roughly
/// `target_faces` triangles. Face counts are always even, so tiny odd
/// targets such as 9 land one face away.
pub fn generate_sphere(radius: f64, target_faces: usize) -> Result<TriangleMesh, MeshError> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(MeshError::InvalidArgument("sphere radius must be positive"));
    }
    if target_faces < 8 {
        return Err(MeshError::InvalidArgument("sphere needs at least 8 faces"));
    }
    let (stacks, slices) = sphere_resolution(target_faces);

    let mut vertices = Vec::with_capacity(2 + (stacks - 1) * slices);
    vertices.push(Vec3::new(0.0, 0.0, radius));
    for k in 1..stacks {
        let polar = PI * k as f64 / stacks as f64;
        let (sp, cp) = (math::sin(polar), math::cos(polar));
        for j in 0..slices {
            let az = 2.0 * PI * j as f64 / slices as f64;
            vertices.push(Vec3::new(
                radius * sp * math::cos(az),
                radius * sp * math::sin(az),
                radius * cp,
            ));
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, -radius));
    let south = (vertices.len() - 1) as u32;
    let ring = |k: usize, j: usize| (1 + (k - 1) * slices + j % slices) as u32;

    let mut faces = Vec::with_capacity(2 * slices * (stacks - 1));
    for j in 0..slices {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for k in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (ring(k, j), ring(k + 1, j), ring(k + 1, j + 1), ring(k, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for j in 0..slices {
        faces.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    // enforce outward winding regardless of the azimuth direction
    for f in faces.iter_mut() {
        let [a, b, c] = f.map(|i| vertices[i as usize]);
        if (b - a).cross(&(c - a)).dot(&(a + b + c)) < 0.0 {
            f.swap(1, 2);
        }
    }
    TriangleMesh::new(vertices, faces)
}
