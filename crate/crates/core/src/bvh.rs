//! Closest-hit raycasting against triangle meshes.
//!
//! [`Bvh`] is a binned-SAH bounding volume hierarchy flattened into a
//! depth-first node array. [`BruteForce`] scans every triangle and serves as
//! the correctness oracle; both share the same Möller–Trumbore kernel so
//! their distances agree bit for bit.

use alloc::vec::Vec;

use crate::mesh::TriangleMesh;
use crate::{math, par, Vec3};

/// Hits closer than this to the ray origin are ignored, in meters.
pub const RAY_EPSILON: f64 = 1e-6;

// Barycentric slack so rays along a shared edge hit at least one side.
const BARY_EPSILON: f64 = 1e-12;
const BOX_PADDING: f64 = 1e-9;
const MAX_LEAF_SIZE: usize = 4;
const SAH_BINS: usize = 16;
const MAX_DEPTH: usize = 96;
const STACK_SIZE: usize = 128;
// Slab test widening so rounding never culls a box the exact test would enter.
const SLAB_ROBUSTNESS: f64 = 1.0 + 4.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    origin: Vec3,
    direction: Vec3,
}

impl Ray {
    /// The direction is normalized.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Ray {
            origin,
            direction: direction.normalize(),
        }
    }

    #[inline]
    pub fn origin(&self) -> &Vec3 {
        &self.origin
    }

    #[inline]
    pub fn direction(&self) -> &Vec3 {
        &self.direction
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Distance along the ray, meters.
    pub distance: f64,
    pub face_id: usize,
    pub point: Vec3,
    /// Unit face normal, flipped so that it faces the ray origin.
    pub normal: Vec3,
}

/// Anything that answers closest-hit queries.
pub trait Raycaster {
    /// Nearest intersection with distance in `(RAY_EPSILON, max_range]`.
    fn closest_hit(&self, ray: &Ray, max_range: f64) -> Option<Hit>;

    fn face_count(&self) -> usize;

    /// `closest_hit` for every ray. Output order matches input order.
    fn batch_closest_hit(&self, rays: &[Ray], max_range: f64) -> Vec<Option<Hit>>
    where
        Self: Sync,
    {
        par::map_indexed(rays.len(), |i| self.closest_hit(&rays[i], max_range))
    }
}

/// Möller–Trumbore without backface culling. Returns the ray parameter.
#[inline(always)]
fn intersect(origin: &Vec3, dir: &Vec3, v0: &Vec3, e1: &Vec3, e2: &Vec3) -> Option<f64> {
    let pvec = dir.cross(e2);
    let det = e1.dot(&pvec);
    if math::abs(det) < 1e-15 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - v0;
    let u = tvec.dot(&pvec) * inv_det;
    if !(-BARY_EPSILON..=1.0 + BARY_EPSILON).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < -BARY_EPSILON || u + v > 1.0 + BARY_EPSILON {
        return None;
    }
    Some(e2.dot(&qvec) * inv_det)
}

#[inline]
fn closer(t: f64, face: usize, best_t: f64, best_face: usize) -> bool {
    t < best_t || (t == best_t && face < best_face)
}

fn make_hit(ray: &Ray, distance: f64, face_id: usize, normal: &Vec3) -> Hit {
    let normal = if normal.dot(&ray.direction) > 0.0 {
        -normal
    } else {
        *normal
    };
    Hit {
        distance,
        face_id,
        point: ray.at(distance),
        normal,
    }
}

/// Exhaustive scan over every face.
pub fn closest_hit_brute(mesh: &TriangleMesh, ray: &Ray, max_range: f64) -> Option<Hit> {
    let mut best_t = f64::INFINITY;
    let mut best_face = usize::MAX;
    for face in 0..mesh.face_count() {
        let [v0, v1, v2] = mesh.triangle(face);
        let (e1, e2) = (v1 - v0, v2 - v0);
        if let Some(t) = intersect(&ray.origin, &ray.direction, &v0, &e1, &e2) {
            if t > RAY_EPSILON && t <= max_range && closer(t, face, best_t, best_face) {
                best_t = t;
                best_face = face;
            }
        }
    }
    (best_face != usize::MAX).then(|| make_hit(ray, best_t, best_face, &mesh.face_normals()[best_face]))
}

/// Brute-force raycaster over a borrowed mesh.
#[derive(Debug, Clone, Copy)]
pub struct BruteForce<'a>(pub &'a TriangleMesh);

impl Raycaster for BruteForce<'_> {
    fn closest_hit(&self, ray: &Ray, max_range: f64) -> Option<Hit> {
        closest_hit_brute(self.0, ray, max_range)
    }

    fn face_count(&self) -> usize {
        self.0.face_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    fn half_area(&self) -> f64 {
        let d = self.max - self.min;
        if d.x < 0.0 {
            return 0.0;
        }
        d.x * d.y + d.y * d.z + d.z * d.x
    }

    #[cfg(test)]
    fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.min[k] && other.max[k] <= self.max[k])
    }

    /// Entry distance if the ray overlaps the box within `[0, t_max]`.
    #[inline(always)]
    fn entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t_near = 0.0f64;
        // widened so boxes touching an equal-distance hit are still entered
        let mut t_far = t_max * SLAB_ROBUSTNESS + 1e-12;
        for k in 0..3 {
            if inv_dir[k].is_infinite() {
                // parallel to the slab: 0 · ∞ would poison the interval
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return None;
                }
                continue;
            }
            let t1 = (self.min[k] - origin[k]) * inv_dir[k];
            let t2 = (self.max[k] - origin[k]) * inv_dir[k];
            t_near = t_near.max(t1.min(t2));
            t_far = t_far.min(t1.max(t2) * SLAB_ROBUSTNESS);
        }
        (t_near <= t_far).then_some(t_near)
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: first triangle. Interior: index of the right child (left is next).
    start: u32,
    /// Zero for interior nodes.
    count: u32,
}

#[derive(Debug, Clone, Copy)]
struct Tri {
    v0: Vec3,
    e1: Vec3,
    e2: Vec3,
    normal: Vec3,
    face: u32,
}

/// Immutable bounding volume hierarchy over a mesh's faces.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    tris: Vec<Tri>,
    depth: usize,
}

struct Item {
    bounds: Aabb,
    centroid: Vec3,
    face: u32,
}

impl Bvh {
    /// Binned-SAH build with a median-split fallback. Leaves hold at most
    /// four triangles. Deterministic for a given mesh.
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let mut items: Vec<Item> = (0..mesh.face_count())
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                let mut bounds = Aabb::empty();
                bounds.grow(&a);
                bounds.grow(&b);
                bounds.grow(&c);
                // the kernel accepts hits a hair outside the triangle
                let pad = BOX_PADDING * (1.0 + bounds.min.abs().max().max(bounds.max.abs().max()));
                bounds.min -= Vec3::repeat(pad);
                bounds.max += Vec3::repeat(pad);
                Item {
                    bounds,
                    centroid: (a + b + c) / 3.0,
                    face: f as u32,
                }
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * items.len() / MAX_LEAF_SIZE + 1);
        let len = items.len();
        let depth = build_node(&mut nodes, &mut items, 0, len, 1);

        let tris = items
            .iter()
            .map(|it| {
                let [v0, v1, v2] = mesh.triangle(it.face as usize);
                Tri {
                    v0,
                    e1: v1 - v0,
                    e2: v2 - v0,
                    normal: mesh.face_normals()[it.face as usize],
                    face: it.face,
                }
            })
            .collect();
        Bvh { nodes, tris, depth }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn closest_hit(&self, ray: &Ray, max_range: f64) -> Option<Hit> {
        let origin = &ray.origin;
        let dir = &ray.direction;
        let inv_dir = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);

        let mut best_t = f64::INFINITY;
        let mut best_face = usize::MAX;
        let mut best_tri = usize::MAX;
        let limit = |best_t: f64| if best_t.is_finite() { best_t } else { max_range };

        let mut stack = [0u32; STACK_SIZE];
        let mut sp = 0usize;
        self.nodes[0].bounds.entry(origin, &inv_dir, max_range)?;
        let mut current = 0usize;
        loop {
            let node = &self.nodes[current];
            if node.count > 0 {
                let start = node.start as usize;
                for (k, tri) in self.tris[start..start + node.count as usize].iter().enumerate() {
                    if let Some(t) = intersect(origin, dir, &tri.v0, &tri.e1, &tri.e2) {
                        let face = tri.face as usize;
                        if t > RAY_EPSILON && t <= max_range && closer(t, face, best_t, best_face) {
                            best_t = t;
                            best_face = face;
                            best_tri = start + k;
                        }
                    }
                }
            } else {
                let left = current + 1;
                let right = node.start as usize;
                let t_max = limit(best_t);
                let hl = self.nodes[left].bounds.entry(origin, &inv_dir, t_max);
                let hr = self.nodes[right].bounds.entry(origin, &inv_dir, t_max);
                match (hl, hr) {
                    (Some(a), Some(b)) => {
                        let (near, far) = if a <= b { (left, right) } else { (right, left) };
                        stack[sp] = far as u32;
                        sp += 1;
                        current = near;
                        continue;
                    }
                    (Some(_), None) => {
                        current = left;
                        continue;
                    }
                    (None, Some(_)) => {
                        current = right;
                        continue;
                    }
                    (None, None) => {}
                }
            }
            // pop the next node still worth visiting
            loop {
                if sp == 0 {
                    return (best_tri != usize::MAX)
                        .then(|| make_hit(ray, best_t, best_face, &self.tris[best_tri].normal));
                }
                sp -= 1;
                let candidate = stack[sp] as usize;
                if self.nodes[candidate]
                    .bounds
                    .entry(origin, &inv_dir, limit(best_t))
                    .is_some()
                {
                    current = candidate;
                    break;
                }
            }
        }
    }
}

impl Raycaster for Bvh {
    #[inline]
    fn closest_hit(&self, ray: &Ray, max_range: f64) -> Option<Hit> {
        Bvh::closest_hit(self, ray, max_range)
    }

    fn face_count(&self) -> usize {
        self.tris.len()
    }
}

fn leaf(nodes: &mut Vec<Node>, bounds: Aabb, lo: usize, hi: usize) {
    nodes.push(Node {
        bounds,
        start: lo as u32,
        count: (hi - lo) as u32,
    });
}

/// Builds the subtree over `items[lo..hi]`, returns its depth.
fn build_node(nodes: &mut Vec<Node>, items: &mut [Item], lo: usize, hi: usize, depth: usize) -> usize {
    let mut bounds = Aabb::empty();
    let mut centroids = Aabb::empty();
    for it in &items[lo..hi] {
        bounds.merge(&it.bounds);
        centroids.grow(&it.centroid);
    }
    let n = hi - lo;
    if n <= MAX_LEAF_SIZE {
        leaf(nodes, bounds, lo, hi);
        return depth;
    }

    let mid = if depth < MAX_DEPTH {
        sah_split(&mut items[lo..hi], &centroids).map(|m| lo + m)
    } else {
        None
    }
    .unwrap_or_else(|| {
        median_split(&mut items[lo..hi], &centroids);
        lo + n / 2
    });

    let index = nodes.len();
    nodes.push(Node {
        bounds,
        start: 0,
        count: 0,
    });
    let dl = build_node(nodes, items, lo, mid, depth + 1);
    nodes[index].start = nodes.len() as u32;
    let dr = build_node(nodes, items, mid, hi, depth + 1);
    dl.max(dr)
}

fn bin_of(c: f64, min: f64, scale: f64) -> usize {
    (((c - min) * scale) as usize).min(SAH_BINS - 1)
}

/// Partitions by the cheapest binned SAH plane. Returns the split offset, or
/// `None` when every centroid coincides or the partition would be one-sided.
fn sah_split(items: &mut [Item], centroids: &Aabb) -> Option<usize> {
    let extent = centroids.max - centroids.min;
    let mut best: Option<(f64, usize, usize)> = None; // cost, axis, last bin of left side

    for axis in 0..3 {
        if !(extent[axis] > 0.0) {
            continue;
        }
        let scale = SAH_BINS as f64 / extent[axis];
        let mut bins = [(Aabb::empty(), 0usize); SAH_BINS];
        for it in items.iter() {
            let b = bin_of(it.centroid[axis], centroids.min[axis], scale);
            bins[b].0.merge(&it.bounds);
            bins[b].1 += 1;
        }
        let mut right_area = [0.0; SAH_BINS];
        let mut right_count = [0usize; SAH_BINS];
        let mut acc = Aabb::empty();
        let mut count = 0;
        for b in (1..SAH_BINS).rev() {
            acc.merge(&bins[b].0);
            count += bins[b].1;
            right_area[b] = acc.half_area();
            right_count[b] = count;
        }
        let mut acc = Aabb::empty();
        let mut count = 0;
        for b in 0..SAH_BINS - 1 {
            acc.merge(&bins[b].0);
            count += bins[b].1;
            if count == 0 || right_count[b + 1] == 0 {
                continue;
            }
            let cost = acc.half_area() * count as f64 + right_area[b + 1] * right_count[b + 1] as f64;
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, axis, b));
            }
        }
    }

    let (_, axis, last) = best?;
    let scale = SAH_BINS as f64 / extent[axis];
    let min = centroids.min[axis];
    let mut mid = 0;
    for i in 0..items.len() {
        if bin_of(items[i].centroid[axis], min, scale) <= last {
            items.swap(i, mid);
            mid += 1;
        }
    }
    (mid > 0 && mid < items.len()).then_some(mid)
}

/// Sorts along the widest centroid axis (face id breaks ties) so the
/// midpoint split is deterministic.
fn median_split(items: &mut [Item], centroids: &Aabb) {
    let extent = centroids.max - centroids.min;
    let axis = extent.imax();
    items.sort_unstable_by(|a, b| a.centroid[axis].total_cmp(&b.centroid[axis]).then(a.face.cmp(&b.face)));
}
