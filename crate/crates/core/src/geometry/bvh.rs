use super::mesh::TriangleMesh;
use crate::math::Vec3;

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3, t_min: f64, t_max: f64) -> Ray {
        debug_assert!(0.0 <= t_min && t_min < t_max);
        Ray {
            origin,
            direction: direction.normalize(),
            t_min,
            t_max,
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub triangle: usize,
    pub t: f64,
    /// Weights of the triangle's three corners, in index order.
    pub barycentric: [f64; 3],
    pub geometric_normal: Vec3,
    /// Interpolated vertex normal (normalized, or zero when it vanishes).
    pub shading_normal: Vec3,
    pub uv: [f64; 2],
    pub position: Vec3,
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Aabb {
        Aabb {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.lo = self.lo.inf(&o.lo);
        self.hi = self.hi.sup(&o.hi);
    }

    fn area(&self) -> f64 {
        let d = self.hi - self.lo;
        if d.x < 0.0 {
            return 0.0;
        }
        2.0 * (d.x * d.y + d.y * d.z + d.z * d.x)
    }

    /// Slab test; conservative by a few ulps so watertight triangle hits
    /// on box faces are never culled.
    #[inline]
    fn hit(&self, origin: &Vec3, inv_dir: &Vec3, t_min: f64, t_max: f64) -> bool {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut near = (self.lo[a] - origin[a]) * inv_dir[a];
            let mut far = (self.hi[a] - origin[a]) * inv_dir[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN (0 * inf) leaves the bounds untouched.
            far *= 1.0 + 4.0 * f64::EPSILON;
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: first primitive offset; interior: index of the second child.
    offset: u32,
    /// Zero for interior nodes.
    count: u32,
}

/// Bounding volume hierarchy over a mesh's triangles, built with binned SAH.
/// Immutable after construction and shareable across threads.
#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    prims: Vec<u32>,
}

const LEAF_SIZE: usize = 4;
const BINS: usize = 16;

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let n = mesh.num_triangles();
        let mut boxes = Vec::with_capacity(n);
        let mut centroids = Vec::with_capacity(n);
        for t in 0..n {
            let mut b = Aabb::empty();
            for p in mesh.corners(t) {
                b.grow(&p);
            }
            centroids.push((b.lo + b.hi) * 0.5);
            boxes.push(b);
        }
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * n.max(1)),
            prims: (0..n as u32).collect(),
        };
        if n == 0 {
            bvh.nodes.push(Node {
                bounds: Aabb::empty(),
                offset: 0,
                count: 0,
            });
            return bvh;
        }
        bvh.build_node(&boxes, &centroids, 0, n);
        bvh
    }

    fn build_node(&mut self, boxes: &[Aabb], centroids: &[Vec3], start: usize, end: usize) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &p in &self.prims[start..end] {
            bounds.merge(&boxes[p as usize]);
            cbounds.grow(&centroids[p as usize]);
        }
        let idx = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            offset: start as u32,
            count: (end - start) as u32,
        });
        let count = end - start;
        if count <= LEAF_SIZE {
            return idx;
        }

        let extent = cbounds.hi - cbounds.lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        if extent[axis] <= 0.0 {
            return idx;
        }

        let mut bin_box = [Aabb::empty(); BINS];
        let mut bin_count = [0usize; BINS];
        let bin_of = |c: &Vec3| -> usize {
            let f = (c[axis] - cbounds.lo[axis]) / extent[axis];
            ((f * BINS as f64) as usize).min(BINS - 1)
        };
        for &p in &self.prims[start..end] {
            let b = bin_of(&centroids[p as usize]);
            bin_box[b].merge(&boxes[p as usize]);
            bin_count[b] += 1;
        }
        let mut best = (f64::INFINITY, 0usize);
        for split in 1..BINS {
            let (mut lb, mut rb) = (Aabb::empty(), Aabb::empty());
            let (mut lc, mut rc) = (0, 0);
            for b in 0..split {
                lb.merge(&bin_box[b]);
                lc += bin_count[b];
            }
            for b in split..BINS {
                rb.merge(&bin_box[b]);
                rc += bin_count[b];
            }
            if lc == 0 || rc == 0 {
                continue;
            }
            let cost = lb.area() * lc as f64 + rb.area() * rc as f64;
            if cost < best.0 {
                best = (cost, split);
            }
        }
        let leaf_cost = bounds.area() * count as f64;
        if best.0 >= leaf_cost && count <= 2 * LEAF_SIZE {
            return idx;
        }

        let mid = if best.0.is_finite() {
            let slice = &mut self.prims[start..end];
            let mut i = 0;
            for j in 0..slice.len() {
                if bin_of(&centroids[slice[j] as usize]) < best.1 {
                    slice.swap(i, j);
                    i += 1;
                }
            }
            start + i
        } else {
            start + count / 2
        };
        let mid = if mid == start || mid == end {
            start + count / 2
        } else {
            mid
        };

        self.build_node(boxes, centroids, start, mid);
        let right = self.build_node(boxes, centroids, mid, end);
        self.nodes[idx].offset = right as u32;
        self.nodes[idx].count = 0;
        idx
    }

    /// Nearest hit in `(t_min, t_max)`; ties resolve to the lower triangle id.
    pub fn intersect(&self, mesh: &TriangleMesh, ray: &Ray) -> Option<Hit> {
        let inv = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut best: Option<(usize, f64, [f64; 3])> = None;
        let mut t_max = ray.t_max;
        let mut stack = [0usize; 128];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp]];
            if !node.bounds.hit(&ray.origin, &inv, ray.t_min, t_max) {
                continue;
            }
            if node.count > 0 {
                let s = node.offset as usize;
                for &p in &self.prims[s..s + node.count as usize] {
                    let p = p as usize;
                    if let Some((t, b)) = intersect_triangle(mesh, p, ray, t_max) {
                        let better = match best {
                            None => true,
                            Some((bp, bt, _)) => t < bt || (t == bt && p < bp),
                        };
                        if better {
                            best = Some((p, t, b));
                            t_max = t;
                        }
                    }
                }
            } else {
                let here = stack[sp];
                stack[sp] = node.offset as usize;
                stack[sp + 1] = here + 1;
                sp += 2;
            }
        }
        best.map(|(tri, t, b)| make_hit(mesh, ray, tri, t, b))
    }

    /// Any-hit visibility query.
    pub fn occluded(&self, mesh: &TriangleMesh, ray: &Ray) -> bool {
        let inv = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut stack = [0usize; 128];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp]];
            if !node.bounds.hit(&ray.origin, &inv, ray.t_min, ray.t_max) {
                continue;
            }
            if node.count > 0 {
                let s = node.offset as usize;
                for &p in &self.prims[s..s + node.count as usize] {
                    if intersect_triangle(mesh, p as usize, ray, ray.t_max).is_some() {
                        return true;
                    }
                }
            } else {
                let here = stack[sp];
                stack[sp] = node.offset as usize;
                stack[sp + 1] = here + 1;
                sp += 2;
            }
        }
        false
    }
}

/// Reference intersection over every triangle, with the same tie rule as
/// [`Bvh::intersect`].
pub fn brute_force_intersect(mesh: &TriangleMesh, ray: &Ray) -> Option<Hit> {
    let mut best: Option<(usize, f64, [f64; 3])> = None;
    for p in 0..mesh.num_triangles() {
        if let Some((t, b)) = intersect_triangle(mesh, p, ray, ray.t_max) {
            if best.map_or(true, |(_, bt, _)| t < bt) {
                best = Some((p, t, b));
            }
        }
    }
    best.map(|(tri, t, b)| make_hit(mesh, ray, tri, t, b))
}

/// Watertight ray-triangle test (Woop, Benthin and Wald). Accepts
/// `t_min < t <= t_max`.
#[inline]
fn intersect_triangle(mesh: &TriangleMesh, tri: usize, ray: &Ray, t_max: f64) -> Option<(f64, [f64; 3])> {
    let d = ray.direction;
    let kz = d.iamax();
    let mut kx = (kz + 1) % 3;
    let mut ky = (kx + 1) % 3;
    if d[kz] < 0.0 {
        std::mem::swap(&mut kx, &mut ky);
    }
    let sx = d[kx] / d[kz];
    let sy = d[ky] / d[kz];
    let sz = 1.0 / d[kz];

    let [p0, p1, p2] = mesh.corners(tri);
    let a = p0 - ray.origin;
    let b = p1 - ray.origin;
    let c = p2 - ray.origin;
    let ax = a[kx] - sx * a[kz];
    let ay = a[ky] - sy * a[kz];
    let bx = b[kx] - sx * b[kz];
    let by = b[ky] - sy * b[kz];
    let cx = c[kx] - sx * c[kz];
    let cy = c[ky] - sy * c[kz];

    let u = cx * by - cy * bx;
    let v = ax * cy - ay * cx;
    let w = bx * ay - by * ax;
    if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
        return None;
    }
    let det = u + v + w;
    if det == 0.0 {
        return None;
    }
    let t_scaled = u * (sz * a[kz]) + v * (sz * b[kz]) + w * (sz * c[kz]);
    let inv_det = 1.0 / det;
    let t = t_scaled * inv_det;
    if !(t > ray.t_min && t <= t_max) {
        return None;
    }
    Some((t, [u * inv_det, v * inv_det, w * inv_det]))
}

fn make_hit(mesh: &TriangleMesh, ray: &Ray, tri: usize, t: f64, b: [f64; 3]) -> Hit {
    let [i0, i1, i2] = mesh.triangles[tri].map(|v| v as usize);
    let [p0, p1, p2] = mesh.corners(tri);
    let geometric_normal = mesh.face_normal(tri);
    let ns = mesh.normals[i0] * b[0] + mesh.normals[i1] * b[1] + mesh.normals[i2] * b[2];
    let len = ns.norm();
    let shading_normal = if len > 1e-8 { ns / len } else { Vec3::zeros() };
    let uv = match &mesh.uvs {
        Some(uvs) => {
            let c = &uvs[tri];
            [
                c[0][0] * b[0] + c[1][0] * b[1] + c[2][0] * b[2],
                c[0][1] * b[0] + c[1][1] * b[1] + c[2][1] * b[2],
            ]
        }
        None => [0.0, 0.0],
    };
    let _ = ray;
    Hit {
        triangle: tri,
        t,
        barycentric: b,
        geometric_normal,
        shading_normal,
        uv,
        position: p0 * b[0] + p1 * b[1] + p2 * b[2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single() -> TriangleMesh {
        TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
        )
    }

    #[test]
    fn planar_hit() {
        let m = single();
        let bvh = Bvh::build(&m);
        let ray = Ray::new(Vec3::new(0.25, 0.25, -1.0), Vec3::z(), 0.0, f64::INFINITY);
        let h = bvh.intersect(&m, &ray).unwrap();
        assert!((h.t - 1.0).abs() < 1e-12);
        assert!((h.barycentric[0] - 0.5).abs() < 1e-12);
        assert!((h.barycentric[1] - 0.25).abs() < 1e-12);
        assert!((h.barycentric[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn pointing_away_misses() {
        let m = single();
        let bvh = Bvh::build(&m);
        let ray = Ray::new(Vec3::new(0.25, 0.25, -1.0), -Vec3::z(), 0.0, f64::INFINITY);
        assert!(bvh.intersect(&m, &ray).is_none());
        assert!(!bvh.occluded(&m, &ray));
    }

    #[test]
    fn random_soup_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut positions = Vec::with_capacity(3 * n);
        let mut triangles = Vec::with_capacity(n);
        for t in 0..n {
            let c = Vec3::new(rng.gen(), rng.gen(), rng.gen()) * 10.0;
            for _ in 0..3 {
                positions.push(c + Vec3::new(rng.gen(), rng.gen(), rng.gen()) * 0.6 - Vec3::repeat(0.3));
            }
            triangles.push([3 * t as u32, 3 * t as u32 + 1, 3 * t as u32 + 2]);
        }
        let mesh = TriangleMesh::new(positions, triangles);
        let bvh = Bvh::build(&mesh);
        let mut hits = 0;
        for _ in 0..10_000 {
            let o = Vec3::new(rng.gen(), rng.gen(), rng.gen()) * 14.0 - Vec3::repeat(2.0);
            let d = Vec3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            let ray = Ray::new(o, d, 0.0, f64::INFINITY);
            let a = bvh.intersect(&mesh, &ray);
            let b = brute_force_intersect(&mesh, &ray);
            assert_eq!(a.map(|h| (h.triangle, h.t)), b.map(|h| (h.triangle, h.t)));
            assert_eq!(bvh.occluded(&mesh, &ray), b.is_some());
            hits += a.is_some() as usize;
        }
        assert!(hits > 1000, "too few hits to be meaningful: {hits}");
    }

    #[test]
    fn hit_barycentrics_are_valid() {
        let m = single();
        let bvh = Bvh::build(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let o = Vec3::new(rng.gen::<f64>(), rng.gen::<f64>(), -1.0);
            let ray = Ray::new(o, Vec3::z(), 0.0, 10.0);
            if let Some(h) = bvh.intersect(&m, &ray) {
                let s: f64 = h.barycentric.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(h.barycentric.iter().all(|&b| b >= 0.0));
                assert!(h.t > ray.t_min && h.t <= ray.t_max);
            }
        }
    }
}
