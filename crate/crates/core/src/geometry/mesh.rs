use std::fmt;

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Indexed triangle mesh with per-vertex normals and, once an atlas has been
/// baked, per-corner UVs and per-triangle chart ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub positions: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Vec<Vec3>,
    pub uvs: Option<Vec<[[f64; 2]; 3]>>,
    pub chart_ids: Option<Vec<u32>>,
}

/// Counts of elements removed by [`TriangleMesh::cleanup`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CleanupReport {
    pub removed_triangles: usize,
    pub removed_vertices: usize,
    pub remaining_triangles: usize,
    pub components: usize,
}

impl fmt::Display for CleanupReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cleanup: {} triangles kept, {} degenerate triangles removed, {} unreferenced vertices removed, {} components",
            self.remaining_triangles, self.removed_triangles, self.removed_vertices, self.components
        )
    }
}

impl TriangleMesh {
    pub fn new(positions: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> TriangleMesh {
        let mut mesh = TriangleMesh {
            positions,
            triangles,
            normals: Vec::new(),
            uvs: None,
            chart_ids: None,
        };
        mesh.compute_normals();
        mesh
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, tri: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[tri];
        [
            self.positions[a as usize],
            self.positions[b as usize],
            self.positions[c as usize],
        ]
    }

    /// Unnormalized face normal; its length is twice the triangle area.
    pub fn face_cross(&self, tri: usize) -> Vec3 {
        let [a, b, c] = self.corners(tri);
        (b - a).cross(&(c - a))
    }

    pub fn face_normal(&self, tri: usize) -> Vec3 {
        let n = self.face_cross(tri);
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::z()
        }
    }

    pub fn triangle_area(&self, tri: usize) -> f64 {
        0.5 * self.face_cross(tri).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Diagonal of the bounding box; the length scale used for ray offsets.
    pub fn scale(&self) -> f64 {
        let (lo, hi) = self.bounds();
        let d = (hi - lo).norm();
        if d.is_finite() && d > 0.0 {
            d
        } else {
            1.0
        }
    }

    /// True when a triangle repeats a vertex index, has a zero-length edge,
    /// or has zero area relative to its longest edge.
    pub fn is_degenerate(&self, tri: usize) -> bool {
        let [a, b, c] = self.triangles[tri];
        if a == b || b == c || a == c {
            return true;
        }
        let [p0, p1, p2] = self.corners(tri);
        let longest2 = (p1 - p0)
            .norm_squared()
            .max((p2 - p1).norm_squared())
            .max((p0 - p2).norm_squared());
        if longest2 == 0.0 {
            return true;
        }
        let edge_zero = (p1 - p0).norm_squared() == 0.0
            || (p2 - p1).norm_squared() == 0.0
            || (p0 - p2).norm_squared() == 0.0;
        edge_zero || self.face_cross(tri).norm() < 1e-12 * longest2
    }

    /// Removes degenerate triangles and unreferenced vertices. Idempotent.
    pub fn cleanup(&mut self) -> Result<CleanupReport> {
        let before_tris = self.triangles.len();
        let keep: Vec<bool> = (0..before_tris).map(|t| !self.is_degenerate(t)).collect();

        let mut k = keep.iter();
        self.triangles.retain(|_| *k.next().unwrap());
        if let Some(uvs) = self.uvs.as_mut() {
            let mut k = keep.iter();
            uvs.retain(|_| *k.next().unwrap());
        }
        if let Some(ids) = self.chart_ids.as_mut() {
            let mut k = keep.iter();
            ids.retain(|_| *k.next().unwrap());
        }
        let removed_triangles = before_tris - self.triangles.len();

        let mut used = vec![false; self.positions.len()];
        for tri in &self.triangles {
            for &v in tri {
                used[v as usize] = true;
            }
        }
        let mut remap = vec![u32::MAX; self.positions.len()];
        let mut next = 0u32;
        for (i, &u) in used.iter().enumerate() {
            if u {
                remap[i] = next;
                next += 1;
            }
        }
        let removed_vertices = self.positions.len() - next as usize;
        if removed_vertices > 0 {
            let mut i = 0;
            self.positions.retain(|_| {
                i += 1;
                used[i - 1]
            });
            if self.normals.len() == used.len() {
                let mut i = 0;
                self.normals.retain(|_| {
                    i += 1;
                    used[i - 1]
                });
            }
            for tri in &mut self.triangles {
                for v in tri.iter_mut() {
                    *v = remap[*v as usize];
                }
            }
        }

        if self.triangles.is_empty() {
            return Err(Error::Degenerate(
                "mesh has no triangles after degenerate cleanup".into(),
            ));
        }
        if self.normals.len() != self.positions.len() {
            self.compute_normals();
        } else {
            self.fix_normals();
        }

        Ok(CleanupReport {
            removed_triangles,
            removed_vertices,
            remaining_triangles: self.triangles.len(),
            components: self.connected_components().1,
        })
    }

    /// Area-weighted vertex normals.
    pub fn compute_normals(&mut self) {
        let mut acc = vec![Vec3::zeros(); self.positions.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let n = self.face_cross(t);
            for &v in tri {
                acc[v as usize] += n;
            }
        }
        self.normals = acc;
        for n in &mut self.normals {
            *n = super::safe_normalize(*n, Vec3::z());
        }
    }

    /// Renormalizes supplied normals, recomputing any that vanish.
    fn fix_normals(&mut self) {
        let mut bad = false;
        for n in &mut self.normals {
            let len = n.norm();
            if len > 1e-12 && len.is_finite() {
                *n /= len;
            } else {
                bad = true;
            }
        }
        if bad {
            let supplied = std::mem::take(&mut self.normals);
            self.compute_normals();
            for (n, s) in self.normals.iter_mut().zip(supplied) {
                let len = s.norm();
                if len > 1e-12 && len.is_finite() {
                    *n = s / len;
                }
            }
        }
    }

    /// Vertex-connected components: `(component id per triangle, count)`.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let mut parent: Vec<usize> = (0..self.positions.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for tri in &self.triangles {
            let a = find(&mut parent, tri[0] as usize);
            for &v in &tri[1..] {
                let b = find(&mut parent, v as usize);
                if a != b {
                    parent[b] = a;
                }
            }
        }
        let mut label = vec![usize::MAX; self.positions.len()];
        let mut count = 0;
        let comp = self
            .triangles
            .iter()
            .map(|tri| {
                let r = find(&mut parent, tri[0] as usize);
                if label[r] == usize::MAX {
                    label[r] = count;
                    count += 1;
                }
                label[r]
            })
            .collect();
        (comp, count)
    }

    /// Checks the structural invariants; used by tests and loaders.
    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len() as u32;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::Degenerate(format!("triangle {t} has an out-of-range index")));
            }
        }
        if self.normals.len() != self.positions.len() {
            return Err(Error::Degenerate("normal count does not match vertex count".into()));
        }
        if let Some(uvs) = &self.uvs {
            if uvs.len() != self.triangles.len() {
                return Err(Error::Degenerate("uv count does not match triangle count".into()));
            }
        }
        if let Some(ids) = &self.chart_ids {
            if ids.len() != self.triangles.len() {
                return Err(Error::Degenerate("chart id count does not match triangle count".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
    }

    #[test]
    fn normals_are_unit() {
        let m = quad();
        for n in &m.normals {
            assert!((n.norm() - 1.0).abs() < 1e-12);
            assert!((n - Vec3::z()).norm() < 1e-12);
        }
    }

    #[test]
    fn cleanup_removes_sliver_and_is_idempotent() {
        let mut m = quad();
        m.positions.push(Vec3::new(2.0, 0.0, 0.0));
        m.positions.push(Vec3::new(4.0, 0.0, 0.0));
        m.triangles.push([1, 4, 5]); // collinear
        m.compute_normals();
        let r = m.cleanup().unwrap();
        assert_eq!(r.removed_triangles, 1);
        assert_eq!(r.removed_vertices, 2);
        let r2 = m.cleanup().unwrap();
        assert_eq!(r2.removed_triangles, 0);
        assert_eq!(m.num_triangles(), 2);
    }

    #[test]
    fn empty_after_cleanup_is_error() {
        let mut m = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0],
            vec![[0, 1, 2]],
        );
        assert!(matches!(m.cleanup(), Err(Error::Degenerate(_))));
    }

    #[test]
    fn relative_area_threshold_is_scale_invariant() {
        for s in [1e-6, 1.0, 1e6] {
            let m = TriangleMesh::new(
                vec![Vec3::zeros(), Vec3::x() * s, Vec3::new(0.5, 1e-7, 0.0) * s],
                vec![[0, 1, 2]],
            );
            assert!(!m.is_degenerate(0));
        }
    }
}
