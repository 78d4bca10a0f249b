//! Mesh ingestion and cleanup, the BVH, and ray-scene queries.

mod bvh;
mod mesh;
mod obj;

pub use bvh::{brute_force_intersect, Bvh, Hit, Ray};
pub use mesh::{CleanupReport, TriangleMesh};
pub use obj::{load_mesh, parse_obj, save_obj, write_obj};

use crate::math::{Frame, Vec3};

/// Shading frame at a hit: the interpolated normal, flipped into the
/// geometric normal's hemisphere, completed to a right-handed basis.
/// A vanishing interpolated normal falls back to the geometric one.
pub fn shading_frame(hit: &Hit) -> Frame {
    let len = hit.shading_normal.norm();
    let mut n = if len > 1e-8 {
        hit.shading_normal / len
    } else {
        hit.geometric_normal
    };
    if n.dot(&hit.geometric_normal) < 0.0 {
        n = -n;
    }
    Frame::from_normal(n)
}

/// Unit sphere normal helper used by fixtures and tests.
pub(crate) fn safe_normalize(v: Vec3, fallback: Vec3) -> Vec3 {
    let n = v.norm();
    if n > 1e-300 && n.is_finite() {
        v / n
    } else {
        fallback
    }
}
