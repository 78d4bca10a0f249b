//! Procedural meshes for fixtures and tests.

use std::f64::consts::PI;

use crate::geometry::TriangleMesh;
use crate::math::Vec3;

/// Latitude-longitude sphere with single pole vertices and outward winding.
/// Vertex normals are the exact sphere normals.
pub fn uv_sphere(rings: usize, segments: usize, radius: f64) -> TriangleMesh {
    assert!(rings >= 2 && segments >= 3);
    let mut positions = vec![Vec3::new(0.0, radius, 0.0)];
    for r in 1..rings {
        let theta = PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * PI * s as f64 / segments as f64;
            positions.push(radius * Vec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin()));
        }
    }
    positions.push(Vec3::new(0.0, -radius, 0.0));
    let south = positions.len() as u32 - 1;
    let ring = |r: usize, s: usize| -> u32 { 1 + ((r - 1) * segments + s % segments) as u32 };

    let mut triangles = Vec::new();
    for s in 0..segments {
        triangles.push([0, ring(1, s + 1), ring(1, s)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b) = (ring(r, s), ring(r, s + 1));
            let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    for s in 0..segments {
        triangles.push([south, ring(rings - 1, s), ring(rings - 1, s + 1)]);
    }
    let mut mesh = TriangleMesh::new(positions, triangles);
    mesh.normals = mesh.positions.iter().map(|p| p.normalize()).collect();
    mesh
}

/// Flat `nx x ny` grid over `[0, sx] x [0, sy]` in the z = 0 plane.
pub fn plane_grid(nx: usize, ny: usize, sx: f64, sy: f64) -> TriangleMesh {
    let mut positions = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            positions.push(Vec3::new(sx * i as f64 / nx as f64, sy * j as f64 / ny as f64, 0.0));
        }
    }
    let idx = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut triangles = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh::new(positions, triangles)
}

/// A quarter of a unit-radius cylinder around the y axis, `n_around`
/// segments over 90 degrees and `n_along` segments over `length`.
pub fn quarter_cylinder(n_around: usize, n_along: usize, length: f64) -> TriangleMesh {
    let mut positions = Vec::new();
    for j in 0..=n_along {
        for i in 0..=n_around {
            let phi = 0.5 * PI * i as f64 / n_around as f64;
            positions.push(Vec3::new(phi.cos(), length * j as f64 / n_along as f64, phi.sin()));
        }
    }
    let idx = |i: usize, j: usize| (j * (n_around + 1) + i) as u32;
    let mut triangles = Vec::new();
    for j in 0..n_along {
        for i in 0..n_around {
            triangles.push([idx(i, j), idx(i, j + 1), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i + 1, j)]);
        }
    }
    let mut mesh = TriangleMesh::new(positions, triangles);
    mesh.normals = mesh
        .positions
        .iter()
        .map(|p| Vec3::new(p.x, 0.0, p.z).normalize())
        .collect();
    mesh
}

/// Surface of revolution around +y from a `(radius, height)` profile listed
/// bottom to top. Ends with zero radius collapse to a single pole vertex.
pub fn revolve(profile: &[(f64, f64)], segments: usize) -> TriangleMesh {
    let mut positions = Vec::new();
    let mut rings: Vec<Vec<u32>> = Vec::new();
    for &(r, y) in profile {
        if r <= 0.0 {
            positions.push(Vec3::new(0.0, y, 0.0));
            rings.push(vec![positions.len() as u32 - 1; segments]);
        } else {
            let start = positions.len() as u32;
            for s in 0..segments {
                let phi = 2.0 * PI * s as f64 / segments as f64;
                positions.push(Vec3::new(r * phi.cos(), y, r * phi.sin()));
            }
            rings.push((0..segments as u32).map(|s| start + s).collect());
        }
    }
    let mut triangles = Vec::new();
    for k in 0..rings.len() - 1 {
        for s in 0..segments {
            let t = (s + 1) % segments;
            let (a, b) = (rings[k][s], rings[k][t]);
            let (c, d) = (rings[k + 1][s], rings[k + 1][t]);
            // Outward for a profile traversed upward.
            for tri in [[a, c, d], [a, d, b]] {
                if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                    triangles.push(tri);
                }
            }
        }
    }
    TriangleMesh::new(positions, triangles)
}

/// Concatenates meshes (no welding).
pub fn merge(meshes: &[TriangleMesh]) -> TriangleMesh {
    let mut out = TriangleMesh::default();
    for m in meshes {
        let base = out.positions.len() as u32;
        out.positions.extend_from_slice(&m.positions);
        out.normals.extend_from_slice(&m.normals);
        out.triangles.extend(m.triangles.iter().map(|t| t.map(|v| v + base)));
    }
    out
}

pub fn translate(mesh: &TriangleMesh, offset: Vec3) -> TriangleMesh {
    let mut out = mesh.clone();
    for p in &mut out.positions {
        *p += offset;
    }
    out
}
