//! Least-squares conformal maps.
//!
//! Each triangle contributes the complex residual `sum_j a_j U_j`, where
//! `U_j = u_j + i v_j` and `a_j = e_j / (4 sqrt(A))` with `e_j` the
//! triangle's edge opposite corner `j` in its own isometric 2D frame. The
//! residual is `sqrt(A)` times the Cauchy-Riemann defect `dU/dz-bar`, so the
//! summed squared residual is `sum_T A_T |dU/dz-bar|^2`. Two pinned
//! vertices remove the similarity null space.

use super::sparse::{pcg, CsrMatrix};
use super::topology::SubsetTopology;
use super::Chart;
use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;

pub const CG_TOLERANCE: f64 = 1e-10;

/// Per-triangle complex coefficients `(re, im)` for the three corners.
pub(crate) fn triangle_coefficients(mesh: &TriangleMesh, tri: usize) -> Option<[[f64; 2]; 3]> {
    let [p0, p1, p2] = mesh.corners(tri);
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let l1 = e1.norm();
    let normal = e1.cross(&e2);
    let area = 0.5 * normal.norm();
    if l1 == 0.0 || area == 0.0 {
        return None;
    }
    let x = e1 / l1;
    let y = normal.cross(&x).normalize();
    let z = [[0.0, 0.0], [l1, 0.0], [e2.dot(&x), e2.dot(&y)]];
    let s = 1.0 / (4.0 * area.sqrt());
    let mut a = [[0.0; 2]; 3];
    for j in 0..3 {
        let from = z[(j + 1) % 3];
        let to = z[(j + 2) % 3];
        a[j] = [(to[0] - from[0]) * s, (to[1] - from[1]) * s];
    }
    Some(a)
}

/// Conformal energy of a chart for the given per-local-vertex coordinates.
pub fn conformal_energy(mesh: &TriangleMesh, chart: &Chart, coords: &[[f64; 2]]) -> f64 {
    let mut e = 0.0;
    for (k, &t) in chart.triangles.iter().enumerate() {
        let Some(a) = triangle_coefficients(mesh, t) else { continue };
        let (mut re, mut im) = (0.0, 0.0);
        for j in 0..3 {
            let [u, v] = coords[chart.local[k][j]];
            re += a[j][0] * u - a[j][1] * v;
            im += a[j][1] * u + a[j][0] * v;
        }
        e += re * re + im * im;
    }
    e
}

/// Picks the pins: the boundary vertex farthest from the boundary centroid,
/// and the boundary vertex farthest from it along the boundary loop.
/// Returns local vertex indices.
pub fn choose_pins(mesh: &TriangleMesh, chart: &Chart) -> Result<[usize; 2]> {
    let topo = SubsetTopology::of(mesh, &chart.triangles);
    let Some(boundary) = topo.loops.iter().max_by_key(|l| l.len()) else {
        return Err(Error::Parameterization {
            chart: chart.id,
            msg: "chart has no boundary".into(),
        });
    };
    let pos = |v: u32| mesh.positions[v as usize];
    let centroid = boundary.iter().map(|&v| pos(v)).sum::<crate::math::Vec3>() / boundary.len() as f64;
    let start = (0..boundary.len())
        .max_by(|&a, &b| {
            (pos(boundary[a]) - centroid)
                .norm()
                .total_cmp(&(pos(boundary[b]) - centroid).norm())
                .then(b.cmp(&a))
        })
        .unwrap();
    let n = boundary.len();
    let mut arc = vec![0.0; n + 1];
    for k in 0..n {
        let a = boundary[(start + k) % n];
        let b = boundary[(start + k + 1) % n];
        arc[k + 1] = arc[k] + (pos(b) - pos(a)).norm();
    }
    let perimeter = arc[n];
    let mut best = (f64::NEG_INFINITY, 1);
    for (k, &s) in arc.iter().enumerate().take(n).skip(1) {
        let d = s.min(perimeter - s);
        if d > best.0 {
            best = (d, k);
        }
    }
    let v0 = boundary[start];
    let v1 = boundary[(start + best.1) % n];
    Ok([chart.local_of(v0), chart.local_of(v1)])
}

/// Solves for the chart's 2D coordinates. Pins land exactly at `(0, 0)` and
/// `(1, 0)`.
pub fn lscm_parameterize(mesh: &TriangleMesh, chart: &mut Chart) -> Result<()> {
    let pins = choose_pins(mesh, chart)?;
    lscm_with_pins(mesh, chart, [(pins[0], [0.0, 0.0]), (pins[1], [1.0, 0.0])])
}

/// Assembles the real least-squares system: rows, free-unknown map and the
/// pinned right-hand side.
pub(crate) struct LscmSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Column index of local vertex `v`'s u coordinate, or `None` if pinned.
    pub column: Vec<Option<usize>>,
}

pub(crate) fn assemble(mesh: &TriangleMesh, chart: &Chart, pins: &[(usize, [f64; 2]); 2]) -> Result<LscmSystem> {
    let nv = chart.vertices.len();
    let mut column = vec![None; nv];
    let mut next = 0;
    for (v, col) in column.iter_mut().enumerate() {
        if pins.iter().all(|p| p.0 != v) {
            *col = Some(next);
            next += 2;
        }
    }
    let pinned = |v: usize| pins.iter().find(|p| p.0 == v).map(|p| p.1);

    let mut triplets = Vec::new();
    let mut rhs = Vec::new();
    let mut row = 0;
    for (k, &t) in chart.triangles.iter().enumerate() {
        let Some(a) = triangle_coefficients(mesh, t) else { continue };
        let (mut b_re, mut b_im) = (0.0, 0.0);
        for j in 0..3 {
            let v = chart.local[k][j];
            let (p, q) = (a[j][0], a[j][1]);
            match column[v] {
                Some(c) => {
                    triplets.push((row, c, p));
                    triplets.push((row, c + 1, -q));
                    triplets.push((row + 1, c, q));
                    triplets.push((row + 1, c + 1, p));
                }
                None => {
                    let [u, w] = pinned(v).unwrap();
                    b_re -= p * u - q * w;
                    b_im -= q * u + p * w;
                }
            }
        }
        rhs.push(b_re);
        rhs.push(b_im);
        row += 2;
    }
    if row == 0 {
        return Err(Error::Parameterization {
            chart: chart.id,
            msg: "all triangles are degenerate".into(),
        });
    }
    Ok(LscmSystem {
        matrix: CsrMatrix::from_triplets(row, next, triplets),
        rhs,
        column,
    })
}

pub fn lscm_with_pins(mesh: &TriangleMesh, chart: &mut Chart, pins: [(usize, [f64; 2]); 2]) -> Result<()> {
    if pins[0].0 == pins[1].0 {
        return Err(Error::Parameterization {
            chart: chart.id,
            msg: "pins coincide".into(),
        });
    }
    let sys = assemble(mesh, chart, &pins)?;
    let n = sys.matrix.cols;
    let normal = sys.matrix.normal_matrix();
    if normal.diagonal().iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Parameterization {
            chart: chart.id,
            msg: "singular system: a vertex touches only degenerate triangles".into(),
        });
    }
    let mut atb = vec![0.0; n];
    sys.matrix.transpose_mul_vec(&sys.rhs, &mut atb);
    let mut x = vec![0.0; n];
    let outcome = pcg(&normal, &atb, &mut x, CG_TOLERANCE, 20 * n + 1000);
    if !outcome.converged || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameterization {
            chart: chart.id,
            msg: format!(
                "conjugate gradient stalled at relative residual {:.3e} after {} iterations",
                outcome.relative_residual, outcome.iterations
            ),
        });
    }
    chart.coords = (0..chart.vertices.len())
        .map(|v| match sys.column[v] {
            Some(c) => [x[c], x[c + 1]],
            None => pins.iter().find(|p| p.0 == v).unwrap().1,
        })
        .collect();
    chart.pins = Some(pins);
    Ok(())
}

/// Per-triangle angle distortion: the largest absolute difference between
/// a corner angle in 3D and in the chart's 2D coordinates (radians).
pub fn angle_distortion(mesh: &TriangleMesh, chart: &Chart) -> Vec<f64> {
    chart
        .triangles
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let p = mesh.corners(t);
            let q = chart.local[k].map(|v| chart.coords[v]);
            (0..3)
                .map(|j| {
                    let a3 = (p[(j + 1) % 3] - p[j]).angle(&(p[(j + 2) % 3] - p[j]));
                    let a2 = angle_2d(q[j], q[(j + 1) % 3], q[(j + 2) % 3]);
                    (a3 - a2).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

fn angle_2d(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let u = [a[0] - o[0], a[1] - o[1]];
    let v = [b[0] - o[0], b[1] - o[1]];
    let cross = u[0] * v[1] - u[1] * v[0];
    let dot = u[0] * v[0] + u[1] * v[1];
    cross.abs().atan2(dot)
}

/// Signed 2D area of each chart triangle; positive means not flipped.
pub fn signed_areas(chart: &Chart) -> Vec<f64> {
    chart
        .local
        .iter()
        .map(|tri| {
            let [a, b, c] = tri.map(|v| chart.coords[v]);
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        })
        .collect()
}
