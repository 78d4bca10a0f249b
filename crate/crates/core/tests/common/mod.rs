#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2};
use svbrdf::geometry::TriangleMesh;
use svbrdf::lighting::EnvironmentMap;
use svbrdf::math::{Rgb, Vec3};
use svbrdf::renderer::{CameraView, Scene};
use svbrdf::shapes;
use svbrdf::texture::{ReflectanceMaps, TexelGrid};
use svbrdf::uv_atlas::{bake_atlas, segment_charts, AtlasOptions, Chart};

pub fn atlased(mesh: &TriangleMesh, resolution: usize) -> Scene {
    let opts = AtlasOptions {
        resolution,
        ..AtlasOptions::default()
    };
    let (mesh, _) = bake_atlas(mesh, &opts).unwrap();
    Scene::new(mesh).unwrap()
}

pub fn sphere_scene(resolution: usize) -> Scene {
    atlased(&shapes::uv_sphere(24, 48, 1.0), resolution)
}

/// Cameras on a ring around the origin, alternating above and below the
/// equator.
pub fn ring(n: usize, size: usize, distance: f64) -> Vec<CameraView> {
    (0..n)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let y = if k % 2 == 0 { 0.4 } else { -0.3 };
            let eye = Vec3::new(phi.cos(), y, phi.sin()).normalize() * distance;
            CameraView::look_at(k as u32, size, size, 40.0, eye, Vec3::zeros(), Vec3::y())
        })
        .collect()
}

pub fn sky(width: usize) -> EnvironmentMap {
    EnvironmentMap::from_fn(width, width / 2, |d| {
        let sun = (d.dot(&Vec3::new(0.3, 0.8, 0.5).normalize())).max(0.0).powi(8) * 4.0;
        let base = 0.4 + 0.4 * d.y.max(-0.5);
        Rgb::new(base + sun, base * 0.9 + sun, base * 1.1 + 0.8 * sun)
    })
}

/// Smooth, clearly varying reflectance maps.
pub fn textured_maps(resolution: usize, specular: f64) -> ReflectanceMaps {
    let n = resolution as f64;
    let f = |i: usize, j: usize| ((i as f64 / n * 6.0).sin() * (j as f64 / n * 5.0).cos(), (i + j) as f64 / (2.0 * n));
    ReflectanceMaps {
        diffuse: TexelGrid::from_fn(resolution, resolution, 3, |i, j, c| {
            let (a, b) = f(i, j);
            0.45 + 0.3 * a * [1.0, -0.5, 0.3][c] + 0.1 * b
        }),
        specular: TexelGrid::from_fn(resolution, resolution, 3, |i, j, _| specular * (0.5 + 0.5 * f(i, j).1)),
        roughness: TexelGrid::from_fn(resolution, resolution, 1, |i, j, _| 0.25 + 0.5 * f(i, j).1),
    }
}

pub fn covered_mean(img: &svbrdf::renderer::RenderImage) -> Rgb {
    let mut acc = Rgb::zeros();
    for p in 0..img.mask.len() {
        if img.mask[p] {
            acc += img.pixel(p);
        }
    }
    acc / img.covered() as f64
}

/// Pixels whose whole footprint lies on the mesh.
pub fn interior(scene: &Scene, view: &CameraView) -> Vec<bool> {
    (0..view.width * view.height)
        .map(|p| {
            let (x, y) = ((p % view.width) as f64, (p / view.width) as f64);
            [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.5)]
                .iter()
                .all(|(dx, dy)| scene.intersect(&view.ray(x + dx, y + dy)).is_some())
        })
        .collect()
}

pub fn single_chart(mesh: &TriangleMesh) -> Chart {
    let charts = segment_charts(mesh, 360.0);
    assert_eq!(charts.len(), 1);
    charts.into_iter().next().unwrap()
}

/// Residual vector of the conformal energy, assembled from per-triangle
/// Jacobians (an independent route to the same energy).
pub fn dense_residual_matrix(mesh: &TriangleMesh, chart: &Chart) -> DMatrix<f64> {
    let nv = chart.vertices.len();
    let mut m = DMatrix::zeros(2 * chart.triangles.len(), 2 * nv);
    for (k, &t) in chart.triangles.iter().enumerate() {
        let [p0, p1, p2] = mesh.corners(t);
        let ex = (p1 - p0).normalize();
        let ey = (p1 - p0).cross(&(p2 - p0)).cross(&ex).normalize();
        let x = [[0.0, 0.0], [(p1 - p0).dot(&ex), (p1 - p0).dot(&ey)], [(p2 - p0).dot(&ex), (p2 - p0).dot(&ey)]];
        let area = 0.5 * (p1 - p0).cross(&(p2 - p0)).norm();
        let dx = Matrix2::new(x[1][0] - x[0][0], x[2][0] - x[0][0], x[1][1] - x[0][1], x[2][1] - x[0][1]);
        let inv = dx.try_inverse().unwrap();
        // Residual is linear in the UVs: probe one unknown at a time.
        for corner in 0..3 {
            for comp in 0..2 {
                let mut uv = [[0.0; 2]; 3];
                uv[corner][comp] = 1.0;
                let du = Matrix2::new(uv[1][0] - uv[0][0], uv[2][0] - uv[0][0], uv[1][1] - uv[0][1], uv[2][1] - uv[0][1]);
                let j = du * inv; // rows: u, v; cols: d/dx, d/dy
                let (ux, uy, vx, vy) = (j[(0, 0)], j[(0, 1)], j[(1, 0)], j[(1, 1)]);
                let s = 0.5 * area.sqrt();
                let col = 2 * chart.local[k][corner] + comp;
                m[(2 * k, col)] += s * (ux - vy);
                m[(2 * k + 1, col)] += s * (vx + uy);
            }
        }
    }
    m
}

pub fn dense_lscm(mesh: &TriangleMesh, chart: &Chart) -> (Vec<[f64; 2]>, f64) {
    let pins = chart.pins.unwrap();
    let m = dense_residual_matrix(mesh, chart);
    let nv = chart.vertices.len();
    let is_pin = |v: usize| pins.iter().any(|p| p.0 == v);
    let free: Vec<usize> = (0..nv).filter(|&v| !is_pin(v)).collect();
    let mut a = DMatrix::zeros(m.nrows(), 2 * free.len());
    for (c, &v) in free.iter().enumerate() {
        a.set_column(2 * c, &m.column(2 * v));
        a.set_column(2 * c + 1, &m.column(2 * v + 1));
    }
    let mut b = DVector::zeros(m.nrows());
    for (v, p) in pins {
        b -= m.column(2 * v) * p[0] + m.column(2 * v + 1) * p[1];
    }
    let ata = a.transpose() * &a;
    let atb = a.transpose() * &b;
    let x = ata.cholesky().expect("normal matrix is SPD").solve(&atb);
    let mut coords = vec![[0.0; 2]; nv];
    for (c, &v) in free.iter().enumerate() {
        coords[v] = [x[2 * c], x[2 * c + 1]];
    }
    for (v, p) in pins {
        coords[v] = p;
    }
    let r = &a * &x - &b;
    (coords, r.norm_squared())
}
