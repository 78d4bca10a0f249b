mod common;

use common::*;
use svbrdf::lighting::EnvironmentMap;
use svbrdf::math::{Rgb, Vec3};
use svbrdf::renderer::*;
use svbrdf::shapes;
use svbrdf::texture::ReflectanceMaps;

fn settings(spp: u32, seed: u64) -> RenderSettings {
    RenderSettings {
        spp,
        seed,
        max_bounces: 2,
    }
}

#[test]
fn furnace() {
    let scene = sphere_scene(64);
    let view = &ring(1, 24, 4.0)[0];
    let maps = ReflectanceMaps::uniform(64, Rgb::repeat(0.5), Rgb::zeros(), 0.5);
    let env = EnvironmentMap::constant(16, 8, Rgb::repeat(1.0));
    let img = render(&scene, view, &maps, &env, &settings(1024, 3)).unwrap();
    let inner = interior(&scene, view);
    let mut sum = 0.0;
    let mut n = 0;
    for p in 0..inner.len() {
        if inner[p] {
            let v = img.pixel(p);
            assert!((v - Rgb::repeat(0.5)).amax() < 0.02, "pixel {p}: {v:?}");
            sum += v.sum() / 3.0;
            n += 1;
        }
    }
    assert!(n > 100);
    assert!((sum / n as f64 - 0.5).abs() < 0.005);
    for p in [0, 23, 24 * 23, 24 * 24 - 1] {
        assert_eq!(img.pixel(p), Rgb::repeat(1.0));
    }
}

#[test]
fn black_environment_is_black() {
    let scene = sphere_scene(32);
    let view = &ring(1, 16, 4.0)[0];
    let maps = textured_maps(32, 0.3);
    let env = EnvironmentMap::constant(16, 8, Rgb::zeros());
    let img = render(&scene, view, &maps, &env, &settings(16, 1)).unwrap();
    assert!(img.covered() > 0);
    assert!(img.rgb.data.iter().all(|&v| v == 0.0));
}

#[test]
fn low_spp_agrees_with_reference() {
    let scene = sphere_scene(64);
    let view = &ring(1, 12, 4.0)[0];
    let maps = textured_maps(64, 0.2);
    let env = sky(32);
    let reference = render(&scene, view, &maps, &env, &settings(4096, 99)).unwrap();
    let runs: Vec<RenderImage> = (0..8).map(|s| render(&scene, view, &maps, &env, &settings(16, s)).unwrap()).collect();
    let mut checked = 0;
    let mut inside = 0;
    for p in 0..reference.mask.len() {
        if !reference.mask[p] {
            continue;
        }
        for c in 0..3 {
            let vals: Vec<f64> = runs.iter().map(|r| r.pixel(p)[c]).collect();
            let mean = vals.iter().sum::<f64>() / 8.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 7.0;
            // Standard error of one 16-spp estimate, plus the reference's.
            let sigma = (var * (1.0 + 16.0 / 4096.0)).sqrt().max(1e-9);
            checked += 1;
            inside += vals.iter().filter(|v| (*v - reference.pixel(p)[c]).abs() <= 3.0 * sigma).count();
        }
    }
    let frac = inside as f64 / (8 * checked) as f64;
    assert!(frac > 0.97, "{frac}");
    // The means themselves must not be biased.
    let mut bias = 0.0;
    for p in 0..reference.mask.len() {
        if reference.mask[p] {
            let m: Rgb = runs.iter().map(|r| r.pixel(p)).sum::<Rgb>() / 8.0;
            bias += (m - reference.pixel(p)).sum();
        }
    }
    let mean_ref = covered_mean(&reference).sum();
    assert!((bias / reference.covered() as f64).abs() < 0.01 * mean_ref);
}

#[test]
fn deterministic_across_threads() {
    let scene = sphere_scene(32);
    let view = &ring(3, 20, 4.0)[1];
    let maps = textured_maps(32, 0.3);
    let env = sky(16);
    let a = with_threads(1, || render(&scene, view, &maps, &env, &settings(8, 5)).unwrap());
    let b = with_threads(4, || render(&scene, view, &maps, &env, &settings(8, 5)).unwrap());
    assert_eq!(a, b);
    let c = render(&scene, view, &maps, &env, &settings(8, 6)).unwrap();
    assert_ne!(a.rgb, c.rgb);
}

#[test]
fn linear_in_albedo() {
    let scene = sphere_scene(32);
    let view = &ring(1, 16, 4.0)[0];
    let maps = textured_maps(32, 0.0);
    let mut scaled = maps.clone();
    scaled.diffuse.map_inplace(|v| 0.5 * v);
    let env = sky(16);
    let s = RenderSettings {
        spp: 8,
        seed: 2,
        max_bounces: 1,
    };
    let a = render(&scene, view, &maps, &env, &s).unwrap();
    let b = render(&scene, view, &scaled, &env, &s).unwrap();
    let inner = interior(&scene, view);
    for p in 0..a.mask.len() {
        if inner[p] {
            let (x, y) = (a.pixel(p), b.pixel(p));
            assert!((x * 0.5 - y).amax() <= 1e-12 * x.amax().max(1e-300), "{x:?} {y:?}");
        }
    }
}

#[test]
fn strategies_agree() {
    let scene = sphere_scene(32);
    let view = &ring(1, 12, 4.0)[0];
    let maps = textured_maps(32, 0.2);
    let env = sky(32);
    let estimate = |strategy| {
        let means: Vec<Rgb> = (0..6)
            .map(|s| {
                let img = render_with(&scene, view, &maps, &maps, &env, &settings(64, 10 + s), strategy).unwrap();
                covered_mean(&img)
            })
            .collect();
        let m = means.iter().sum::<Rgb>() / 6.0;
        let var = means.iter().map(|x| (x - m).norm_squared()).sum::<f64>() / 5.0;
        (m, (var / 6.0).sqrt())
    };
    let (mis, e0) = estimate(Strategy::Mis);
    for s in [Strategy::LightOnly, Strategy::BrdfOnly] {
        let (m, e) = estimate(s);
        let tol = 4.0 * (e0 * e0 + e * e).sqrt() + 1e-3;
        assert!((m - mis).norm() < tol, "{s:?}: {m:?} vs {mis:?} (tol {tol})");
    }
}

#[test]
fn plane_coverage_front_and_back() {
    let front = shapes::plane_grid(4, 4, 1.0, 1.0);
    let mut back = shapes::translate(&front, Vec3::new(0.0, 0.0, -0.2));
    for t in &mut back.triangles {
        t.swap(1, 2);
    }
    back.compute_normals();
    let scene = atlased(&shapes::merge(&[front.clone(), back]), 64);
    let view = CameraView::look_at(0, 32, 32, 60.0, Vec3::new(0.5, 0.5, 1.5), Vec3::new(0.5, 0.5, 0.0), Vec3::y());
    let s = settings(16, 0);
    let counts = texel_coverage(&scene, std::slice::from_ref(&view), 64, 64, &s).unwrap();
    let ids = scene.mesh.chart_ids.as_ref().unwrap();
    let uvs = scene.mesh.uvs.as_ref().unwrap();
    let texel = |t: usize| {
        let c = (0..3).fold([0.0; 2], |a, k| [a[0] + uvs[t][k][0] / 3.0, a[1] + uvs[t][k][1] / 3.0]);
        (c[1] * 64.0) as usize * 64 + (c[0] * 64.0) as usize
    };
    for t in 0..scene.mesh.num_triangles() {
        let expected = if t < front.num_triangles() { 1 } else { 0 };
        assert_eq!(counts[texel(t)], expected, "triangle {t} chart {}", ids[t]);
    }
    let twice = texel_coverage(&scene, &[view.clone(), view], 64, 64, &s).unwrap();
    assert!(twice.iter().zip(&counts).all(|(a, b)| *a == 2 * *b));
}

/// Z-buffer rasterization of the mesh at the renderer's primary sample
/// positions; every front-facing visible sample marks its bilinear texels.
fn raster_coverage(scene: &Scene, view: &CameraView, res: usize, s: &RenderSettings) -> Vec<bool> {
    let (w, h) = (view.width, view.height);
    let spp = s.spp as usize;
    let samples: Vec<[f64; 2]> = (0..w * h)
        .flat_map(|p| {
            (0..s.spp).map(move |k| {
                let o = primary_offset(s, view.id, p, k);
                [(p % w) as f64 + o[0], (p / w) as f64 + o[1]]
            })
        })
        .collect();
    let mut depth = vec![f64::INFINITY; samples.len()];
    let mut hit: Vec<Option<(usize, [f64; 3])>> = vec![None; samples.len()];
    let rot_t = view.rotation().transpose();
    let tf = (view.fov_deg.to_radians() / 2.0).tan();
    let aspect = w as f64 / h as f64;
    for t in 0..scene.mesh.num_triangles() {
        let cam = scene.mesh.corners(t).map(|p| rot_t * (p - view.position()));
        if cam.iter().any(|c| c.z >= 0.0) {
            continue;
        }
        let scr = cam.map(|c| {
            let z = -c.z;
            [(c.x / z / (tf * aspect) + 1.0) * 0.5 * w as f64, (1.0 - c.y / z / tf) * 0.5 * h as f64, z]
        });
        let edge = |a: [f64; 3], b: [f64; 3], p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let area = edge(scr[0], scr[1], [scr[2][0], scr[2][1]]);
        if area == 0.0 {
            continue;
        }
        let x0 = scr.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let x1 = (scr.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize).min(w);
        let y0 = scr.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let y1 = (scr.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize).min(h);
        for py in y0..y1 {
            for px in x0..x1 {
                for k in 0..spp {
                    let i = (py * w + px) * spp + k;
                    let q = samples[i];
                    let l = [edge(scr[1], scr[2], q) / area, edge(scr[2], scr[0], q) / area, edge(scr[0], scr[1], q) / area];
                    if l.iter().any(|&v| v < 0.0) {
                        continue;
                    }
                    let inv: f64 = (0..3).map(|m| l[m] / scr[m][2]).sum();
                    let z = 1.0 / inv;
                    if z < depth[i] {
                        depth[i] = z;
                        hit[i] = Some((t, [0, 1, 2].map(|m| l[m] / scr[m][2] * z)));
                    }
                }
            }
        }
    }
    let uvs = scene.mesh.uvs.as_ref().unwrap();
    let mut seen = vec![false; res * res];
    for (t, b) in hit.into_iter().flatten() {
        let p0 = scene.mesh.corners(t)[0];
        if scene.mesh.face_normal(t).dot(&(view.position() - p0)) <= 0.0 {
            continue;
        }
        let uv = (0..3).fold([0.0; 2], |a, m| [a[0] + b[m] * uvs[t][m][0], a[1] + b[m] * uvs[t][m][1]]);
        let (fp, _) = svbrdf::texture::footprint(res, res, uv, false);
        for m in 0..4 {
            if fp.weights[m] > 0.0 {
                seen[fp.texels[m]] = true;
            }
        }
    }
    seen
}

#[test]
fn sphere_coverage_matches_raster_oracle() {
    let res = 64;
    let scene = sphere_scene(res);
    let views = ring(16, 64, 4.0);
    let s = settings(4, 0);
    let counts = texel_coverage(&scene, &views, res, res, &s).unwrap();
    let mut oracle = vec![0u32; res * res];
    for v in &views {
        for (o, seen) in oracle.iter_mut().zip(raster_coverage(&scene, v, res, &s)) {
            *o += seen as u32;
        }
    }
    let agree = oracle.iter().zip(&counts).filter(|(a, b)| a == b).count();
    assert!(agree as f64 >= 0.99 * oracle.len() as f64, "{agree}/{}", oracle.len());
    assert!(counts.iter().filter(|&&c| c > 0).count() > oracle.len() / 4);
}

#[test]
fn rejects_bad_settings() {
    let scene = sphere_scene(16);
    let view = &ring(1, 8, 4.0)[0];
    let maps = textured_maps(16, 0.0);
    let env = sky(8);
    assert!(render(&scene, view, &maps, &env, &settings(0, 0)).is_err());
    let mut bad = view.clone();
    bad.fov_deg = 180.0;
    assert!(render(&scene, &bad, &maps, &env, &settings(1, 0)).is_err());
    bad = view.clone();
    bad.camera_to_world[0] = 2.0;
    assert!(render(&scene, &bad, &maps, &env, &settings(1, 0)).is_err());
}
