//! Synthetic scenes with known ground truth.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::geometry::{save_obj, TriangleMesh};
use crate::harness::scene::{save_scene, EnvSpec, GroundTruthSpec, MapSpec, OptimizerSpec, SceneDescription, ViewSpec, SCENE_VERSION};
use crate::io;
use crate::lighting::EnvironmentMap;
use crate::math::{Rgb, Vec3};
use crate::optim::Theta;
use crate::renderer::{render, CameraView, RenderSettings, Scene};
use crate::shapes;
use crate::texture::{ReflectanceMaps, TexelGrid};
use crate::uv_atlas::{bake_atlas, write_chart_sidecar, AtlasOptions};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixtureKind {
    LambertianSphere,
    SpecularVase,
    MixedMaterial,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 3] = [FixtureKind::LambertianSphere, FixtureKind::SpecularVase, FixtureKind::MixedMaterial];

    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::LambertianSphere => "lambertian-sphere",
            FixtureKind::SpecularVase => "specular-vase-like",
            FixtureKind::MixedMaterial => "mixed-material",
        }
    }

    pub fn parse(s: &str) -> Option<FixtureKind> {
        FixtureKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sky {
    Noon,
    Morning,
    Evening,
}

impl Sky {
    pub fn name(self) -> &'static str {
        match self {
            Sky::Noon => "noon",
            Sky::Morning => "morning",
            Sky::Evening => "evening",
        }
    }

    pub fn parse(s: &str) -> Option<Sky> {
        [Sky::Noon, Sky::Morning, Sky::Evening].into_iter().find(|k| k.name() == s)
    }

    /// Analytic sky: a horizon-to-zenith gradient, a darker ground and a
    /// sun lobe. The training sky keeps its peak below 1.7 so it is reachable
    /// from a grey start at the default learning rate, and carries a ring of
    /// bright clouds so that specular reflections have structure to show.
    pub fn radiance(self, d: &Vec3) -> Rgb {
        let (sun, sun_color, power, zenith, horizon, ground) = match self {
            Sky::Noon => (
                Vec3::new(0.25, 0.92, 0.3),
                Rgb::new(0.9, 0.85, 0.75),
                8,
                Rgb::new(0.35, 0.5, 0.9),
                Rgb::new(0.8, 0.85, 0.9),
                Rgb::new(0.3, 0.27, 0.22),
            ),
            Sky::Morning => (
                Vec3::new(0.95, 0.25, 0.2),
                Rgb::new(5.0, 3.6, 2.2),
                48,
                Rgb::new(0.4, 0.45, 0.7),
                Rgb::new(0.95, 0.75, 0.55),
                Rgb::new(0.25, 0.2, 0.15),
            ),
            Sky::Evening => (
                Vec3::new(-0.9, 0.18, -0.35),
                Rgb::new(4.5, 2.0, 1.1),
                48,
                Rgb::new(0.25, 0.2, 0.45),
                Rgb::new(0.9, 0.45, 0.3),
                Rgb::new(0.15, 0.12, 0.12),
            ),
        };
        let base = if d.y >= 0.0 {
            let t = d.y.sqrt();
            horizon * (1.0 - t) + zenith * t
        } else {
            let t = (-d.y).sqrt().min(1.0);
            horizon * 0.5 * (1.0 - t) + ground * (0.5 + 0.5 * t)
        };
        let mut l = base + sun_color * d.dot(&sun.normalize()).max(0.0).powi(power);
        if self == Sky::Noon {
            for k in 0..6 {
                let phi = k as f64 * std::f64::consts::TAU / 6.0 + 0.4;
                let y: f64 = [0.15, 0.45][k % 2];
                let r = (1.0 - y * y).sqrt();
                let c = Vec3::new(r * phi.cos(), y, r * phi.sin());
                l += Rgb::repeat(0.6) * d.dot(&c).max(0.0).powi(24);
            }
        }
        l
    }

    pub fn environment(self, width: usize, height: usize) -> EnvironmentMap {
        let mut env = EnvironmentMap::from_fn(width, height, |d| self.radiance(&d));
        env.radiance.quantize_f32();
        env.rebuild_table();
        env
    }
}

/// Rasterizes `f(position, normal)` at the texel centers covered by each
/// triangle of an atlased mesh, then grows values outwards into empty texels
/// so bilinear lookups near chart borders stay representative.
pub fn bake_to_atlas(mesh: &TriangleMesh, resolution: usize, channels: usize, f: impl Fn(&Vec3, &Vec3) -> Vec<f64>) -> Result<TexelGrid> {
    let uvs = mesh.uvs.as_ref().ok_or_else(|| Error::InvalidArgument("mesh has no UV atlas".into()))?;
    let mut grid = TexelGrid::new(resolution, resolution, channels);
    let mut filled = vec![false; resolution * resolution];
    let r = resolution as f64;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = uvs[t];
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        if det == 0.0 {
            continue;
        }
        let lo = |k: usize| ((a[k].min(b[k]).min(c[k]) * r).floor().max(0.0)) as usize;
        let hi = |k: usize| ((a[k].max(b[k]).max(c[k]) * r).ceil() as usize).min(resolution);
        for j in lo(1)..hi(1) {
            for i in lo(0)..hi(0) {
                let q = [(i as f64 + 0.5) / r, (j as f64 + 0.5) / r];
                let w1 = ((q[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (q[1] - a[1])) / det;
                let w2 = ((b[0] - a[0]) * (q[1] - a[1]) - (q[0] - a[0]) * (b[1] - a[1])) / det;
                let w0 = 1.0 - w1 - w2;
                if w0 < -1e-9 || w1 < -1e-9 || w2 < -1e-9 {
                    continue;
                }
                let [p0, p1, p2] = tri.map(|v| mesh.positions[v as usize]);
                let [n0, n1, n2] = tri.map(|v| mesh.normals[v as usize]);
                let p = p0 * w0 + p1 * w1 + p2 * w2;
                let n = (n0 * w0 + n1 * w1 + n2 * w2).normalize();
                let v = f(&p, &n);
                let k = j * resolution + i;
                grid.data[k * channels..(k + 1) * channels].copy_from_slice(&v[..channels]);
                filled[k] = true;
            }
        }
    }
    for _ in 0..4 {
        let snapshot = filled.clone();
        for j in 0..resolution {
            for i in 0..resolution {
                let k = j * resolution + i;
                if snapshot[k] {
                    continue;
                }
                let mut acc = vec![0.0; channels];
                let mut n = 0.0;
                for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let (x, y) = (i as i64 + di, j as i64 + dj);
                    if x < 0 || y < 0 || x >= resolution as i64 || y >= resolution as i64 {
                        continue;
                    }
                    let q = y as usize * resolution + x as usize;
                    if snapshot[q] {
                        for c in 0..channels {
                            acc[c] += grid.get(q, c);
                        }
                        n += 1.0;
                    }
                }
                if n > 0.0 {
                    for c in 0..channels {
                        *grid.get_mut(k, c) = acc[c] / n;
                    }
                    filled[k] = true;
                }
            }
        }
    }
    let n = filled.iter().filter(|&&f| f).count().max(1) as f64;
    for c in 0..channels {
        let mean = (0..filled.len()).filter(|&k| filled[k]).map(|k| grid.get(k, c)).sum::<f64>() / n;
        for k in (0..filled.len()).filter(|&k| !filled[k]) {
            *grid.get_mut(k, c) = mean;
        }
    }
    Ok(grid)
}

fn soft_checker(p: &Vec3) -> f64 {
    (4.0 * (2.2 * p.x).sin() * (2.2 * p.y + 0.5).sin() * (2.2 * p.z + 1.0).sin()).tanh()
}

fn smoothstep(x: f64) -> f64 {
    let t = x.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn gt_diffuse(p: &Vec3) -> Vec<f64> {
    let c = soft_checker(p);
    let w = 0.08 * (3.0 * p.x + 2.0 * p.z).sin();
    vec![0.55 + 0.22 * c + w, 0.45 + 0.17 * c + w, 0.35 + 0.12 * c - w]
}

/// Ground-truth reflectance for a fixture kind on an atlased mesh.
pub fn ground_truth_maps(kind: FixtureKind, mesh: &TriangleMesh, resolution: usize) -> Result<ReflectanceMaps> {
    let (diffuse, specular, roughness): (
        Box<dyn Fn(&Vec3) -> Vec<f64>>,
        Box<dyn Fn(&Vec3) -> Vec<f64>>,
        Box<dyn Fn(&Vec3) -> Vec<f64>>,
    ) = match kind {
        FixtureKind::LambertianSphere => (Box::new(gt_diffuse), Box::new(|_| vec![0.0; 3]), Box::new(|_| vec![0.5])),
        FixtureKind::SpecularVase => (
            Box::new(|p| {
                let v = 0.2 + 0.06 * (2.5 * p.y).sin();
                vec![v, 0.8 * v, 0.6 * v]
            }),
            Box::new(|p| vec![0.35 + 0.15 * smoothstep(0.5 + 0.5 * (5.0 * p.y).sin()); 3]),
            Box::new(|p| vec![0.12 + 0.1 * smoothstep(0.5 + 0.5 * (3.0 * p.y + 1.0).sin())]),
        ),
        FixtureKind::MixedMaterial => (
            Box::new(|p| gt_diffuse(p).iter().map(|v| 0.85 * v).collect()),
            Box::new(|p| vec![0.04 + 0.21 * smoothstep(0.5 + 0.8 * (4.0 * p.y).sin()); 3]),
            Box::new(|p| vec![0.25 + 0.3 * (0.5 + 0.5 * (3.0 * p.x + 2.0 * p.z).sin())]),
        ),
    };
    let mut maps = ReflectanceMaps {
        diffuse: bake_to_atlas(mesh, resolution, 3, |p, _| diffuse(p))?,
        specular: bake_to_atlas(mesh, resolution, 3, |p, _| specular(p))?,
        roughness: bake_to_atlas(mesh, resolution, 1, |p, _| roughness(p))?,
    };
    maps.quantize_f32();
    Ok(maps)
}

pub fn fixture_mesh(kind: FixtureKind) -> TriangleMesh {
    match kind {
        FixtureKind::LambertianSphere | FixtureKind::MixedMaterial => shapes::uv_sphere(24, 48, 1.0),
        FixtureKind::SpecularVase => {
            let profile = [
                (0.0, -1.0),
                (0.45, -1.0),
                (0.68, -0.85),
                (0.8, -0.55),
                (0.82, -0.2),
                (0.72, 0.15),
                (0.5, 0.45),
                (0.36, 0.68),
                (0.4, 0.88),
                (0.0, 0.9),
            ];
            shapes::revolve(&profile, 48)
        }
    }
}

/// `n` cameras on a view sphere (golden-angle spiral, avoiding the poles),
/// all looking at the origin.
pub fn view_sphere(n: usize, size: usize, distance: f64, fov_deg: f64) -> Vec<CameraView> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let y = 0.9 - 1.8 * (k as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * k as f64;
            let eye = Vec3::new(r * phi.cos(), y, r * phi.sin()) * distance;
            CameraView::look_at(k as u32, size, size, fov_deg, eye, Vec3::zeros(), Vec3::y())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureOptions {
    pub n_views: usize,
    pub seed: u64,
    pub image_size: usize,
    pub map_resolution: usize,
    pub env_height: usize,
    pub target_spp: u32,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        FixtureOptions {
            n_views: 16,
            seed: 0,
            image_size: 64,
            map_resolution: 256,
            env_height: 32,
            target_spp: 1024,
        }
    }
}

/// Seed used for target images, kept apart from training seeds and
/// representable in a scene file.
pub fn target_seed(seed: u64) -> u64 {
    (seed ^ 0x5EED_0000_0000) & i64::MAX as u64
}

/// Writes a complete synthetic scene into `dir` and returns its description.
///
/// Layout: `scene.toml`, `mesh.obj` (+ `mesh.charts`), `gt/` with the
/// ground-truth maps and training sky, `skies/` with relighting skies and
/// `views/` with the target EXRs.
pub fn make_fixture(kind: FixtureKind, opts: &FixtureOptions, dir: &Path) -> Result<SceneDescription> {
    if opts.n_views == 0 {
        return Err(Error::InvalidArgument("fixture needs at least one view".into()));
    }
    std::fs::create_dir_all(dir.join("views")).map_err(|e| Error::io(dir, e))?;
    let atlas_opts = AtlasOptions {
        resolution: opts.map_resolution,
        ..AtlasOptions::default()
    };
    let (mesh, _) = bake_atlas(&fixture_mesh(kind), &atlas_opts)?;
    save_obj(&mesh, dir.join("mesh.obj"))?;
    write_chart_sidecar(&mesh, dir.join("mesh.charts"))?;
    // Rendering uses the mesh exactly as a reader of the OBJ will see it.
    let (mesh, _) = crate::geometry::load_mesh(dir.join("mesh.obj"))?;
    let scene = Scene::new(mesh)?;

    let (eh, ew) = (opts.env_height, 2 * opts.env_height);
    let gt = Theta {
        maps: ground_truth_maps(kind, &scene.mesh, opts.map_resolution)?,
        env: Sky::Noon.environment(ew, eh),
    };
    io::save_theta(&gt, &dir.join("gt"))?;
    let mut relight = Vec::new();
    for sky in [Sky::Morning, Sky::Evening] {
        let rel = PathBuf::from("skies").join(format!("{}.exr", sky.name()));
        io::write_exr(&sky.environment(ew, eh).radiance, dir.join(&rel))?;
        relight.push(rel);
    }

    let settings = RenderSettings {
        spp: opts.target_spp,
        seed: target_seed(opts.seed),
        max_bounces: 2,
    };
    let mut views = Vec::new();
    for camera in view_sphere(opts.n_views, opts.image_size, 5.0, 60.0) {
        let img = render(&scene, &camera, &gt.maps, &gt.env, &settings)?;
        let rel = PathBuf::from("views").join(format!("view_{:03}.exr", camera.id));
        io::write_exr(&img.rgb, dir.join(&rel))?;
        views.push(ViewSpec::from_camera(&camera, rel));
    }

    let desc = SceneDescription {
        version: SCENE_VERSION,
        mesh: "mesh.obj".into(),
        seed: opts.seed,
        maps: MapSpec {
            resolution: opts.map_resolution,
        },
        environment: EnvSpec {
            path: None,
            trainable: true,
            width: ew,
            height: eh,
        },
        optimizer: OptimizerSpec {
            background: true,
            ..OptimizerSpec::default()
        },
        views,
        ground_truth: Some(GroundTruthSpec {
            dir: "gt".into(),
            target_spp: opts.target_spp,
            target_seed: settings.seed,
            relight,
        }),
        base_dir: dir.to_path_buf(),
    };
    save_scene(&desc, dir.join("scene.toml"))?;
    Ok(desc)
}
