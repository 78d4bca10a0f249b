//! Forward Monte-Carlo path tracer.
//!
//! Each pixel averages `spp` stratified primary samples. At every hit the
//! environment is sampled directly (shadow-ray tested) and combined with a
//! BRDF sample through the power heuristic; the BRDF sample also continues
//! the path until `max_bounces` hits have been shaded. All randomness comes
//! from a counter-based stream addressed by (seed, view, pixel, sample), so
//! the gradient pass can replay any path exactly.
//!
//! Sampling decisions (lobe choice, half-vector draws, MIS densities) are
//! taken from a *guide* set of reflectance maps, which defaults to the maps
//! being rendered. Holding the guide fixed while perturbing the maps makes
//! the estimator a smooth function of the parameters at a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geometry::{shading_frame, Bvh, Hit, Ray, TriangleMesh};
use crate::lighting::EnvironmentMap;
use crate::math::{power_heuristic, Rgb, Vec3};
use crate::reflectance::{brdf_param_derivatives, brdf_pdf, eval_brdf, sample_brdf};
use crate::texture::{Footprint, ReflectanceMaps, TexelGrid};
use crate::{Error, Result};

/// Environment variable that caps the number of worker threads.
pub const THREADS_ENV: &str = "SVBRDF_THREADS";

const TILE: usize = 16;
const WORDS_PER_SAMPLE: u128 = 256;
pub const MAX_BOUNCES: u32 = 16;

/// A pinhole camera. Camera space looks down -Z with +Y up; the transform
/// maps camera space to world space and is stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraView {
    pub id: u32,
    pub width: usize,
    pub height: usize,
    /// Vertical field of view in degrees.
    pub fov_deg: f64,
    pub camera_to_world: [f64; 16],
    /// Target image path, when the view carries an observation.
    pub target: Option<std::path::PathBuf>,
}

impl CameraView {
    pub fn look_at(id: u32, width: usize, height: usize, fov_deg: f64, eye: Vec3, at: Vec3, up: Vec3) -> CameraView {
        let back = (eye - at).normalize();
        let right = up.cross(&back).normalize();
        let up = back.cross(&right);
        let m = [
            right.x, up.x, back.x, eye.x,
            right.y, up.y, back.y, eye.y,
            right.z, up.z, back.z, eye.z,
            0.0, 0.0, 0.0, 1.0,
        ];
        CameraView {
            id,
            width,
            height,
            fov_deg,
            camera_to_world: m,
            target: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument(format!("view {}: empty image size", self.id)));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::InvalidArgument(format!("view {}: fov {} outside (0, 180)", self.id, self.fov_deg)));
        }
        let r = self.rotation();
        let err = (r.transpose() * r - nalgebra::Matrix3::identity()).amax();
        if !(err <= 1e-6) || self.camera_to_world.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("view {}: rotation block not orthonormal", self.id)));
        }
        Ok(())
    }

    pub fn rotation(&self) -> nalgebra::Matrix3<f64> {
        let m = &self.camera_to_world;
        nalgebra::Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10])
    }

    pub fn position(&self) -> Vec3 {
        let m = &self.camera_to_world;
        Vec3::new(m[3], m[7], m[11])
    }

    /// Ray through image position `(x, y)` in pixels, `y` growing downwards.
    pub fn ray(&self, x: f64, y: f64) -> Ray {
        let t = (self.fov_deg.to_radians() * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let px = (2.0 * x / self.width as f64 - 1.0) * t * aspect;
        let py = (1.0 - 2.0 * y / self.height as f64) * t;
        let dir = self.rotation() * Vec3::new(px, py, -1.0);
        Ray::new(self.position(), dir, 0.0, f64::INFINITY)
    }
}

/// Atlased geometry plus its acceleration structure.
pub struct Scene {
    pub mesh: TriangleMesh,
    pub bvh: Bvh,
    /// Offset applied to secondary ray origins along the geometric normal.
    pub ray_epsilon: f64,
}

impl Scene {
    pub fn new(mesh: TriangleMesh) -> Result<Scene> {
        if mesh.uvs.is_none() {
            return Err(Error::InvalidArgument("scene mesh has no UV atlas".into()));
        }
        mesh.validate()?;
        let bvh = Bvh::build(&mesh);
        let ray_epsilon = 1e-4 * mesh.scale();
        Ok(Scene { mesh, bvh, ray_epsilon })
    }

    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        self.bvh.intersect(&self.mesh, ray)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    pub spp: u32,
    pub seed: u64,
    pub max_bounces: u32,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            spp: 64,
            seed: 0,
            max_bounces: 2,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<()> {
        if self.spp == 0 {
            return Err(Error::InvalidArgument("spp must be positive".into()));
        }
        if self.max_bounces == 0 || self.max_bounces > MAX_BOUNCES {
            return Err(Error::InvalidArgument(format!("max_bounces must be in 1..={MAX_BOUNCES}")));
        }
        Ok(())
    }
}

/// Which estimators feed the direct-lighting term. `Mis` is the renderer's
/// normal mode; the single-strategy modes exist for consistency checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Mis,
    LightOnly,
    BrdfOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderImage {
    /// Linear RGB, row-major from the top-left pixel.
    pub rgb: TexelGrid,
    /// True where the pixel-center primary ray hits the mesh.
    pub mask: Vec<bool>,
    pub samples: Vec<u32>,
    /// Number of non-finite samples replaced by zero.
    pub nonfinite: u64,
}

impl RenderImage {
    pub fn width(&self) -> usize {
        self.rgb.width
    }

    pub fn height(&self) -> usize {
        self.rgb.height
    }

    pub fn pixel(&self, index: usize) -> Rgb {
        let t = self.rgb.texel(index);
        Rgb::new(t[0], t[1], t[2])
    }

    pub fn covered(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Receives the per-texel weights of a replayed path. Weights already
/// include the pixel's loss derivative and the `1/spp` average.
pub(crate) trait GradientSink {
    fn reflectance(&mut self, fp: &Footprint, diffuse: Rgb, specular: Rgb, roughness: f64);
    fn environment(&mut self, fp: &Footprint, weight: Rgb);
}

pub(crate) struct Adjoint<'s> {
    pub sink: &'s mut dyn GradientSink,
    /// `dL/dpixel / spp` for the current pixel.
    pub weight: Rgb,
    pub background: bool,
}

pub(crate) struct Context<'a> {
    pub scene: &'a Scene,
    pub maps: &'a ReflectanceMaps,
    pub guide: &'a ReflectanceMaps,
    pub env: &'a EnvironmentMap,
    pub settings: RenderSettings,
    pub strategy: Strategy,
}

/// Counter-based random stream for one pixel sample.
pub(crate) struct SampleStream(ChaCha8Rng);

impl SampleStream {
    pub fn new(seed: u64, view: u32, pixel: usize, sample: u32) -> SampleStream {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..12].copy_from_slice(&view.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(pixel as u64);
        rng.set_word_pos(sample as u128 * WORDS_PER_SAMPLE);
        SampleStream(rng)
    }

    pub fn next(&mut self) -> f64 {
        self.0.gen()
    }

    pub fn next2(&mut self) -> [f64; 2] {
        [self.0.gen(), self.0.gen()]
    }
}

/// Offset inside pixel `pixel` of primary sample `s`, in pixel units.
pub fn primary_offset(settings: &RenderSettings, view: u32, pixel: usize, s: u32) -> [f64; 2] {
    let mut rng = SampleStream::new(settings.seed, view, pixel, s);
    stratified(settings.spp, s, rng.next2())
}

/// Jittered position of sample `s` inside its pixel, on a stratified grid.
pub(crate) fn stratified(spp: u32, s: u32, jitter: [f64; 2]) -> [f64; 2] {
    let nx = (spp as f64).sqrt().ceil() as u32;
    let ny = spp.div_ceil(nx);
    [
        ((s % nx) as f64 + jitter[0]) / nx as f64,
        ((s / nx) as f64 + jitter[1]) / ny as f64,
    ]
}

impl Context<'_> {
    fn offset_ray(&self, hit: &Hit, side: &Vec3, dir: Vec3) -> Ray {
        Ray::new(hit.position + side * self.scene.ray_epsilon, dir, 0.0, f64::INFINITY)
    }

    /// One path sample for pixel `pixel`. Returns the radiance estimate;
    /// when `adjoint` is given, also reports parameter weights of the
    /// first-hit terms to its sink.
    pub fn sample(&self, view: &CameraView, pixel: usize, s: u32, adjoint: Option<Adjoint>) -> Rgb {
        let mut rng = SampleStream::new(self.settings.seed, view.id, pixel, s);
        let off = stratified(self.settings.spp, s, rng.next2());
        let (x, y) = (pixel % view.width, pixel / view.width);
        let ray = view.ray(x as f64 + off[0], y as f64 + off[1]);
        match self.scene.intersect(&ray) {
            None => {
                let fp = self.env.footprint(&ray.direction);
                if let Some(adj) = adjoint {
                    if adj.background {
                        adj.sink.environment(&fp, adj.weight);
                    }
                }
                self.env.radiance.sample_rgb(&fp)
            }
            Some(hit) => self.shade(&hit, -ray.direction, 1, &mut rng, adjoint),
        }
    }

    fn shade(&self, hit: &Hit, wo: Vec3, depth: u32, rng: &mut SampleStream, mut adjoint: Option<Adjoint>) -> Rgb {
        let u_light = rng.next2();
        let u_lobe = rng.next();
        let u_brdf = rng.next2();
        if wo.dot(&hit.geometric_normal) <= 0.0 {
            return Rgb::zeros();
        }
        let frame = shading_frame(hit);
        let ng = hit.geometric_normal;
        let (fp, _) = self.maps.footprint(hit.uv);
        let shading = self.maps.lookup(&fp);
        let params = shading.brdf;
        let guide = self.guide.lookup(&fp).brdf;
        let mut radiance = Rgb::zeros();

        let report = |adj: &mut Option<Adjoint>, wi: &Vec3, scale: f64, incoming: Rgb, env_fp: Option<&Footprint>, f: &Rgb| {
            let Some(adj) = adj.as_mut() else { return };
            let d = brdf_param_derivatives(&params, wi, &wo, &frame);
            let w = adj.weight.component_mul(&incoming) * scale;
            let rough = if shading.roughness_clamped {
                0.0
            } else {
                d.d_roughness.dot(&w)
            };
            adj.sink.reflectance(&fp, d.d_diffuse.component_mul(&w), d.d_specular.component_mul(&w), rough);
            if let Some(efp) = env_fp {
                adj.sink.environment(efp, adj.weight.component_mul(f) * scale);
            }
        };

        if self.strategy != Strategy::BrdfOnly {
            let ls = self.env.sample(u_light);
            let cos = frame.normal.dot(&ls.dir);
            if ls.pdf > 0.0 && cos > 0.0 && ls.dir.dot(&ng) > 0.0 {
                let shadow = self.offset_ray(hit, &ng, ls.dir);
                if !self.scene.bvh.occluded(&self.scene.mesh, &shadow) {
                    let f = eval_brdf(&params, &ls.dir, &wo, &frame);
                    let w = match self.strategy {
                        Strategy::Mis => power_heuristic(ls.pdf, brdf_pdf(&guide, &ls.dir, &wo, &frame)),
                        _ => 1.0,
                    };
                    let scale = cos * w / ls.pdf;
                    let env_fp = self.env.footprint(&ls.dir);
                    let le = self.env.radiance.sample_rgb(&env_fp);
                    radiance += f.component_mul(&le) * scale;
                    if depth == 1 {
                        report(&mut adjoint, &ls.dir, scale, le, Some(&env_fp), &f);
                    }
                }
            }
        }

        let bs = sample_brdf(&guide, &wo, &frame, u_brdf, u_lobe);
        let cos = frame.normal.dot(&bs.wi);
        if bs.pdf > 0.0 && cos > 0.0 && bs.wi.dot(&ng) > 0.0 {
            let f = eval_brdf(&params, &bs.wi, &wo, &frame);
            let ray = self.offset_ray(hit, &ng, bs.wi);
            match self.scene.intersect(&ray) {
                None => {
                    if self.strategy != Strategy::LightOnly {
                        let w = match self.strategy {
                            Strategy::Mis => power_heuristic(bs.pdf, self.env.pdf(&bs.wi)),
                            _ => 1.0,
                        };
                        let scale = cos * w / bs.pdf;
                        let env_fp = self.env.footprint(&bs.wi);
                        let le = self.env.radiance.sample_rgb(&env_fp);
                        radiance += f.component_mul(&le) * scale;
                        if depth == 1 {
                            report(&mut adjoint, &bs.wi, scale, le, Some(&env_fp), &f);
                        }
                    }
                }
                Some(next) if depth < self.settings.max_bounces => {
                    let scale = cos / bs.pdf;
                    let li = self.shade(&next, -bs.wi, depth + 1, rng, None);
                    radiance += f.component_mul(&li) * scale;
                    if depth == 1 {
                        report(&mut adjoint, &bs.wi, scale, li, None, &f);
                    }
                }
                Some(_) => {}
            }
        }
        radiance
    }

    /// Pixel estimate plus the count of non-finite samples dropped.
    pub fn pixel(&self, view: &CameraView, pixel: usize) -> (Rgb, u32) {
        let mut acc = Rgb::zeros();
        let mut bad = 0;
        for s in 0..self.settings.spp {
            let v = self.sample(view, pixel, s, None);
            if v.iter().all(|c| c.is_finite()) {
                acc += v;
            } else {
                bad += 1;
            }
        }
        (acc / self.settings.spp as f64, bad)
    }
}

/// Pixel index ranges of the image tiles, in the fixed merge order.
pub(crate) fn tiles(width: usize, height: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for ty in (0..height).step_by(TILE) {
        for tx in (0..width).step_by(TILE) {
            out.push((tx, ty, (tx + TILE).min(width), (ty + TILE).min(height)));
        }
    }
    out
}

pub(crate) fn coverage_mask(scene: &Scene, view: &CameraView) -> Vec<bool> {
    let mut mask = vec![false; view.width * view.height];
    for (p, m) in mask.iter_mut().enumerate() {
        let ray = view.ray((p % view.width) as f64 + 0.5, (p / view.width) as f64 + 0.5);
        *m = scene.intersect(&ray).is_some();
    }
    mask
}

pub fn render(
    scene: &Scene,
    view: &CameraView,
    maps: &ReflectanceMaps,
    env: &EnvironmentMap,
    settings: &RenderSettings,
) -> Result<RenderImage> {
    render_with(scene, view, maps, maps, env, settings, Strategy::Mis)
}

/// Renders `maps` while taking all sampling decisions from `guide`.
pub fn render_with(
    scene: &Scene,
    view: &CameraView,
    maps: &ReflectanceMaps,
    guide: &ReflectanceMaps,
    env: &EnvironmentMap,
    settings: &RenderSettings,
    strategy: Strategy,
) -> Result<RenderImage> {
    settings.validate()?;
    view.validate()?;
    if maps.resolution() != guide.resolution() {
        return Err(Error::InvalidArgument("guide maps differ in resolution".into()));
    }
    let ctx = Context {
        scene,
        maps,
        guide,
        env,
        settings: *settings,
        strategy,
    };
    let (w, h) = (view.width, view.height);
    let parts: Vec<(Vec<Rgb>, u64)> = tiles(w, h)
        .par_iter()
        .map(|&(x0, y0, x1, y1)| {
            let mut out = Vec::with_capacity((x1 - x0) * (y1 - y0));
            let mut bad = 0u64;
            for y in y0..y1 {
                for x in x0..x1 {
                    let (v, b) = ctx.pixel(view, y * w + x);
                    out.push(v);
                    bad += b as u64;
                }
            }
            (out, bad)
        })
        .collect();
    let mut rgb = TexelGrid::new(w, h, 3);
    let mut nonfinite = 0;
    for (&(x0, y0, x1, _), (vals, bad)) in tiles(w, h).iter().zip(parts) {
        for (k, v) in vals.iter().enumerate() {
            let (x, y) = (x0 + k % (x1 - x0), y0 + k / (x1 - x0));
            for c in 0..3 {
                *rgb.get_mut(y * w + x, c) = v[c];
            }
        }
        nonfinite += bad;
    }
    if nonfinite > 0 {
        log::warn!("view {}: {} non-finite samples replaced by zero", view.id, nonfinite);
    }
    Ok(RenderImage {
        rgb,
        mask: coverage_mask(scene, view),
        samples: vec![settings.spp; w * h],
        nonfinite,
    })
}

/// Texels of a `width x height` map that receive nonzero footprint weight
/// from the primary samples of one view.
pub fn view_coverage(scene: &Scene, view: &CameraView, width: usize, height: usize, settings: &RenderSettings) -> Result<Vec<bool>> {
    settings.validate()?;
    view.validate()?;
    let grid = TexelGrid::new(width, height, 1);
    let probe = ReflectanceMaps {
        diffuse: grid.clone(),
        specular: grid.clone(),
        roughness: grid,
    };
    let pixels = view.width * view.height;
    let parts: Vec<Vec<usize>> = (0..pixels)
        .into_par_iter()
        .map(|p| {
            let mut hits = Vec::new();
            for s in 0..settings.spp {
                let off = primary_offset(settings, view.id, p, s);
                let ray = view.ray((p % view.width) as f64 + off[0], (p / view.width) as f64 + off[1]);
                if let Some(hit) = scene.intersect(&ray) {
                    if -ray.direction.dot(&hit.geometric_normal) > 0.0 {
                        let (fp, _) = probe.footprint(hit.uv);
                        for k in 0..4 {
                            if fp.weights[k] > 0.0 {
                                hits.push(fp.texels[k]);
                            }
                        }
                    }
                }
            }
            hits
        })
        .collect();
    let mut seen = vec![false; width * height];
    for t in parts.into_iter().flatten() {
        seen[t] = true;
    }
    Ok(seen)
}

/// Number of views whose primary samples touch each texel.
pub fn texel_coverage(scene: &Scene, views: &[CameraView], width: usize, height: usize, settings: &RenderSettings) -> Result<Vec<u32>> {
    let mut counts = vec![0u32; width * height];
    for view in views {
        for (c, seen) in counts.iter_mut().zip(view_coverage(scene, view, width, height, settings)?) {
            *c += seen as u32;
        }
    }
    Ok(counts)
}

/// Runs `f` on a pool with `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

/// Configures the global pool from `SVBRDF_THREADS`, if set.
pub fn init_threads_from_env() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
