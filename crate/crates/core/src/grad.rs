//! Gradient engine: replays the forward paths and accumulates `dL/dtheta`
//! into per-texel buffers, plus the finite-difference check that certifies
//! it.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::lighting::EnvironmentMap;
use crate::math::Rgb;
use crate::optim::recon_loss;
use crate::renderer::{self, Adjoint, CameraView, Context, GradientSink, RenderImage, RenderSettings, Scene, Strategy};
use crate::texture::{Footprint, ReflectanceMaps, TexelGrid};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MapKind {
    Diffuse,
    Specular,
    Roughness,
    Environment,
}

impl MapKind {
    pub const ALL: [MapKind; 4] = [MapKind::Diffuse, MapKind::Specular, MapKind::Roughness, MapKind::Environment];
    pub const REFLECTANCE: [MapKind; 3] = [MapKind::Diffuse, MapKind::Specular, MapKind::Roughness];

    pub fn name(self) -> &'static str {
        match self {
            MapKind::Diffuse => "diffuse",
            MapKind::Specular => "specular",
            MapKind::Roughness => "roughness",
            MapKind::Environment => "environment",
        }
    }

    pub fn parse(s: &str) -> Option<MapKind> {
        MapKind::ALL.into_iter().find(|m| m.name() == s)
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `dL/dtheta` for every texel of the four parameter grids.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBuffers {
    pub diffuse: TexelGrid,
    pub specular: TexelGrid,
    pub roughness: TexelGrid,
    pub env: TexelGrid,
}

impl GradientBuffers {
    pub fn zeros(maps: &ReflectanceMaps, env: &EnvironmentMap) -> GradientBuffers {
        let like = |g: &TexelGrid| TexelGrid::new(g.width, g.height, g.channels);
        GradientBuffers {
            diffuse: like(&maps.diffuse),
            specular: like(&maps.specular),
            roughness: like(&maps.roughness),
            env: like(&env.radiance),
        }
    }

    pub fn get(&self, map: MapKind) -> &TexelGrid {
        match map {
            MapKind::Diffuse => &self.diffuse,
            MapKind::Specular => &self.specular,
            MapKind::Roughness => &self.roughness,
            MapKind::Environment => &self.env,
        }
    }

    pub fn get_mut(&mut self, map: MapKind) -> &mut TexelGrid {
        match map {
            MapKind::Diffuse => &mut self.diffuse,
            MapKind::Specular => &mut self.specular,
            MapKind::Roughness => &mut self.roughness,
            MapKind::Environment => &mut self.env,
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &GradientBuffers, s: f64) {
        for m in MapKind::ALL {
            for (a, b) in self.get_mut(m).data.iter_mut().zip(&other.get(m).data) {
                *a += s * b;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in MapKind::ALL {
            self.get_mut(m).map_inplace(|v| v * s);
        }
    }

    pub fn max_abs(&self, maps: &[MapKind]) -> f64 {
        maps.iter()
            .flat_map(|&m| self.get(m).data.iter())
            .fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        MapKind::ALL.iter().all(|&m| self.get(m).data.iter().all(|&v| v == 0.0))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BackwardOptions {
    /// Let pixels whose primary ray escapes supervise the environment texels
    /// they see.
    pub background: bool,
}

/// Per-tile sparse accumulator. One key per (map, texel); values are
/// per-channel sums, added in pixel order.
#[derive(Default)]
struct TileSink {
    acc: HashMap<(u8, u32), [f64; 3]>,
    pending: Vec<((u8, u32), [f64; 3])>,
}

impl TileSink {
    fn push(&mut self, map: MapKind, fp: &Footprint, v: [f64; 3]) {
        for k in 0..4 {
            let w = fp.weights[k];
            if w != 0.0 {
                self.pending.push(((map.index() as u8, fp.texels[k] as u32), [w * v[0], w * v[1], w * v[2]]));
            }
        }
    }

    fn commit(&mut self, keep: bool) {
        if keep {
            for (key, v) in self.pending.drain(..) {
                let e = self.acc.entry(key).or_insert([0.0; 3]);
                for c in 0..3 {
                    e[c] += v[c];
                }
            }
        } else {
            self.pending.clear();
        }
    }
}

impl GradientSink for TileSink {
    fn reflectance(&mut self, fp: &Footprint, diffuse: Rgb, specular: Rgb, roughness: f64) {
        self.push(MapKind::Diffuse, fp, diffuse.into());
        self.push(MapKind::Specular, fp, specular.into());
        self.push(MapKind::Roughness, fp, [roughness, 0.0, 0.0]);
    }

    fn environment(&mut self, fp: &Footprint, weight: Rgb) {
        self.push(MapKind::Environment, fp, weight.into());
    }
}

pub fn backward_render(
    scene: &Scene,
    view: &CameraView,
    maps: &ReflectanceMaps,
    env: &EnvironmentMap,
    dl_dpixel: &TexelGrid,
    settings: &RenderSettings,
    options: &BackwardOptions,
) -> Result<GradientBuffers> {
    backward_render_with(scene, view, maps, maps, env, dl_dpixel, settings, options, None)
}

/// Backward pass with explicit sampling guide. When `forward` is given,
/// every replayed pixel must reproduce its forward value bit-exactly.
#[allow(clippy::too_many_arguments)]
pub fn backward_render_with(
    scene: &Scene,
    view: &CameraView,
    maps: &ReflectanceMaps,
    guide: &ReflectanceMaps,
    env: &EnvironmentMap,
    dl_dpixel: &TexelGrid,
    settings: &RenderSettings,
    options: &BackwardOptions,
    forward: Option<&RenderImage>,
) -> Result<GradientBuffers> {
    settings.validate()?;
    view.validate()?;
    let (w, h) = (view.width, view.height);
    if dl_dpixel.width != w || dl_dpixel.height != h || dl_dpixel.channels != 3 {
        return Err(Error::InvalidArgument("loss derivative image does not match the view".into()));
    }
    if let Some(f) = forward {
        if f.width() != w || f.height() != h || f.samples.iter().any(|&s| s != settings.spp) {
            return Err(Error::Consistency(format!(
                "view {}: forward image was rendered with different sample counts",
                view.id
            )));
        }
    }
    let ctx = Context {
        scene,
        maps,
        guide,
        env,
        settings: *settings,
        strategy: Strategy::Mis,
    };
    let inv_spp = 1.0 / settings.spp as f64;
    let tiles = renderer::tiles(w, h);
    let parts: Vec<Result<TileSink>> = tiles
        .par_iter()
        .map(|&(x0, y0, x1, y1)| {
            let mut sink = TileSink::default();
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = y * w + x;
                    let t = dl_dpixel.texel(p);
                    let weight = Rgb::new(t[0], t[1], t[2]) * inv_spp;
                    if weight == Rgb::zeros() {
                        continue;
                    }
                    let mut acc = Rgb::zeros();
                    for s in 0..settings.spp {
                        let adj = Adjoint {
                            sink: &mut sink,
                            weight,
                            background: options.background,
                        };
                        let v = ctx.sample(view, p, s, Some(adj));
                        let ok = v.iter().all(|c| c.is_finite());
                        sink.commit(ok);
                        if ok {
                            acc += v;
                        }
                    }
                    if let Some(f) = forward {
                        if acc * inv_spp != f.pixel(p) {
                            return Err(Error::Consistency(format!(
                                "view {}: replay of pixel ({x}, {y}) diverged from the forward pass",
                                view.id
                            )));
                        }
                    }
                }
            }
            Ok(sink)
        })
        .collect();
    let mut grads = GradientBuffers::zeros(maps, env);
    for part in parts {
        for ((map, texel), v) in part?.acc {
            let grid = grads.get_mut(MapKind::ALL[map as usize]);
            for c in 0..grid.channels {
                *grid.get_mut(texel as usize, c) += v[c];
            }
        }
    }
    Ok(grads)
}

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    /// Texels checked per map.
    pub texels_per_map: usize,
    pub maps: Vec<MapKind>,
    pub step: f64,
    /// Seed for texel selection.
    pub seed: u64,
    pub tolerance: f64,
    pub settings: RenderSettings,
    pub backward: BackwardOptions,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            texels_per_map: 20,
            maps: MapKind::ALL.to_vec(),
            step: 1e-3,
            seed: 0,
            tolerance: 1e-3,
            settings: RenderSettings::default(),
            backward: BackwardOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckEntry {
    pub map: MapKind,
    pub texel: usize,
    pub channel: usize,
    pub analytic: f64,
    pub fd: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
    pub tolerance: f64,
    pub loss: f64,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

impl GradcheckReport {
    fn sorted(&self, map: Option<MapKind>) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .entries
            .iter()
            .filter(|e| map.is_none_or(|m| e.map == m))
            .map(|e| e.rel_err)
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn max_rel_err(&self) -> f64 {
        self.sorted(None).last().copied().unwrap_or(0.0)
    }

    pub fn p95_rel_err(&self) -> f64 {
        percentile(&self.sorted(None), 0.95)
    }

    pub fn p95_for(&self, map: MapKind) -> f64 {
        percentile(&self.sorted(Some(map)), 0.95)
    }

    pub fn count(&self, map: MapKind) -> usize {
        self.entries.iter().filter(|e| e.map == map).count()
    }

    pub fn passed(&self) -> bool {
        !self.entries.is_empty() && self.p95_rel_err() < self.tolerance
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["map", "texel", "channel", "analytic", "fd", "rel_err"])?;
        for e in &self.entries {
            w.write_record([
                e.map.name().to_string(),
                e.texel.to_string(),
                e.channel.to_string(),
                format!("{:e}", e.analytic),
                format!("{:e}", e.fd),
                format!("{:e}", e.rel_err),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gradcheck: {} texels, max rel err {:.3e}, p95 {:.3e}, tolerance {:.1e}: {}",
            self.entries.len(),
            self.max_rel_err(),
            self.p95_rel_err(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Picks `n` texel-channels of one map whose analytic gradient is at least
/// 1% of the map's largest, spread evenly over the texel index range.
fn select(grid: &TexelGrid, n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let max = grid.data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max == 0.0 || n == 0 {
        return Vec::new();
    }
    let candidates: Vec<(usize, usize)> = (0..grid.num_texels())
        .filter_map(|t| {
            (0..grid.channels)
                .map(|c| (c, grid.get(t, c).abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .filter(|&(_, g)| g >= 1e-2 * max)
                .map(|(c, _)| (t, c))
        })
        .collect();
    if candidates.len() <= n {
        return candidates;
    }
    (0..n)
        .map(|k| {
            let lo = k * candidates.len() / n;
            let hi = (k + 1) * candidates.len() / n;
            *candidates[lo..hi].choose(rng).unwrap()
        })
        .collect()
}

/// Compares [`backward_render`] against central differences of the masked
/// reconstruction loss against `target`, both evaluated with the same seed
/// and with sampling guided by the unperturbed parameters.
pub fn gradcheck(
    scene: &Scene,
    view: &CameraView,
    maps: &ReflectanceMaps,
    env: &EnvironmentMap,
    target: &TexelGrid,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(Error::InvalidArgument(format!("gradcheck step must be positive, got {}", opts.step)));
    }
    let settings = &opts.settings;
    let base = renderer::render(scene, view, maps, env, settings)?;
    let mask = if opts.backward.background {
        vec![true; base.mask.len()]
    } else {
        base.mask.clone()
    };
    let (loss, dl) = recon_loss(&base.rgb, target, &mask)?;
    let grads = backward_render_with(scene, view, maps, maps, env, &dl, settings, &opts.backward, Some(&base))?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut picks = Vec::new();
    for &m in &opts.maps {
        for (t, c) in select(grads.get(m), opts.texels_per_map, &mut rng) {
            picks.push((m, t, c));
        }
    }
    let eval = |m: MapKind, t: usize, c: usize, delta: f64| -> Result<f64> {
        let mut p = maps.clone();
        let mut e = env.clone();
        let grid = match m {
            MapKind::Diffuse => &mut p.diffuse,
            MapKind::Specular => &mut p.specular,
            MapKind::Roughness => &mut p.roughness,
            MapKind::Environment => &mut e.radiance,
        };
        *grid.get_mut(t, c) += delta;
        let img = renderer::render_with(scene, view, &p, maps, &e, settings, Strategy::Mis)?;
        Ok(recon_loss(&img.rgb, target, &mask)?.0)
    };
    let entries = picks
        .into_iter()
        .map(|(m, t, c)| {
            let fd = (eval(m, t, c, opts.step)? - eval(m, t, c, -opts.step)?) / (2.0 * opts.step);
            let analytic = grads.get(m).get(t, c);
            Ok(GradcheckEntry {
                map: m,
                texel: t,
                channel: c,
                analytic,
                fd,
                rel_err: relative_error(analytic, fd),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradcheckReport {
        entries,
        tolerance: opts.tolerance,
        loss,
    })
}
