//! Losses, the multi-view gradient consistency term, the adaptive-moment
//! update and the two-step optimization driver.

use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::grad::{backward_render_with, BackwardOptions, GradientBuffers, MapKind};
use crate::lighting::EnvironmentMap;
use crate::reflectance::ALPHA_MIN;
use crate::renderer::{render, texel_coverage, CameraView, RenderSettings, Scene};
use crate::texture::{ReflectanceMaps, TexelGrid};
use crate::{Error, Result};

/// Masked mean squared error over pixels and channels, and its derivative
/// with respect to `rendered`.
pub fn recon_loss(rendered: &TexelGrid, target: &TexelGrid, mask: &[bool]) -> Result<(f64, TexelGrid)> {
    if !rendered.same_shape(target) || rendered.num_texels() != mask.len() {
        return Err(Error::InvalidArgument(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{} with {} mask entries",
            rendered.width, rendered.height, rendered.channels, target.width, target.height, target.channels, mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count() * rendered.channels;
    if count == 0 {
        return Err(Error::InvalidArgument("empty mask: no supervised pixels".into()));
    }
    let n = count as f64;
    let mut grad = TexelGrid::new(rendered.width, rendered.height, rendered.channels);
    let mut sum = 0.0;
    for (p, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for c in 0..rendered.channels {
            let d = rendered.get(p, c) - target.get(p, c);
            sum += d * d;
            *grad.get_mut(p, c) = 2.0 * d / n;
        }
    }
    Ok((sum / n, grad))
}

/// Root of [`recon_loss`]'s mean squared error.
pub fn masked_rmse(rendered: &TexelGrid, target: &TexelGrid, mask: &[bool]) -> Result<f64> {
    Ok(recon_loss(rendered, target, mask)?.0.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MvclMode {
    Off,
    PerView,
    Global,
}

impl MvclMode {
    pub fn parse(s: &str) -> Option<MvclMode> {
        match s {
            "off" => Some(MvclMode::Off),
            "per-view" => Some(MvclMode::PerView),
            "global" => Some(MvclMode::Global),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MvclMode::Off => "off",
            MvclMode::PerView => "per-view",
            MvclMode::Global => "global",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mvcl {
    pub per_view: Vec<f64>,
    pub global: f64,
}

/// Normalized unbiased variance of per-texel gradients across views.
///
/// Each view's buffers are divided by that view's largest absolute entry
/// over `maps`. Texel-channels of `maps` seen by at least two views qualify;
/// the global value is the mean unbiased variance over them and view `i`'s
/// value is the mean of its share `(g_i - mean)^2 / (N - 1)`, both divided
/// by the largest possible variance `N / (N - 1)` and clamped to `[0, 1]`.
pub fn mvcl(grads: &[GradientBuffers], coverage: &[u32], maps: &[MapKind]) -> Result<Mvcl> {
    let n = grads.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("mvcl needs at least two views, got {n}")));
    }
    if maps.contains(&MapKind::Environment) {
        return Err(Error::InvalidArgument("mvcl map subset may only name reflectance maps".into()));
    }
    for g in grads {
        for &m in maps {
            if g.get(m).num_texels() != coverage.len() || !g.get(m).same_shape(grads[0].get(m)) {
                return Err(Error::InvalidArgument("gradient buffers and coverage are not aligned".into()));
            }
        }
    }
    let scales: Vec<f64> = grads
        .iter()
        .map(|g| {
            let m = g.max_abs(maps);
            if m > 0.0 {
                1.0 / m
            } else {
                0.0
            }
        })
        .collect();
    let nf = n as f64;
    let bound = nf / (nf - 1.0);
    let mut share = vec![0.0; n];
    let mut total = 0.0;
    let mut count = 0usize;
    let mut g = vec![0.0; n];
    for &m in maps {
        let channels = grads[0].get(m).channels;
        for (t, _) in coverage.iter().enumerate().filter(|(_, &c)| c >= 2) {
            for c in 0..channels {
                // Shifted by the first view so that equal gradients give an
                // exactly zero variance.
                let g0 = grads[0].get(m).get(t, c) * scales[0];
                for i in 0..n {
                    g[i] = grads[i].get(m).get(t, c) * scales[i] - g0;
                }
                let mean = g.iter().sum::<f64>() / nf;
                let mut var = 0.0;
                for i in 0..n {
                    let d = (g[i] - mean) * (g[i] - mean) / (nf - 1.0);
                    share[i] += d;
                    var += d;
                }
                total += var;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Ok(Mvcl {
            per_view: vec![0.0; n],
            global: 0.0,
        });
    }
    let c = count as f64;
    Ok(Mvcl {
        per_view: share.iter().map(|s| (s / c / bound).clamp(0.0, 1.0)).collect(),
        global: (total / c / bound).clamp(0.0, 1.0),
    })
}

/// Composite loss and the detached per-view weights applied to each view's
/// gradient. `mvcl` holds one value per view in per-view mode and a single
/// value in global mode; it is ignored when the mode is `Off`.
pub fn composite_loss(recon: &[f64], mvcl: &[f64], mode: MvclMode) -> Result<(f64, Vec<f64>)> {
    let n = recon.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no reconstruction losses".into()));
    }
    let weights = match mode {
        MvclMode::Off => vec![1.0; n],
        MvclMode::PerView => {
            if mvcl.len() != n {
                return Err(Error::InvalidArgument(format!("{} mvcl values for {} views", mvcl.len(), n)));
            }
            mvcl.iter().map(|m| m.exp()).collect()
        }
        MvclMode::Global => {
            if mvcl.len() != 1 {
                return Err(Error::InvalidArgument("global mode takes a single mvcl value".into()));
            }
            vec![mvcl[0].exp(); n]
        }
    };
    let mean = recon.iter().sum::<f64>() / n as f64;
    let l = recon.iter().zip(&weights).map(|(r, w)| r * w).sum::<f64>() / n as f64;
    // Rounding may step an ulp outside the analytic bounds; pin it back.
    let l = if l.is_finite() && mean.is_finite() {
        l.clamp(mean, mean * std::f64::consts::E)
    } else {
        l
    };
    Ok((l, weights))
}

/// The four optimizable parameter sets.
#[derive(Clone, Debug, PartialEq)]
pub struct Theta {
    pub maps: ReflectanceMaps,
    pub env: EnvironmentMap,
}

impl Theta {
    /// Uniform initialization: gray diffuse 0.25, F0 0.04, roughness 0.5,
    /// gray environment 0.5.
    pub fn initial(map_resolution: usize, env_width: usize, env_height: usize) -> Theta {
        use crate::math::Rgb;
        Theta {
            maps: ReflectanceMaps::uniform(map_resolution, Rgb::repeat(0.25), Rgb::repeat(0.04), 0.5),
            env: EnvironmentMap::constant(env_width, env_height, Rgb::repeat(0.5)),
        }
    }

    pub fn get(&self, m: MapKind) -> &TexelGrid {
        match m {
            MapKind::Diffuse => &self.maps.diffuse,
            MapKind::Specular => &self.maps.specular,
            MapKind::Roughness => &self.maps.roughness,
            MapKind::Environment => &self.env.radiance,
        }
    }

    pub fn get_mut(&mut self, m: MapKind) -> &mut TexelGrid {
        match m {
            MapKind::Diffuse => &mut self.maps.diffuse,
            MapKind::Specular => &mut self.maps.specular,
            MapKind::Roughness => &mut self.maps.roughness,
            MapKind::Environment => &mut self.env.radiance,
        }
    }
}

fn project(m: MapKind, v: f64) -> f64 {
    match m {
        MapKind::Diffuse | MapKind::Specular => v.clamp(0.0, 1.0),
        MapKind::Roughness => v.clamp(ALPHA_MIN, 1.0),
        MapKind::Environment => v.max(0.0),
    }
}

/// Adam moments and per-map step counters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: GradientBuffers,
    pub v: GradientBuffers,
    /// Updates applied to each map so far, indexed like [`MapKind::ALL`].
    pub steps: [u64; 4],
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Non-finite gradient entries skipped so far.
    pub skipped: u64,
}

impl OptimizerState {
    pub fn new(theta: &Theta, lr: f64) -> OptimizerState {
        let z = GradientBuffers::zeros(&theta.maps, &theta.env);
        OptimizerState {
            m: z.clone(),
            v: z,
            steps: [0; 4],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            skipped: 0,
        }
    }

    /// One bias-corrected Adam update of the `trainable` maps followed by
    /// projection onto their valid ranges. Returns the number of
    /// non-finite gradient entries skipped.
    pub fn step(&mut self, theta: &mut Theta, grads: &GradientBuffers, trainable: &[MapKind]) -> Result<u64> {
        let mut skipped = 0;
        for &map in trainable {
            let g = grads.get(map);
            if !g.same_shape(theta.get(map)) {
                return Err(Error::InvalidArgument(format!("{map} gradient shape does not match the parameters")));
            }
            let k = MapKind::ALL.iter().position(|&x| x == map).unwrap();
            self.steps[k] += 1;
            let t = self.steps[k] as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
            let m = &mut self.m.get_mut(map).data;
            let v = &mut self.v.get_mut(map).data;
            let p = &mut theta.get_mut(map).data;
            for i in 0..p.len() {
                let gi = g.data[i];
                if !gi.is_finite() {
                    skipped += 1;
                    continue;
                }
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] = project(map, p[i] - lr * mh / (vh.sqrt() + eps));
            }
        }
        self.skipped += skipped;
        Ok(skipped)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MvclConfig {
    pub mode: MvclMode,
    pub maps: Vec<MapKind>,
}

impl Default for MvclConfig {
    fn default() -> Self {
        MvclConfig {
            mode: MvclMode::PerView,
            maps: MapKind::REFLECTANCE.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub mvcl: MvclConfig,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            stage1_epochs: 60,
            stage2_epochs: 60,
            mvcl: MvclConfig::default(),
        }
    }
}

impl Schedule {
    pub const STAGE1: [MapKind; 2] = [MapKind::Diffuse, MapKind::Environment];
    pub const STAGE2: [MapKind; 4] = MapKind::ALL;

    pub fn trainable(stage: u8) -> &'static [MapKind] {
        if stage == 1 {
            &Self::STAGE1
        } else {
            &Self::STAGE2
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub lr: f64,
    pub settings: RenderSettings,
    /// Supervise the environment through background pixels too.
    pub background: bool,
    /// Optimize the environment; when false it stays as initialized.
    pub train_env: bool,
    /// Write the loss history here after every epoch.
    pub history_csv: Option<PathBuf>,
    /// Directory and epoch interval for parameter checkpoints.
    pub checkpoints: Option<(PathBuf, usize)>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr: 0.01,
            settings: RenderSettings::default(),
            background: false,
            train_env: true,
            history_csv: None,
            checkpoints: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainingView {
    pub camera: CameraView,
    pub target: TexelGrid,
}

/// Losses of one epoch, evaluated at the parameters the epoch started from.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub epoch: usize,
    pub stage: u8,
    pub recon: Vec<f64>,
    pub mvcl: Vec<f64>,
    pub mvcl_global: f64,
    pub composite: f64,
    /// RMSE over surface pixels of all views.
    pub rmse: f64,
    pub nonfinite: u64,
}

impl fmt::Display for LossReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {:4} stage {} loss {:.6e} mvcl {:.4} rmse {:.5}",
            self.epoch, self.stage, self.composite, self.mvcl_global, self.rmse
        )
    }
}

pub struct RunResult {
    pub theta: Theta,
    pub history: Vec<LossReport>,
    /// Losses at the final parameters.
    pub final_report: LossReport,
    pub coverage: Vec<u32>,
}

struct ViewPass {
    recon: f64,
    sq_err: f64,
    count: usize,
    grads: Option<GradientBuffers>,
    nonfinite: u64,
}

fn view_pass(scene: &Scene, view: &TrainingView, theta: &Theta, settings: &RenderSettings, background: bool, with_grad: bool) -> Result<ViewPass> {
    let img = render(scene, &view.camera, &theta.maps, &theta.env, settings)?;
    let loss_mask = if background { vec![true; img.mask.len()] } else { img.mask.clone() };
    let (recon, dl) = recon_loss(&img.rgb, &view.target, &loss_mask)?;
    let surface = recon_loss(&img.rgb, &view.target, &img.mask)?.0;
    let count = img.covered() * 3;
    let grads = if with_grad {
        let opts = BackwardOptions { background };
        Some(backward_render_with(scene, &view.camera, &theta.maps, &theta.maps, &theta.env, &dl, settings, &opts, Some(&img))?)
    } else {
        None
    };
    Ok(ViewPass {
        recon,
        sq_err: surface * count as f64,
        count,
        grads,
        nonfinite: img.nonfinite,
    })
}

/// Renders every view at `theta` and reports the losses, without
/// gradients.
pub fn evaluate(scene: &Scene, views: &[TrainingView], theta: &Theta, settings: &RenderSettings, background: bool) -> Result<LossReport> {
    let passes: Vec<ViewPass> = views
        .par_iter()
        .map(|v| view_pass(scene, v, theta, settings, background, false))
        .collect::<Result<_>>()?;
    let recon: Vec<f64> = passes.iter().map(|p| p.recon).collect();
    let (composite, _) = composite_loss(&recon, &[], MvclMode::Off)?;
    Ok(LossReport {
        epoch: 0,
        stage: 0,
        mvcl: vec![0.0; recon.len()],
        recon,
        mvcl_global: 0.0,
        composite,
        rmse: pooled_rmse(&passes),
        nonfinite: passes.iter().map(|p| p.nonfinite).sum(),
    })
}

fn pooled_rmse(passes: &[ViewPass]) -> f64 {
    let n: usize = passes.iter().map(|p| p.count).sum();
    (passes.iter().map(|p| p.sq_err).sum::<f64>() / n.max(1) as f64).sqrt()
}

fn write_history(path: &std::path::Path, history: &[LossReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = history.first().map_or(0, |r| r.recon.len());
    let mut header = vec!["epoch".to_string(), "stage".to_string()];
    header.extend((0..n).map(|i| format!("recon_{i}")));
    header.extend((0..n).map(|i| format!("mvcl_{i}")));
    header.extend(["mvcl_global", "composite", "rmse"].map(String::from));
    w.write_record(&header)?;
    for r in history {
        let mut row = vec![r.epoch.to_string(), r.stage.to_string()];
        row.extend(r.recon.iter().chain(&r.mvcl).map(|v| format!("{v:e}")));
        row.extend([r.mvcl_global, r.composite, r.rmse].map(|v| format!("{v:e}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Stage 1 fits diffuse and environment under the plain reconstruction
/// loss; stage 2 fits all four parameter sets under the composite loss.
/// Each epoch renders every view at the current parameters, backpropagates,
/// optionally reweights views by their consistency term and takes one Adam
/// step. Epoch `k` uses render seed `settings.seed + k`.
pub fn run_two_step(scene: &Scene, views: &[TrainingView], init: Theta, schedule: &Schedule, hp: &Hyperparams) -> Result<RunResult> {
    if views.is_empty() {
        return Err(Error::InvalidArgument("no training views".into()));
    }
    if schedule.mvcl.mode != MvclMode::Off && views.len() < 2 {
        return Err(Error::InvalidArgument("mvcl needs at least two views".into()));
    }
    let mut theta = init;
    let (mw, mh) = theta.maps.resolution();
    let cameras: Vec<CameraView> = views.iter().map(|v| v.camera.clone()).collect();
    let coverage = texel_coverage(scene, &cameras, mw, mh, &hp.settings)?;
    let mut state = OptimizerState::new(&theta, hp.lr);
    let mut history = Vec::new();
    let mut bad_epochs = 0;
    let total = schedule.stage1_epochs + schedule.stage2_epochs;
    for epoch in 0..total {
        let stage = if epoch < schedule.stage1_epochs { 1 } else { 2 };
        let settings = RenderSettings {
            seed: hp.settings.seed.wrapping_add(epoch as u64),
            ..hp.settings
        };
        theta.env.rebuild_table();
        let passes: Vec<ViewPass> = views
            .par_iter()
            .map(|v| view_pass(scene, v, &theta, &settings, hp.background, true))
            .collect::<Result<_>>()?;
        let recon: Vec<f64> = passes.iter().map(|p| p.recon).collect();
        let grads: Vec<GradientBuffers> = passes.iter().map(|p| p.grads.clone().unwrap()).collect();
        let mode = if stage == 2 { schedule.mvcl.mode } else { MvclMode::Off };
        let (per_view, global) = if mode == MvclMode::Off {
            (vec![0.0; views.len()], 0.0)
        } else {
            let m = mvcl(&grads, &coverage, &schedule.mvcl.maps)?;
            (m.per_view, m.global)
        };
        let values = match mode {
            MvclMode::Global => vec![global],
            _ => per_view.clone(),
        };
        let (composite, weights) = composite_loss(&recon, &values, mode)?;
        let report = LossReport {
            epoch,
            stage,
            recon,
            mvcl: per_view,
            mvcl_global: global,
            composite,
            rmse: pooled_rmse(&passes),
            nonfinite: passes.iter().map(|p| p.nonfinite).sum(),
        };
        log::info!("{report}");
        history.push(report);
        if !composite.is_finite() {
            bad_epochs += 1;
            if bad_epochs >= 3 {
                return Err(Error::Diverged(format!("loss non-finite for 3 consecutive epochs (last epoch {epoch})")));
            }
            continue;
        }
        bad_epochs = 0;
        let n = views.len() as f64;
        let mut total_grad = GradientBuffers::zeros(&theta.maps, &theta.env);
        for (g, w) in grads.iter().zip(&weights) {
            total_grad.add_scaled(g, w / n);
        }
        let trainable: Vec<MapKind> = Schedule::trainable(stage)
            .iter()
            .copied()
            .filter(|&m| hp.train_env || m != MapKind::Environment)
            .collect();
        state.step(&mut theta, &total_grad, &trainable)?;
        if let Some(path) = &hp.history_csv {
            write_history(path, &history)?;
        }
        if let Some((dir, every)) = &hp.checkpoints {
            if *every > 0 && (epoch + 1) % every == 0 {
                crate::io::save_theta(&theta, &dir.join(format!("epoch_{:04}", epoch + 1)))?;
            }
        }
    }
    theta.env.rebuild_table();
    let settings = RenderSettings {
        seed: hp.settings.seed.wrapping_add(total as u64),
        ..hp.settings
    };
    let mut final_report = evaluate(scene, views, &theta, &settings, hp.background)?;
    final_report.epoch = total;
    final_report.stage = 2;
    Ok(RunResult {
        theta,
        history,
        final_report,
        coverage,
    })
}
