//! Evaluation protocols: masked image RMSE, per-map RMSE against ground
//! truth and the relighting (disentanglement) report.

use std::path::Path;

use crate::harness::scene::SceneDescription;
use crate::io::load_env;
use crate::lighting::EnvironmentMap;
use crate::optim::{evaluate, masked_rmse, Theta};
use crate::renderer::{render, texel_coverage, CameraView, RenderSettings, Scene};
use crate::texture::TexelGrid;
use crate::{Error, Result};

/// RMSE over masked pixels and channels.
pub fn eval_rmse(rendered: &TexelGrid, target: &TexelGrid, mask: &[bool]) -> Result<f64> {
    masked_rmse(rendered, target, mask)
}

/// RMSE over all channels of the texels with coverage at least 1.
pub fn map_rmse(estimate: &TexelGrid, truth: &TexelGrid, coverage: &[u32]) -> Result<f64> {
    if !estimate.same_shape(truth) || coverage.len() != estimate.num_texels() {
        return Err(Error::InvalidArgument("map shapes differ".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (t, _) in coverage.iter().enumerate().filter(|(_, &c)| c >= 1) {
        for c in 0..estimate.channels {
            sum += (estimate.get(t, c) - truth.get(t, c)).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no covered texels".into()));
    }
    Ok((sum / n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntanglementReport {
    pub env_name: String,
    /// Estimated maps and environment vs ground truth, training lighting.
    pub train_rmse: f64,
    /// Estimated maps vs ground-truth maps, both under the new lighting.
    pub relight_rmse: f64,
    pub increase_pct: f64,
}

/// Pooled masked RMSE between two parameter sets rendered with common random
/// numbers (same seed, same spp) over all cameras.
pub fn paired_rmse(scene: &Scene, cameras: &[CameraView], a: &Theta, b: &Theta, settings: &RenderSettings) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for cam in cameras {
        let ia = render(scene, cam, &a.maps, &a.env, settings)?;
        let ib = render(scene, cam, &b.maps, &b.env, settings)?;
        let k = ia.covered() * 3;
        if k > 0 {
            sum += masked_rmse(&ia.rgb, &ib.rgb, &ia.mask)?.powi(2) * k as f64;
            n += k;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no surface pixels in any view".into()));
    }
    Ok((sum / n as f64).sqrt())
}

/// Relighting protocol: compares the estimate against ground truth under
/// the training lighting and under `env_new`. Both comparisons share random
/// numbers between the two sides, so a perfect estimate scores exactly 0
/// in both and its increase is reported as 0%.
pub fn eval_entanglement(
    scene: &Scene,
    cameras: &[CameraView],
    estimate: &Theta,
    env_new: &EnvironmentMap,
    env_name: &str,
    truth: &Theta,
    settings: &RenderSettings,
) -> Result<EntanglementReport> {
    let train_rmse = paired_rmse(scene, cameras, estimate, truth, settings)?;
    let relit = |t: &Theta| Theta {
        maps: t.maps.clone(),
        env: env_new.clone(),
    };
    let relight_rmse = paired_rmse(scene, cameras, &relit(estimate), &relit(truth), settings)?;
    let increase_pct = if train_rmse > 0.0 {
        100.0 * (relight_rmse - train_rmse) / train_rmse
    } else if relight_rmse == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(EntanglementReport {
        env_name: env_name.to_string(),
        train_rmse,
        relight_rmse,
        increase_pct,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    pub masked_rmse: f64,
    pub diffuse_rmse: Option<f64>,
    pub specular_rmse: Option<f64>,
    pub roughness_rmse: Option<f64>,
    pub relight: Vec<EntanglementReport>,
}

impl MetricsRecord {
    /// Mean relighting increase over the evaluated environments.
    pub fn mean_increase_pct(&self) -> Option<f64> {
        if self.relight.is_empty() {
            None
        } else {
            Some(self.relight.iter().map(|r| r.increase_pct).sum::<f64>() / self.relight.len() as f64)
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["metric", "value"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        w.write_record(["masked_rmse", &format!("{:e}", self.masked_rmse)])?;
        w.write_record(["diffuse_rmse", &opt(self.diffuse_rmse)])?;
        w.write_record(["specular_rmse", &opt(self.specular_rmse)])?;
        w.write_record(["roughness_rmse", &opt(self.roughness_rmse)])?;
        for r in &self.relight {
            w.write_record([format!("train_rmse_{}", r.env_name), format!("{:e}", r.train_rmse)])?;
            w.write_record([format!("relight_rmse_{}", r.env_name), format!("{:e}", r.relight_rmse)])?;
            w.write_record([format!("increase_pct_{}", r.env_name), format!("{:e}", r.increase_pct)])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Full evaluation of `theta` on a scene description: image RMSE against the
/// stored targets and, when ground truth is available, per-map RMSE over
/// covered texels and the relighting report for every listed sky.
pub fn evaluate_scene(desc: &SceneDescription, scene: &Scene, theta: &Theta, settings: &RenderSettings) -> Result<MetricsRecord> {
    let views = desc.load_views()?;
    let report = evaluate(scene, &views, theta, settings, false)?;
    let mut rec = MetricsRecord {
        masked_rmse: report.rmse,
        ..MetricsRecord::default()
    };
    let Some(truth) = desc.ground_truth()? else {
        return Ok(rec);
    };
    let cameras = desc.cameras();
    let res = theta.maps.diffuse.width;
    let coverage = texel_coverage(scene, &cameras, res, res, settings)?;
    rec.diffuse_rmse = Some(map_rmse(&theta.maps.diffuse, &truth.maps.diffuse, &coverage)?);
    rec.specular_rmse = Some(map_rmse(&theta.maps.specular, &truth.maps.specular, &coverage)?);
    rec.roughness_rmse = Some(map_rmse(&theta.maps.roughness, &truth.maps.roughness, &coverage)?);
    rec.relight = relight_reports(desc, scene, theta, settings)?;
    Ok(rec)
}

/// Relighting reports for every sky listed with the scene's ground truth.
/// Scenes without ground truth have no defined relighting metric.
pub fn relight_reports(desc: &SceneDescription, scene: &Scene, theta: &Theta, settings: &RenderSettings) -> Result<Vec<EntanglementReport>> {
    let (Some(spec), Some(truth)) = (&desc.ground_truth, desc.ground_truth()?) else {
        return Err(Error::InvalidArgument("relighting metrics need ground-truth maps".into()));
    };
    let cameras = desc.cameras();
    spec.relight
        .iter()
        .map(|p| {
            let env = load_env(&desc.resolve(p))?.resample(truth.env.width(), truth.env.height());
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            eval_entanglement(scene, &cameras, theta, &env, &name, &truth, settings)
        })
        .collect()
}
