//! Versioned TOML scene description.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geometry::load_mesh;
use crate::grad::MapKind;
use crate::io;
use crate::optim::{Hyperparams, MvclConfig, MvclMode, Schedule, Theta, TrainingView};
use crate::renderer::{CameraView, RenderSettings, Scene};
use crate::{Error, Result};

pub const SCENE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescription {
    pub version: u32,
    /// Atlased OBJ mesh, relative to the scene file.
    pub mesh: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub maps: MapSpec,
    #[serde(default)]
    pub environment: EnvSpec,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    pub views: Vec<ViewSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthSpec>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    #[serde(default = "default_map_resolution")]
    pub resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    /// Trainable maps start from this image when given; fixed maps require it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "yes")]
    pub trainable: bool,
    #[serde(default = "default_env_width")]
    pub width: usize,
    #[serde(default = "default_env_height")]
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_spp")]
    pub spp: u32,
    #[serde(default = "default_bounces")]
    pub max_bounces: u32,
    #[serde(default = "default_epochs")]
    pub stage1_epochs: usize,
    #[serde(default = "default_epochs")]
    pub stage2_epochs: usize,
    #[serde(default = "default_mvcl")]
    pub mvcl: String,
    #[serde(default = "default_mvcl_maps")]
    pub mvcl_maps: Vec<String>,
    #[serde(default)]
    pub background: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSpec {
    pub id: u32,
    pub image: PathBuf,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    /// Row-major camera-to-world matrix; the camera looks down -Z, +Y up.
    pub camera_to_world: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthSpec {
    /// Directory holding diffuse/specular/roughness/env EXRs.
    pub dir: PathBuf,
    pub target_spp: u32,
    pub target_seed: u64,
    #[serde(default)]
    pub relight: Vec<PathBuf>,
}

fn default_map_resolution() -> usize {
    256
}
fn yes() -> bool {
    true
}
fn default_env_width() -> usize {
    64
}
fn default_env_height() -> usize {
    32
}
fn default_lr() -> f64 {
    0.01
}
fn default_spp() -> u32 {
    64
}
fn default_bounces() -> u32 {
    2
}
fn default_epochs() -> usize {
    60
}
fn default_mvcl() -> String {
    "per-view".into()
}
fn default_mvcl_maps() -> Vec<String> {
    MapKind::REFLECTANCE.iter().map(|m| m.name().to_string()).collect()
}

impl Default for MapSpec {
    fn default() -> Self {
        MapSpec {
            resolution: default_map_resolution(),
        }
    }
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec {
            path: None,
            trainable: true,
            width: default_env_width(),
            height: default_env_height(),
        }
    }
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec {
            lr: default_lr(),
            spp: default_spp(),
            max_bounces: default_bounces(),
            stage1_epochs: default_epochs(),
            stage2_epochs: default_epochs(),
            mvcl: default_mvcl(),
            mvcl_maps: default_mvcl_maps(),
            background: false,
        }
    }
}

impl ViewSpec {
    pub fn camera(&self) -> CameraView {
        let mut m = [0.0; 16];
        m.copy_from_slice(&self.camera_to_world);
        CameraView {
            id: self.id,
            width: self.width,
            height: self.height,
            fov_deg: self.fov_deg,
            camera_to_world: m,
            target: Some(self.image.clone()),
        }
    }

    pub fn from_camera(camera: &CameraView, image: PathBuf) -> ViewSpec {
        ViewSpec {
            id: camera.id,
            image,
            width: camera.width,
            height: camera.height,
            fov_deg: camera.fov_deg,
            camera_to_world: camera.camera_to_world.to_vec(),
        }
    }
}

fn check_file(field: String, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("file {} does not exist", path.display())))
    }
}

impl SceneDescription {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENE_VERSION {
            return Err(Error::validation("version", format!("unsupported version {}, expected {SCENE_VERSION}", self.version)));
        }
        check_file("mesh".into(), &self.resolve(&self.mesh))?;
        let r = self.maps.resolution;
        if r == 0 || !r.is_power_of_two() {
            return Err(Error::validation("maps.resolution", format!("{r} is not a positive power of two")));
        }
        let env = &self.environment;
        if env.height == 0 || env.width != 2 * env.height {
            return Err(Error::validation("environment.width", format!("environment is {}x{}, width must be twice the height", env.width, env.height)));
        }
        match &env.path {
            Some(p) => check_file("environment.path".into(), &self.resolve(p))?,
            None if !env.trainable => return Err(Error::validation("environment.path", "a fixed environment needs an image")),
            None => {}
        }
        let opt = &self.optimizer;
        if !(opt.lr > 0.0 && opt.lr.is_finite()) {
            return Err(Error::validation("optimizer.lr", "must be positive"));
        }
        self.render_settings().validate().map_err(|e| Error::validation("optimizer", e.to_string()))?;
        self.mvcl_config()?;
        if self.views.is_empty() {
            return Err(Error::validation("views", "at least one view is required"));
        }
        for (k, v) in self.views.iter().enumerate() {
            if v.camera_to_world.len() != 16 {
                return Err(Error::validation(format!("views[{k}].camera_to_world"), format!("expected 16 values, got {}", v.camera_to_world.len())));
            }
            v.camera().validate().map_err(|e| Error::validation(format!("views[{k}]"), e.to_string()))?;
            check_file(format!("views[{k}].image"), &self.resolve(&v.image))?;
        }
        if let Some(gt) = &self.ground_truth {
            for f in [io::DIFFUSE_FILE, io::SPECULAR_FILE, io::ROUGHNESS_FILE, io::ENV_FILE] {
                check_file("ground_truth.dir".into(), &self.resolve(&gt.dir).join(f))?;
            }
            for (k, p) in gt.relight.iter().enumerate() {
                check_file(format!("ground_truth.relight[{k}]"), &self.resolve(p))?;
            }
        }
        Ok(())
    }

    pub fn render_settings(&self) -> RenderSettings {
        RenderSettings {
            spp: self.optimizer.spp,
            seed: self.seed,
            max_bounces: self.optimizer.max_bounces,
        }
    }

    pub fn mvcl_config(&self) -> Result<MvclConfig> {
        let mode = MvclMode::parse(&self.optimizer.mvcl)
            .ok_or_else(|| Error::validation("optimizer.mvcl", format!("unknown mode `{}`", self.optimizer.mvcl)))?;
        let maps = self
            .optimizer
            .mvcl_maps
            .iter()
            .enumerate()
            .map(|(k, s)| {
                MapKind::parse(s)
                    .filter(|m| *m != MapKind::Environment)
                    .ok_or_else(|| Error::validation(format!("optimizer.mvcl_maps[{k}]"), format!("`{s}` is not a reflectance map")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MvclConfig { mode, maps })
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Ok(Schedule {
            stage1_epochs: self.optimizer.stage1_epochs,
            stage2_epochs: self.optimizer.stage2_epochs,
            mvcl: self.mvcl_config()?,
        })
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            lr: self.optimizer.lr,
            settings: self.render_settings(),
            background: self.optimizer.background,
            train_env: self.environment.trainable,
            ..Hyperparams::default()
        }
    }

    pub fn cameras(&self) -> Vec<CameraView> {
        self.views.iter().map(ViewSpec::camera).collect()
    }

    pub fn load_geometry(&self) -> Result<Scene> {
        let (mesh, report) = load_mesh(self.resolve(&self.mesh))?;
        log::info!("{report}");
        Scene::new(mesh)
    }

    pub fn load_views(&self) -> Result<Vec<TrainingView>> {
        self.views
            .iter()
            .map(|v| {
                let target = io::read_linear(self.resolve(&v.image), 3)?;
                if target.width != v.width || target.height != v.height {
                    return Err(Error::validation(format!("views[{}].image", v.id), "image size differs from the declared size"));
                }
                Ok(TrainingView { camera: v.camera(), target })
            })
            .collect()
    }

    /// Starting parameters: uniform defaults, with the environment taken
    /// from `environment.path` when one is given.
    pub fn initial_theta(&self) -> Result<Theta> {
        let mut theta = Theta::initial(self.maps.resolution, self.environment.width, self.environment.height);
        if let Some(p) = &self.environment.path {
            theta.env = io::load_env(&self.resolve(p))?;
        }
        Ok(theta)
    }

    pub fn ground_truth(&self) -> Result<Option<Theta>> {
        match &self.ground_truth {
            Some(gt) => io::load_theta(&self.resolve(&gt.dir)).map(Some),
            None => Ok(None),
        }
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneDescription> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut desc: SceneDescription = toml::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        line: e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1),
        msg: e.message().to_string(),
    })?;
    desc.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    desc.validate()?;
    Ok(desc)
}

pub fn save_scene(desc: &SceneDescription, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = toml::to_string_pretty(desc).map_err(|e| Error::InvalidArgument(format!("cannot serialize scene: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
