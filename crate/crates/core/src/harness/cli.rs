//! Command line interface. [`run`] returns the process exit code: 0 on
//! success, 1 on failure, 2 on usage errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::geometry::{load_mesh, save_obj};
use crate::grad::{gradcheck, GradcheckOptions, MapKind};
use crate::harness::eval::evaluate_scene;
use crate::harness::fixture::{make_fixture, FixtureKind, FixtureOptions};
use crate::harness::scene::{load_scene, SceneDescription};
use crate::io;
use crate::optim::{run_two_step, MvclMode, Theta};
use crate::renderer::{render, RenderSettings, Scene};
use crate::uv_atlas::{bake_atlas, write_chart_sidecar, AtlasOptions};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "svbrdf", version, about = "Reflectance and lighting recovery from multi-view images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment, parameterize and pack a UV atlas for a mesh.
    BakeUv {
        mesh: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        #[arg(long, default_value_t = 2)]
        padding: usize,
        #[arg(long, default_value_t = 120.0)]
        max_cone_deg: f64,
    },
    /// Render every view of a scene.
    Render {
        scene: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Directory with maps and env.exr (default: ground truth, else the
        /// initial parameters).
        #[arg(long)]
        theta: Option<PathBuf>,
        #[arg(long)]
        env: Option<PathBuf>,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Run the two-step optimization.
    Optimize {
        scene: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        stage1_epochs: Option<usize>,
        #[arg(long)]
        stage2_epochs: Option<usize>,
        /// off, per-view or global.
        #[arg(long)]
        mvcl: Option<String>,
        /// Comma separated maps the consistency term looks at.
        #[arg(long)]
        mvcl_maps: Option<String>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Render estimated maps under a different environment.
    Relight {
        scene: PathBuf,
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        env: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        scene: PathBuf,
        #[arg(long)]
        theta: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        view: usize,
        #[arg(long, default_value_t = 20)]
        texels: usize,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        /// Comma separated subset of diffuse,specular,roughness,environment.
        #[arg(long)]
        maps: Option<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Generate a synthetic scene with ground truth.
    Fixture {
        /// lambertian-sphere, specular-vase-like or mixed-material.
        kind: String,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        views: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        image_size: usize,
        #[arg(long, default_value_t = 256)]
        map_resolution: usize,
        #[arg(long, default_value_t = 1024)]
        target_spp: u32,
    },
    /// Image, map and relighting metrics for estimated parameters.
    Eval {
        scene: PathBuf,
        #[arg(long)]
        theta: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        render: RenderArgs,
    },
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    spp: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_bounces: Option<u32>,
    /// Also write PNG previews.
    #[arg(long)]
    png: bool,
}

impl RenderArgs {
    fn settings(&self, desc: &SceneDescription) -> Result<RenderSettings> {
        let base = desc.render_settings();
        let s = RenderSettings {
            spp: self.spp.unwrap_or(base.spp),
            seed: self.seed.unwrap_or(base.seed),
            max_bounces: self.max_bounces.unwrap_or(base.max_bounces),
        };
        s.validate()?;
        Ok(s)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failed(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

enum Outcome {
    Usage(String),
    Failed(Error),
}
use Outcome::{Failed, Usage};

impl From<Error> for Outcome {
    fn from(e: Error) -> Self {
        Failed(e)
    }
}

fn scene_and_geometry(path: &Path) -> Result<(SceneDescription, Scene)> {
    let desc = load_scene(path)?;
    let scene = desc.load_geometry()?;
    Ok((desc, scene))
}

fn load_or_default_theta(desc: &SceneDescription, theta: Option<&Path>) -> Result<Theta> {
    match theta {
        Some(dir) => io::load_theta(dir),
        None => match desc.ground_truth()? {
            Some(gt) => Ok(gt),
            None => desc.initial_theta(),
        },
    }
}

fn write_views(desc: &SceneDescription, scene: &Scene, theta: &Theta, settings: &RenderSettings, out: &Path, png: bool) -> Result<()> {
    for cam in desc.cameras() {
        let img = render(scene, &cam, &theta.maps, &theta.env, settings)?;
        io::write_exr(&img.rgb, out.join(format!("view_{:03}.exr", cam.id)))?;
        if png {
            io::write_png(&img.rgb, 1.0, out.join(format!("view_{:03}.png", cam.id)))?;
        }
        if img.nonfinite > 0 {
            log::warn!("view {}: {} non-finite samples dropped", cam.id, img.nonfinite);
        }
    }
    Ok(())
}

fn execute(cmd: Command) -> std::result::Result<i32, Outcome> {
    match cmd {
        Command::BakeUv {
            mesh,
            out,
            resolution,
            padding,
            max_cone_deg,
        } => {
            let (m, report) = load_mesh(&mesh)?;
            log::info!("{report}");
            let opts = AtlasOptions {
                resolution,
                padding,
                max_normal_cone_deg: max_cone_deg,
            };
            let (m, atlas) = bake_atlas(&m, &opts)?;
            save_obj(&m, &out)?;
            write_chart_sidecar(&m, out.with_extension("charts"))?;
            println!("{} charts, {:.2} texels per unit", atlas.placements.len(), atlas.texels_per_unit);
        }
        Command::Render { scene, out, theta, env, render } => {
            let (desc, geo) = scene_and_geometry(&scene)?;
            let mut t = load_or_default_theta(&desc, theta.as_deref())?;
            if let Some(p) = env {
                t.env = io::load_env(&p)?.resample(t.env.width(), t.env.height());
            }
            write_views(&desc, &geo, &t, &render.settings(&desc)?, &out, render.png)?;
        }
        Command::Relight { scene, theta, env, out, render } => {
            let (desc, geo) = scene_and_geometry(&scene)?;
            let mut t = io::load_theta(&theta)?;
            t.env = io::load_env(&env)?.resample(t.env.width(), t.env.height());
            write_views(&desc, &geo, &t, &render.settings(&desc)?, &out, render.png)?;
        }
        Command::Optimize {
            scene,
            out,
            stage1_epochs,
            stage2_epochs,
            mvcl,
            mvcl_maps,
            lr,
            checkpoint_every,
            render,
        } => {
            let (mut desc, geo) = scene_and_geometry(&scene)?;
            if let Some(m) = mvcl {
                if MvclMode::parse(&m).is_none() {
                    return Err(Usage(format!("unknown mvcl mode `{m}` (expected off, per-view or global)")));
                }
                desc.optimizer.mvcl = m;
            }
            if let Some(list) = mvcl_maps {
                desc.optimizer.mvcl_maps = list.split(',').map(|s| s.trim().to_string()).collect();
            }
            let mut schedule = desc.schedule().map_err(|e| Usage(e.to_string()))?;
            schedule.stage1_epochs = stage1_epochs.unwrap_or(schedule.stage1_epochs);
            schedule.stage2_epochs = stage2_epochs.unwrap_or(schedule.stage2_epochs);
            let mut hp = desc.hyperparams();
            hp.settings = render.settings(&desc)?;
            hp.lr = lr.unwrap_or(hp.lr);
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            hp.history_csv = Some(out.join("history.csv"));
            hp.checkpoints = checkpoint_every.map(|k| (out.join("checkpoints"), k));
            let views = desc.load_views()?;
            let result = run_two_step(&geo, &views, desc.initial_theta()?, &schedule, &hp)?;
            io::save_theta(&result.theta, &out.join("final"))?;
            println!("{}", result.final_report);
        }
        Command::Gradcheck {
            scene,
            theta,
            view,
            texels,
            step,
            tolerance,
            maps,
            csv,
            render,
        } => {
            let (desc, geo) = scene_and_geometry(&scene)?;
            let maps = match maps {
                None => MapKind::ALL.to_vec(),
                Some(list) => list
                    .split(',')
                    .map(|s| MapKind::parse(s.trim()).ok_or_else(|| Usage(format!("unknown map `{s}`"))))
                    .collect::<std::result::Result<Vec<_>, _>>()?,
            };
            if view >= desc.views.len() {
                return Err(Usage(format!("view {view} out of range, scene has {}", desc.views.len())));
            }
            let t = match theta {
                Some(dir) => io::load_theta(&dir)?,
                None => desc.initial_theta()?,
            };
            let tv = desc.load_views()?.swap_remove(view);
            let opts = GradcheckOptions {
                texels_per_map: texels,
                maps,
                step,
                seed: desc.seed,
                tolerance,
                settings: render.settings(&desc)?,
                backward: crate::grad::BackwardOptions {
                    background: desc.optimizer.background,
                },
            };
            let report = gradcheck(&geo, &tv.camera, &t.maps, &t.env, &tv.target, &opts)?;
            if let Some(p) = csv {
                report.write_csv(p)?;
            }
            println!("{report}");
            return Ok(if report.passed() { EXIT_OK } else { EXIT_FAILURE });
        }
        Command::Fixture {
            kind,
            out,
            views,
            seed,
            image_size,
            map_resolution,
            target_spp,
        } => {
            let Some(kind) = FixtureKind::parse(&kind) else {
                return Err(Usage(format!(
                    "unknown fixture `{kind}` (expected lambertian-sphere, specular-vase-like or mixed-material)"
                )));
            };
            let opts = FixtureOptions {
                n_views: views,
                seed,
                image_size,
                map_resolution,
                target_spp,
                ..FixtureOptions::default()
            };
            make_fixture(kind, &opts, &out)?;
            println!("wrote {}", out.join("scene.toml").display());
        }
        Command::Eval { scene, theta, out, render } => {
            let (desc, geo) = scene_and_geometry(&scene)?;
            let t = io::load_theta(&theta)?;
            let rec = evaluate_scene(&desc, &geo, &t, &render.settings(&desc)?)?;
            println!("masked rmse {:.5}", rec.masked_rmse);
            for (name, v) in [("diffuse", rec.diffuse_rmse), ("specular", rec.specular_rmse), ("roughness", rec.roughness_rmse)] {
                if let Some(v) = v {
                    println!("{name} rmse {v:.5}");
                }
            }
            for r in &rec.relight {
                println!("relight {}: {:.5} -> {:.5} ({:+.1}%)", r.env_name, r.train_rmse, r.relight_rmse, r.increase_pct);
            }
            if let Some(p) = out {
                rec.write_csv(p)?;
            }
        }
    }
    Ok(EXIT_OK)
}
