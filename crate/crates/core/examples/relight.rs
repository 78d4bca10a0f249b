//! Shows why relighting exposes entangled estimates: doubling the albedo
//! and halving the sky reproduces the training images but not a new sky.

use svbrdf::harness::eval::eval_entanglement;
use svbrdf::harness::fixture::{fixture_mesh, ground_truth_maps, view_sphere, FixtureKind, Sky};
use svbrdf::optim::Theta;
use svbrdf::renderer::{RenderSettings, Scene};
use svbrdf::uv_atlas::{bake_atlas, AtlasOptions};

fn main() -> svbrdf::Result<()> {
    let opts = AtlasOptions {
        resolution: 64,
        ..AtlasOptions::default()
    };
    let (mesh, _) = bake_atlas(&fixture_mesh(FixtureKind::LambertianSphere), &opts)?;
    let scene = Scene::new(mesh)?;
    let truth = Theta {
        maps: ground_truth_maps(FixtureKind::LambertianSphere, &scene.mesh, 64)?,
        env: Sky::Noon.environment(64, 32),
    };
    let mut entangled = truth.clone();
    entangled.maps.diffuse.map_inplace(|v| 2.0 * v);
    entangled.env.radiance.map_inplace(|v| 0.5 * v);
    entangled.env.rebuild_table();

    let cameras = view_sphere(6, 32, 3.6, 40.0);
    let settings = RenderSettings { spp: 32, seed: 1, max_bounces: 2 };
    for sky in [Sky::Morning, Sky::Evening] {
        let env = sky.environment(64, 32);
        for (name, theta) in [("truth", &truth), ("entangled", &entangled)] {
            let r = eval_entanglement(&scene, &cameras, theta, &env, sky.name(), &truth, &settings)?;
            println!(
                "{:<9} {:<9} train rmse {:.4}  relit rmse {:.4}",
                sky.name(),
                name,
                r.train_rmse,
                r.relight_rmse
            );
        }
    }
    Ok(())
}
