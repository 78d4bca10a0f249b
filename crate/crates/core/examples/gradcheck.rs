//! Checks analytic texel gradients against central differences on a small
//! specular sphere.

use svbrdf::grad::{gradcheck, GradcheckOptions, MapKind};
use svbrdf::harness::fixture::{ground_truth_maps, FixtureKind, Sky};
use svbrdf::optim::Theta;
use svbrdf::renderer::{render, CameraView, RenderSettings, Scene};
use svbrdf::shapes::uv_sphere;
use svbrdf::uv_atlas::{bake_atlas, AtlasOptions};

fn main() -> svbrdf::Result<()> {
    let opts = AtlasOptions {
        resolution: 64,
        ..AtlasOptions::default()
    };
    let (mesh, _) = bake_atlas(&uv_sphere(16, 32, 1.0), &opts)?;
    let scene = Scene::new(mesh)?;
    let cam = CameraView::look_at(0, 32, 32, 40.0, [1.0, 1.2, 3.0].into(), [0.0; 3].into(), [0.0, 1.0, 0.0].into());
    let settings = RenderSettings { spp: 16, seed: 3, max_bounces: 2 };

    let truth = ground_truth_maps(FixtureKind::MixedMaterial, &scene.mesh, 64)?;
    let env = Sky::Noon.environment(32, 16);
    let target = render(&scene, &cam, &truth, &env, &settings)?.rgb;
    let start = Theta::initial(64, 32, 16);

    let opts = GradcheckOptions {
        texels_per_map: 8,
        settings,
        ..GradcheckOptions::default()
    };
    let report = gradcheck(&scene, &cam, &start.maps, &start.env, &target, &opts)?;
    for m in MapKind::ALL {
        println!("{m:<12} {} texels, p95 rel err {:.2e}", report.count(m), report.p95_for(m));
    }
    println!("{report}");
    Ok(())
}
