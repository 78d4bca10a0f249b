//! A grey Lambertian sphere under a constant white sky renders as its albedo.

use svbrdf::lighting::EnvironmentMap;
use svbrdf::math::Rgb;
use svbrdf::renderer::{render, CameraView, RenderSettings, Scene};
use svbrdf::shapes::uv_sphere;
use svbrdf::texture::ReflectanceMaps;
use svbrdf::uv_atlas::{bake_atlas, AtlasOptions};

fn main() -> svbrdf::Result<()> {
    let (mesh, _) = bake_atlas(&uv_sphere(24, 48, 1.0), &AtlasOptions::default())?;
    let scene = Scene::new(mesh)?;
    let maps = ReflectanceMaps::uniform(64, Rgb::repeat(0.5), Rgb::zeros(), 1.0);
    let env = EnvironmentMap::constant(64, 32, Rgb::repeat(1.0));
    let cam = CameraView::look_at(0, 64, 64, 40.0, [0.0, 0.0, 3.5].into(), [0.0; 3].into(), [0.0, 1.0, 0.0].into());
    let img = render(&scene, &cam, &maps, &env, &RenderSettings { spp: 256, ..Default::default() })?;

    let (mut sum, mut n) = (0.0, 0);
    for (k, &hit) in img.mask.iter().enumerate() {
        if hit {
            sum += img.pixel(k).mean();
            n += 1;
        }
    }
    println!("{n} surface pixels, mean {:.4} (expected 0.5)", sum / n as f64);
    Ok(())
}
