//! End to end: generate a Lambertian sphere fixture, recover its maps and
//! sky, and compare against ground truth.
//!
//!     cargo run --release --example optimize_sphere -- /tmp/sphere

use std::path::PathBuf;

use svbrdf::harness::eval::evaluate_scene;
use svbrdf::harness::fixture::{make_fixture, FixtureKind, FixtureOptions};
use svbrdf::io;
use svbrdf::optim::run_two_step;

fn main() -> svbrdf::Result<()> {
    env_logger::init();
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "sphere_fixture".into()));
    let fixture = FixtureOptions {
        n_views: 8,
        image_size: 32,
        map_resolution: 64,
        target_spp: 256,
        ..FixtureOptions::default()
    };
    let desc = make_fixture(FixtureKind::LambertianSphere, &fixture, &dir)?;
    let scene = desc.load_geometry()?;
    let views = desc.load_views()?;

    let mut schedule = desc.schedule()?;
    schedule.stage1_epochs = 30;
    schedule.stage2_epochs = 10;
    let mut hp = desc.hyperparams();
    hp.settings.spp = 16;
    hp.lr = 0.02;
    hp.history_csv = Some(dir.join("history.csv"));

    let run = run_two_step(&scene, &views, desc.initial_theta()?, &schedule, &hp)?;
    for r in run.history.iter().step_by(5) {
        println!("{r}");
    }
    io::save_theta(&run.theta, &dir.join("estimate"))?;
    io::write_png(&run.theta.maps.diffuse, 1.0, dir.join("estimate/diffuse.png"))?;

    let m = evaluate_scene(&desc, &scene, &run.theta, &hp.settings)?;
    println!("image rmse {:.4}, diffuse map rmse {:.4}", m.masked_rmse, m.diffuse_rmse.unwrap_or(f64::NAN));
    Ok(())
}
