//! Bakes a UV atlas for a lathed vase and writes it next to a chart sidecar.
//!
//!     cargo run --example bake_uv -- out/vase.obj

use svbrdf::geometry::save_obj;
use svbrdf::harness::fixture::{fixture_mesh, FixtureKind};
use svbrdf::uv_atlas::{bake_atlas, write_chart_sidecar, AtlasOptions};

fn main() -> svbrdf::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "vase.obj".into());
    let opts = AtlasOptions {
        resolution: 512,
        ..AtlasOptions::default()
    };
    let (mesh, atlas) = bake_atlas(&fixture_mesh(FixtureKind::SpecularVase), &opts)?;
    println!("{} charts at {:.1} texels per unit", atlas.placements.len(), atlas.texels_per_unit);
    let used: usize = atlas.texel_owner().iter().filter(|o| o.is_some()).count();
    println!("{:.1}% of the atlas is owned by a chart", 100.0 * used as f64 / (atlas.width * atlas.height) as f64);
    save_obj(&mesh, &out)?;
    write_chart_sidecar(&mesh, std::path::Path::new(&out).with_extension("charts"))
}
