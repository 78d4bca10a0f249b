//! Flattens a quarter cylinder and a spherical cap and reports angle
//! distortion per chart.

use svbrdf::shapes::{quarter_cylinder, uv_sphere};
use svbrdf::uv_atlas::{angle_distortion, conformal_energy, lscm_parameterize, segment_charts, signed_areas};

fn main() -> svbrdf::Result<()> {
    for (name, mesh, cone) in [
        ("quarter cylinder", quarter_cylinder(16, 8, 1.5), 120.0),
        ("sphere", uv_sphere(12, 24, 1.0), 90.0),
    ] {
        let mut charts = segment_charts(&mesh, cone);
        for chart in &mut charts {
            lscm_parameterize(&mesh, chart)?;
            let d = angle_distortion(&mesh, chart);
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let flipped = signed_areas(chart).iter().filter(|&&a| a <= 0.0).count();
            println!(
                "{name}: chart {} with {} triangles, energy {:.3e}, mean angle distortion {:.2e}, {flipped} flipped",
                chart.id,
                chart.triangles.len(),
                conformal_energy(&mesh, chart, &chart.coords),
                mean
            );
        }
    }
    Ok(())
}
