use super::{Atlas, Chart, ChartPlacement};
use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;

/// Chart coordinates after rotation to principal axes and rescaling so that
/// 2D area equals surface area.
struct Normalized {
    rotation: [[f64; 2]; 2],
    scale: f64,
    min: [f64; 2],
    extent: [f64; 2],
}

fn normalize(mesh: &TriangleMesh, chart: &Chart) -> Normalized {
    let n = chart.coords.len() as f64;
    let mean = chart
        .coords
        .iter()
        .fold([0.0, 0.0], |a, c| [a[0] + c[0] / n, a[1] + c[1] / n]);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for c in &chart.coords {
        let (dx, dy) = (c[0] - mean[0], c[1] - mean[1]);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (s, c) = theta.sin_cos();
    let rotation = [[c, s], [-s, c]];

    let area2: f64 = super::lscm::signed_areas(chart).iter().map(|a| a.abs()).sum();
    let area3: f64 = chart.triangles.iter().map(|&t| mesh.triangle_area(t)).sum();
    let scale = if area2 > 0.0 { (area3 / area2).sqrt() } else { 1.0 };

    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for p in &chart.coords {
        let q = apply(&rotation, scale, p);
        for k in 0..2 {
            min[k] = min[k].min(q[k]);
            max[k] = max[k].max(q[k]);
        }
    }
    Normalized {
        rotation,
        scale,
        min,
        extent: [max[0] - min[0], max[1] - min[1]],
    }
}

fn apply(r: &[[f64; 2]; 2], s: f64, p: &[f64; 2]) -> [f64; 2] {
    [
        s * (r[0][0] * p[0] + r[0][1] * p[1]),
        s * (r[1][0] * p[0] + r[1][1] * p[1]),
    ]
}

fn box_size(extent: [f64; 2], texels_per_unit: f64) -> [usize; 2] {
    extent.map(|e| (e * texels_per_unit + 1.0).ceil().max(1.0) as usize)
}

/// Shelf layout of boxes in the given order; `None` if they do not fit.
fn shelf(sizes: &[[usize; 2]], order: &[usize], width: usize, height: usize, pad: usize) -> Option<Vec<[usize; 2]>> {
    let mut origins = vec![[0, 0]; sizes.len()];
    let (mut x, mut y, mut shelf_h) = (pad, pad, 0);
    for &c in order {
        let [w, h] = sizes[c];
        if w + 2 * pad > width {
            return None;
        }
        if x + w + pad > width {
            y += shelf_h + pad;
            x = pad;
            shelf_h = 0;
        }
        if y + h + pad > height {
            return None;
        }
        origins[c] = [x, y];
        x += w + pad;
        shelf_h = shelf_h.max(h);
    }
    Some(origins)
}

/// Packs parameterized charts into a `resolution x resolution` atlas with a
/// uniform texel density and writes final per-corner UVs and chart ids into
/// a copy of `mesh`.
pub fn pack_atlas(mesh: &TriangleMesh, charts: &[Chart], resolution: usize, padding: usize) -> Result<(Atlas, TriangleMesh)> {
    if charts.iter().any(|c| c.coords.len() != c.vertices.len()) {
        return Err(Error::InvalidArgument("pack_atlas needs parameterized charts".into()));
    }
    let norm: Vec<Normalized> = charts.iter().map(|c| normalize(mesh, c)).collect();
    let mut order: Vec<usize> = (0..charts.len()).collect();
    order.sort_by(|&a, &b| {
        let aa = norm[a].extent[0] * norm[a].extent[1];
        let ab = norm[b].extent[0] * norm[b].extent[1];
        ab.total_cmp(&aa).then(a.cmp(&b))
    });
    let sizes_at = |s: f64| -> Vec<[usize; 2]> { norm.iter().map(|n| box_size(n.extent, s)).collect() };
    let fits = |s: f64| shelf(&sizes_at(s), &order, resolution, resolution, padding);

    if fits(0.0).is_none() {
        return Err(Error::Packing(format!(
            "{} charts do not fit a {}x{} atlas with padding {} even at minimum scale; increase the resolution",
            charts.len(),
            resolution,
            resolution,
            padding
        )));
    }
    let max_extent = norm
        .iter()
        .map(|n| n.extent[0].max(n.extent[1]))
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut lo = 0.0;
    let mut hi = resolution as f64 / max_extent;
    while fits(hi).is_some() {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fits(mid).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let texels_per_unit = lo;
    let sizes = sizes_at(texels_per_unit);
    let origins = fits(texels_per_unit).expect("scale was verified to fit");

    let (w, h) = (resolution as f64, resolution as f64);
    let mut out = mesh.clone();
    let mut uvs = vec![[[0.0; 2]; 3]; mesh.num_triangles()];
    let mut ids = vec![u32::MAX; mesh.num_triangles()];
    let mut placements = Vec::with_capacity(charts.len());
    for (c, chart) in charts.iter().enumerate() {
        let n = &norm[c];
        let [x0, y0] = origins[c];
        let to_uv = |p: &[f64; 2]| -> [f64; 2] {
            let q = apply(&n.rotation, n.scale, p);
            [
                (x0 as f64 + 0.5 + texels_per_unit * (q[0] - n.min[0])) / w,
                (y0 as f64 + 0.5 + texels_per_unit * (q[1] - n.min[1])) / h,
            ]
        };
        for (k, &t) in chart.triangles.iter().enumerate() {
            uvs[t] = chart.local[k].map(|v| to_uv(&chart.coords[v]));
            ids[t] = chart.id as u32;
        }
        placements.push(ChartPlacement {
            chart: chart.id,
            origin: origins[c],
            size: sizes[c],
        });
    }
    if ids.iter().any(|&i| i == u32::MAX) {
        return Err(Error::Packing("some triangles belong to no chart".into()));
    }
    out.uvs = Some(uvs);
    out.chart_ids = Some(ids);
    Ok((
        Atlas {
            width: resolution,
            height: resolution,
            padding,
            texels_per_unit,
            placements,
        },
        out,
    ))
}
