//! Texture atlas construction: chart segmentation, least-squares conformal
//! parameterization and shelf packing.

mod lscm;
mod pack;
mod segment;
pub mod sparse;
mod topology;

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

pub use lscm::{
    angle_distortion, choose_pins, conformal_energy, lscm_parameterize, lscm_with_pins, signed_areas,
    CG_TOLERANCE,
};
pub use pack::pack_atlas;
pub use segment::segment_charts;
pub use topology::{dual_adjacency, SubsetTopology};

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::texture::{footprint, Footprint};

/// An edge-connected set of triangles with its own vertex numbering and,
/// once parameterized, 2D coordinates per local vertex.
#[derive(Clone, Debug)]
pub struct Chart {
    pub id: usize,
    pub triangles: Vec<usize>,
    /// Global vertex id of each local vertex.
    pub vertices: Vec<u32>,
    /// Local corner indices per chart triangle.
    pub local: Vec<[usize; 3]>,
    pub coords: Vec<[f64; 2]>,
    pub pins: Option<[(usize, [f64; 2]); 2]>,
    lookup: HashMap<u32, usize>,
}

impl Chart {
    pub fn new(id: usize, mesh: &TriangleMesh, triangles: Vec<usize>) -> Chart {
        let mut lookup = HashMap::new();
        let mut vertices = Vec::new();
        let local = triangles
            .iter()
            .map(|&t| {
                mesh.triangles[t].map(|v| {
                    *lookup.entry(v).or_insert_with(|| {
                        vertices.push(v);
                        vertices.len() - 1
                    })
                })
            })
            .collect();
        Chart {
            id,
            triangles,
            vertices,
            local,
            coords: Vec::new(),
            pins: None,
            lookup,
        }
    }

    pub fn local_of(&self, global: u32) -> usize {
        self.lookup[&global]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChartPlacement {
    pub chart: usize,
    /// Texel coordinates of the box's first texel.
    pub origin: [usize; 2],
    /// Box size in texels.
    pub size: [usize; 2],
}

impl ChartPlacement {
    /// Gap in texels between two boxes (zero when they overlap or touch).
    pub fn separation(&self, other: &ChartPlacement) -> usize {
        let gap = |a0: usize, a1: usize, b0: usize, b1: usize| -> usize {
            if a1 <= b0 {
                b0 - a1
            } else if b1 <= a0 {
                a0 - b1
            } else {
                0
            }
        };
        let gx = gap(self.origin[0], self.origin[0] + self.size[0], other.origin[0], other.origin[0] + other.size[0]);
        let gy = gap(self.origin[1], self.origin[1] + self.size[1], other.origin[1], other.origin[1] + other.size[1]);
        gx.max(gy)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atlas {
    pub width: usize,
    pub height: usize,
    pub padding: usize,
    /// Texels per unit of surface length (uniform across charts).
    pub texels_per_unit: f64,
    pub placements: Vec<ChartPlacement>,
}

impl Atlas {
    /// Chart owning each texel (its box), or `None` for gutter texels.
    pub fn texel_owner(&self) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.width * self.height];
        for p in &self.placements {
            for y in p.origin[1]..p.origin[1] + p.size[1] {
                for x in p.origin[0]..p.origin[0] + p.size[0] {
                    owner[y * self.width + x] = Some(p.chart);
                }
            }
        }
        owner
    }
}

/// Bilinear footprint of a UV on the atlas grid, with a flag set when the
/// UV was outside `[0,1]^2` and had to be clamped.
pub fn texel_footprint(atlas: &Atlas, uv: [f64; 2]) -> (Footprint, bool) {
    footprint(atlas.width, atlas.height, uv, false)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtlasOptions {
    pub resolution: usize,
    pub padding: usize,
    pub max_normal_cone_deg: f64,
}

impl Default for AtlasOptions {
    fn default() -> Self {
        AtlasOptions {
            resolution: 256,
            padding: 2,
            max_normal_cone_deg: 120.0,
        }
    }
}

/// Segments, parameterizes (charts in parallel) and packs a mesh.
pub fn bake_atlas(mesh: &TriangleMesh, opts: &AtlasOptions) -> Result<(TriangleMesh, Atlas)> {
    let mut charts = segment_charts(mesh, opts.max_normal_cone_deg);
    charts
        .par_iter_mut()
        .map(|c| lscm_parameterize(mesh, c))
        .collect::<Result<Vec<()>>>()?;
    let (atlas, out) = pack_atlas(mesh, &charts, opts.resolution, opts.padding)?;
    log::info!(
        "atlas: {} charts packed at {:.2} texels/unit into {}x{}",
        charts.len(),
        atlas.texels_per_unit,
        atlas.width,
        atlas.height
    );
    Ok((out, atlas))
}

/// Writes one chart id per line, in triangle order.
pub fn write_chart_sidecar(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ids = mesh
        .chart_ids
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("mesh has no chart ids".into()))?;
    let text: String = ids.iter().map(|i| format!("{i}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_chart_sidecar(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<u32>().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("invalid chart id `{l}`"),
            })
        })
        .collect()
}
