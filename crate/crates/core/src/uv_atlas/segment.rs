use std::collections::VecDeque;

use super::topology::{dual_adjacency, SubsetTopology};
use super::Chart;
use crate::geometry::TriangleMesh;
use crate::math::Vec3;

/// Splits a mesh into charts: edge-connected components, grown into
/// regions whose face normals stay within `max_normal_cone_deg` (apex
/// angle), then bisected until every chart is a topological disk.
pub fn segment_charts(mesh: &TriangleMesh, max_normal_cone_deg: f64) -> Vec<Chart> {
    let adj = dual_adjacency(mesh);
    let n = mesh.num_triangles();
    let normals: Vec<Vec3> = (0..n).map(|t| mesh.face_normal(t)).collect();
    let cos_half = (0.5 * max_normal_cone_deg.to_radians()).cos();

    let mut regions: Vec<Vec<usize>> = Vec::new();
    let mut component = vec![usize::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        if component[s] != usize::MAX {
            continue;
        }
        let id = components.len();
        let members = flood(s, &adj, &mut component, id);
        components.push(members);
    }

    let mut assigned = vec![false; n];
    for comp in &components {
        if fits_cone(comp, &normals, cos_half) {
            for &t in comp {
                assigned[t] = true;
            }
            regions.push(comp.clone());
            continue;
        }
        for &seed in comp {
            if assigned[seed] {
                continue;
            }
            let axis = normals[seed];
            assigned[seed] = true;
            let mut region = vec![seed];
            let mut queue = VecDeque::from([seed]);
            while let Some(t) = queue.pop_front() {
                for &nb in &adj[t] {
                    if !assigned[nb] && normals[nb].dot(&axis) >= cos_half {
                        assigned[nb] = true;
                        region.push(nb);
                        queue.push_back(nb);
                    }
                }
            }
            regions.push(region);
        }
    }

    let mut disks = Vec::new();
    while let Some(mut region) = regions.pop() {
        region.sort_unstable();
        let topo = SubsetTopology::of(mesh, &region);
        if topo.is_disk() || region.len() == 1 {
            disks.push(region);
        } else {
            let (a, b) = bisect(&region, &adj);
            regions.push(a);
            regions.push(b);
        }
    }
    disks.sort_by_key(|r| r[0]);
    disks
        .into_iter()
        .enumerate()
        .map(|(id, tris)| Chart::new(id, mesh, tris))
        .collect()
}

fn fits_cone(tris: &[usize], normals: &[Vec3], cos_half: f64) -> bool {
    let mut axis = Vec3::zeros();
    for &t in tris {
        axis += normals[t];
    }
    let len = axis.norm();
    if len < 1e-12 {
        return false;
    }
    let axis = axis / len;
    tris.iter().all(|&t| normals[t].dot(&axis) >= cos_half)
}

fn flood(start: usize, adj: &[Vec<usize>], label: &mut [usize], id: usize) -> Vec<usize> {
    let mut out = vec![start];
    label[start] = id;
    let mut queue = VecDeque::from([start]);
    while let Some(t) = queue.pop_front() {
        for &nb in &adj[t] {
            if label[nb] == usize::MAX {
                label[nb] = id;
                out.push(nb);
                queue.push_back(nb);
            }
        }
    }
    out
}

/// Splits a connected region into two connected halves grown from a pair
/// of mutually distant triangles.
fn bisect(region: &[usize], adj: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    use std::collections::HashMap;
    let index: HashMap<usize, usize> = region.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let farthest = |from: usize| -> usize {
        let mut dist = vec![usize::MAX; region.len()];
        dist[index[&from]] = 0;
        let mut queue = VecDeque::from([from]);
        let mut last = from;
        while let Some(t) = queue.pop_front() {
            last = t;
            for nb in &adj[t] {
                if let Some(&i) = index.get(nb) {
                    if dist[i] == usize::MAX {
                        dist[i] = dist[index[&t]] + 1;
                        queue.push_back(*nb);
                    }
                }
            }
        }
        last
    };
    let a = farthest(region[0]);
    let b = farthest(a);
    let b = if a == b { region[region.len() - 1] } else { b };

    let mut label = vec![u8::MAX; region.len()];
    label[index[&a]] = 0;
    label[index[&b]] = 1;
    let mut queue = VecDeque::from([a, b]);
    while let Some(t) = queue.pop_front() {
        let l = label[index[&t]];
        for nb in &adj[t] {
            if let Some(&i) = index.get(nb) {
                if label[i] == u8::MAX {
                    label[i] = l;
                    queue.push_back(*nb);
                }
            }
        }
    }
    let mut halves = (Vec::new(), Vec::new());
    for (i, &t) in region.iter().enumerate() {
        match label[i] {
            0 => halves.0.push(t),
            // Unreached triangles cannot occur for a connected region.
            _ => halves.1.push(t),
        }
    }
    halves
}
