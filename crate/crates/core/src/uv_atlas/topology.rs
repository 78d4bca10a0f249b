//! Edge adjacency and disk-topology tests over triangle subsets.

use std::collections::HashMap;

use crate::geometry::TriangleMesh;

/// Neighbors across manifold, consistently oriented edges. Non-manifold
/// edges and edges whose two triangles disagree on orientation act as cuts.
pub fn dual_adjacency(mesh: &TriangleMesh) -> Vec<Vec<usize>> {
    let mut edges: HashMap<(u32, u32), Vec<(usize, bool)>> = HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            edges.entry(key).or_default().push((t, a < b));
        }
    }
    let mut adj = vec![Vec::new(); mesh.num_triangles()];
    for list in edges.values() {
        if let [(t0, d0), (t1, d1)] = list.as_slice() {
            if d0 != d1 && t0 != t1 {
                adj[*t0].push(*t1);
                adj[*t1].push(*t0);
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    adj
}

/// Boundary structure of a triangle subset.
#[derive(Debug, Clone)]
pub struct SubsetTopology {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub num_faces: usize,
    /// Ordered boundary loops (global vertex ids), when boundaries are simple.
    pub loops: Vec<Vec<u32>>,
    pub non_manifold: bool,
}

impl SubsetTopology {
    pub fn of(mesh: &TriangleMesh, tris: &[usize]) -> SubsetTopology {
        let mut edges: HashMap<(u32, u32), Vec<(u32, u32)>> = HashMap::new();
        let mut verts: Vec<u32> = Vec::with_capacity(tris.len() * 3);
        for &t in tris {
            let tri = mesh.triangles[t];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push((a, b));
                verts.push(a);
            }
        }
        verts.sort_unstable();
        verts.dedup();

        let mut non_manifold = false;
        let mut next: HashMap<u32, u32> = HashMap::new();
        for list in edges.values() {
            match list.len() {
                1 => {
                    let (a, b) = list[0];
                    if next.insert(a, b).is_some() {
                        non_manifold = true;
                    }
                }
                2 => {
                    if list[0] == list[1] {
                        non_manifold = true;
                    }
                }
                _ => non_manifold = true,
            }
        }

        let mut loops = Vec::new();
        if !non_manifold {
            let mut starts: Vec<u32> = next.keys().copied().collect();
            starts.sort_unstable();
            let mut visited: HashMap<u32, bool> = HashMap::new();
            for s in starts {
                if visited.contains_key(&s) {
                    continue;
                }
                let mut lp = vec![s];
                visited.insert(s, true);
                let mut cur = s;
                loop {
                    let Some(&n) = next.get(&cur) else {
                        non_manifold = true;
                        break;
                    };
                    if n == s {
                        break;
                    }
                    if visited.insert(n, true).is_some() {
                        non_manifold = true;
                        break;
                    }
                    lp.push(n);
                    cur = n;
                }
                loops.push(lp);
            }
        }

        SubsetTopology {
            num_vertices: verts.len(),
            num_edges: edges.len(),
            num_faces: tris.len(),
            loops,
            non_manifold,
        }
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices as i64 - self.num_edges as i64 + self.num_faces as i64
    }

    /// One simple boundary loop and Euler characteristic 1.
    pub fn is_disk(&self) -> bool {
        !self.non_manifold && self.loops.len() == 1 && self.euler_characteristic() == 1
    }
}
