use std::fmt::Write as _;
use std::path::Path;

use super::mesh::{CleanupReport, TriangleMesh};
use crate::error::{Error, Result};
use crate::math::Vec3;

/// Reads a Wavefront OBJ file, fan-triangulates polygons and dissolves
/// degenerate triangles.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<(TriangleMesh, CleanupReport)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut mesh = parse_obj(&text, path)?;
    let report = mesh.cleanup()?;
    Ok((mesh, report))
}

/// Parses OBJ text without cleanup. `v`, `vn`, `vt` and `f` records are
/// read; everything else (materials, groups, smoothing) is ignored.
///
/// Normals are stored per position: when corners sharing a position
/// reference different `vn` records those are averaged.
pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut positions = Vec::new();
    let mut file_normals = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    let mut triangles = Vec::new();
    let mut corner_uvs: Vec<[[f64; 2]; 3]> = Vec::new();
    let mut all_have_uv = true;
    let mut normal_acc: Vec<Vec3> = Vec::new();
    let mut has_normal: Vec<bool> = Vec::new();

    let fmt_err = |line: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        line,
        msg,
    };

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        match tag {
            "v" | "vn" => {
                let vals = parse_floats(parts, 3).map_err(|m| fmt_err(line_no, m))?;
                let v = Vec3::new(vals[0], vals[1], vals[2]);
                if tag == "v" {
                    positions.push(v);
                    normal_acc.push(Vec3::zeros());
                    has_normal.push(false);
                } else {
                    file_normals.push(v);
                }
            }
            "vt" => {
                let vals = parse_floats(parts, 2).map_err(|m| fmt_err(line_no, m))?;
                texcoords.push([vals[0], vals[1]]);
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in parts {
                    corners.push(
                        parse_corner(tok, positions.len(), texcoords.len(), file_normals.len())
                            .map_err(|m| fmt_err(line_no, m))?,
                    );
                }
                if corners.len() < 3 {
                    return Err(fmt_err(line_no, "face with fewer than 3 vertices".into()));
                }
                for &(v, _, n) in &corners {
                    if let Some(n) = n {
                        normal_acc[v] += file_normals[n];
                        has_normal[v] = true;
                    }
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    triangles.push([tri[0].0 as u32, tri[1].0 as u32, tri[2].0 as u32]);
                    match (tri[0].1, tri[1].1, tri[2].1) {
                        (Some(a), Some(b), Some(c)) => {
                            corner_uvs.push([texcoords[a], texcoords[b], texcoords[c]])
                        }
                        _ => {
                            all_have_uv = false;
                            corner_uvs.push([[0.0; 2]; 3]);
                        }
                    }
                }
            }
            _ => {}
        }
    }

    let mut mesh = TriangleMesh {
        positions,
        triangles,
        normals: Vec::new(),
        uvs: if all_have_uv && !corner_uvs.is_empty() {
            Some(corner_uvs)
        } else {
            None
        },
        chart_ids: None,
    };
    mesh.compute_normals();
    for (i, n) in normal_acc.iter().enumerate() {
        if has_normal[i] && n.norm() > 1e-12 {
            mesh.normals[i] = n.normalize();
        }
    }
    Ok(mesh)
}

fn parse_floats<'a>(parts: impl Iterator<Item = &'a str>, n: usize) -> std::result::Result<Vec<f64>, String> {
    let vals: Vec<f64> = parts
        .take(n)
        .map(|s| s.parse::<f64>().map_err(|_| format!("invalid number `{s}`")))
        .collect::<std::result::Result<_, _>>()?;
    if vals.len() < n {
        return Err(format!("expected {n} numbers, found {}", vals.len()));
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err("non-finite coordinate".into());
    }
    Ok(vals)
}

fn resolve(idx: &str, count: usize, what: &str) -> std::result::Result<usize, String> {
    let i: i64 = idx
        .parse()
        .map_err(|_| format!("invalid {what} index `{idx}`"))?;
    let r = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        return Err(format!("{what} index 0 is invalid"));
    };
    if r < 0 || r as usize >= count {
        return Err(format!("{what} index {i} out of range ({count} defined)"));
    }
    Ok(r as usize)
}

type Corner = (usize, Option<usize>, Option<usize>);

fn parse_corner(tok: &str, nv: usize, nt: usize, nn: usize) -> std::result::Result<Corner, String> {
    let mut it = tok.split('/');
    let v = resolve(it.next().unwrap_or(""), nv, "vertex")?;
    let t = match it.next() {
        Some(s) if !s.is_empty() => Some(resolve(s, nt, "texcoord")?),
        _ => None,
    };
    let n = match it.next() {
        Some(s) if !s.is_empty() => Some(resolve(s, nn, "normal")?),
        _ => None,
    };
    Ok((v, t, n))
}

/// Serializes a mesh to OBJ text. Floats are printed in shortest
/// round-trip form, so a reload reproduces the geometry exactly.
pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for p in &mesh.positions {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for n in &mesh.normals {
        let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
    }
    if let Some(uvs) = &mesh.uvs {
        for tri in uvs {
            for uv in tri {
                let _ = writeln!(s, "vt {} {}", uv[0], uv[1]);
            }
        }
    }
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = tri.map(|v| v + 1);
        if mesh.uvs.is_some() {
            let base = 3 * t + 1;
            let _ = writeln!(
                s,
                "f {a}/{}/{a} {b}/{}/{b} {c}/{}/{c}",
                base,
                base + 1,
                base + 2
            );
        } else {
            let _ = writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}");
        }
    }
    s
}

pub fn save_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_obj(mesh)).map_err(|e| Error::io(path, e))
}
