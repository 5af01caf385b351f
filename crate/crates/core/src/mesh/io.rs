use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Mesh, PointCloud};
use crate::{Error, Point, Result};

/// Supported ASCII mesh formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "off" => Some(MeshFormat::Off),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

/// Reads a mesh. Polygons with more than three corners are fan-triangulated.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<Mesh> {
    let text = fs::read_to_string(path)?;
    let (vertices, faces) = match format {
        MeshFormat::Off => parse_off(path, &text)?,
        MeshFormat::Obj => parse_obj(path, &text)?,
    };
    Mesh::new(vertices, faces)
}

/// Writes a mesh. Meshes without faces are refused.
pub fn save_mesh(mesh: &Mesh, path: &Path, format: MeshFormat) -> Result<()> {
    mesh.ensure_nonempty()?;
    let mut out = String::new();
    match format {
        MeshFormat::Off => {
            out.push_str("OFF\n");
            let _ = writeln!(out, "{} {} 0", mesh.vertices().len(), mesh.faces().len());
            for v in mesh.vertices() {
                let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
            }
            for f in mesh.faces() {
                let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
            }
        }
        MeshFormat::Obj => {
            for v in mesh.vertices() {
                let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
            }
            for f in mesh.faces() {
                let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn fan(poly: &[usize], faces: &mut Vec<[usize; 3]>) {
    for k in 1..poly.len() - 1 {
        faces.push([poly[0], poly[k], poly[k + 1]]);
    }
}

fn parse_f64(path: &Path, line: usize, token: Option<&str>) -> Result<f64> {
    let token = token.ok_or_else(|| Error::parse(path, line, "missing coordinate"))?;
    token
        .parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("invalid number '{token}'")))
}

fn parse_off(path: &Path, text: &str) -> Result<(Vec<Point>, Vec<[usize; 3]>)> {
    // (line number, content) with comments and blank lines stripped
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let counts_inline = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::parse(path, line_no, "expected OFF header"))?
        .trim();
    let (count_line, counts) = if counts_inline.is_empty() {
        lines
            .next()
            .ok_or_else(|| Error::parse(path, line_no, "missing element counts"))?
    } else {
        (line_no, counts_inline)
    };
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(path, count_line, "invalid element counts"))?;
    if counts.len() < 2 {
        return Err(Error::parse(path, count_line, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, count_line, "file ends before all vertices"))?;
        let mut it = l.split_whitespace();
        let x = parse_f64(path, ln, it.next())?;
        let y = parse_f64(path, ln, it.next())?;
        let z = parse_f64(path, ln, it.next())?;
        vertices.push(Point::new(x, y, z));
    }

    let mut faces = Vec::with_capacity(nf);
    for f in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, count_line, "file ends before all faces"))?;
        let mut it = l.split_whitespace();
        let k: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(path, ln, "invalid face size"))?;
        if k < 3 {
            return Err(Error::parse(path, ln, format!("face with {k} corners")));
        }
        let mut poly = Vec::with_capacity(k);
        for _ in 0..k {
            let idx: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(path, ln, "invalid face index"))?;
            if idx >= nv {
                return Err(Error::IndexOutOfRange { face: f, index: idx, count: nv });
            }
            poly.push(idx);
        }
        fan(&poly, &mut faces);
    }
    Ok((vertices, faces))
}

fn parse_obj(path: &Path, text: &str) -> Result<(Vec<Point>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        let mut it = l.split_whitespace();
        match it.next() {
            Some("v") => {
                let x = parse_f64(path, ln, it.next())?;
                let y = parse_f64(path, ln, it.next())?;
                let z = parse_f64(path, ln, it.next())?;
                vertices.push(Point::new(x, y, z));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for token in it {
                    let head = token.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| Error::parse(path, ln, format!("invalid face index '{token}'")))?;
                    let resolved = match idx {
                        0 => return Err(Error::parse(path, ln, "face index 0 is invalid in OBJ")),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            if back > vertices.len() {
                                return Err(Error::parse(path, ln, format!("relative index {i} out of range")));
                            }
                            vertices.len() - back
                        }
                    };
                    poly.push(resolved);
                }
                if poly.len() < 3 {
                    return Err(Error::parse(path, ln, "face with fewer than 3 corners"));
                }
                fan(&poly, &mut faces);
            }
            // normals, texture coordinates, groups, materials
            _ => {}
        }
    }
    Ok((vertices, faces))
}

/// Reads a point cloud from CSV with columns `x,y,z[,label]`. A header row
/// and `#` comment lines are allowed. Labels must be given for every point
/// or for none.
pub fn load_cloud_csv(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut first_data = true;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = l.split(',').map(str::trim).collect();
        if first_data {
            first_data = false;
            if cols[0].parse::<f64>().is_err() {
                continue; // header
            }
        }
        if cols.len() < 3 || cols.len() > 4 {
            return Err(Error::parse(path, ln, format!("expected 3 or 4 columns, got {}", cols.len())));
        }
        let x = parse_f64(path, ln, Some(cols[0]))?;
        let y = parse_f64(path, ln, Some(cols[1]))?;
        let z = parse_f64(path, ln, Some(cols[2]))?;
        points.push(Point::new(x, y, z));
        if cols.len() == 4 && !cols[3].is_empty() {
            let label = cols[3]
                .parse::<i64>()
                .map_err(|_| Error::parse(path, ln, format!("invalid label '{}'", cols[3])))?;
            labels.push(label);
        }
    }
    if labels.is_empty() {
        Ok(PointCloud::new(points))
    } else {
        PointCloud::with_labels(points, labels)
    }
}

/// Writes `x,y,z[,label]` rows with a header.
pub fn save_cloud_csv(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::new();
    match cloud.labels() {
        Some(labels) => {
            out.push_str("x,y,z,label\n");
            for (p, l) in cloud.points().iter().zip(labels) {
                let _ = writeln!(out, "{},{},{},{}", p.x, p.y, p.z, l);
            }
        }
        None => {
            out.push_str("x,y,z\n");
            for p in cloud.points() {
                let _ = writeln!(out, "{},{},{}", p.x, p.y, p.z);
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}
