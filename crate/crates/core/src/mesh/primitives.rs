//! Small procedural meshes used as fixtures and for demos.

use super::Mesh;
use crate::{Point, Vector};

/// Unit cube `[0,1]^3` with outward-facing triangles.
pub fn cube() -> Mesh {
    unit_box(Point::origin(), 1.0)
}

/// Axis-aligned cube with corner `origin` and edge length `size`.
pub fn unit_box(origin: Point, size: f64) -> Mesh {
    box_mesh(origin, origin + Vector::repeat(size))
}

/// Axis-aligned box spanning `lo..hi`, 8 vertices and 12 triangles.
pub fn box_mesh(lo: Point, hi: Point) -> Mesh {
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8 {
        let pick = |bit: usize, k: usize| if (i >> bit) & 1 == 1 { hi[k] } else { lo[k] };
        vertices.push(Point::new(pick(0, 0), pick(1, 1), pick(2, 2)));
    }
    let faces = vec![
        [0, 2, 1], [1, 2, 3], // z = lo
        [4, 5, 6], [5, 7, 6], // z = hi
        [0, 1, 4], [1, 5, 4], // y = lo
        [2, 6, 3], [3, 6, 7], // y = hi
        [0, 4, 2], [2, 4, 6], // x = lo
        [1, 3, 5], [3, 7, 5], // x = hi
    ];
    Mesh::new(vertices, faces).expect("box connectivity is valid")
}

pub fn triangle(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Mesh {
    Mesh::new(vec![Point::from(a), Point::from(b), Point::from(c)], vec![[0, 1, 2]])
        .expect("three distinct indices")
}

/// Latitude/longitude sphere centred at the origin.
pub fn uv_sphere(radius: f64, rings: usize, segments: usize) -> Mesh {
    assert!(rings >= 2 && segments >= 3);
    let mut v = vec![Point::new(0.0, 0.0, radius)];
    for r in 1..rings {
        let theta = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            v.push(Point::from(
                Vector::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()) * radius,
            ));
        }
    }
    v.push(Point::new(0.0, 0.0, -radius));
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let mut f = Vec::new();
    for s in 0..segments {
        f.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            f.push([ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)]);
            f.push([ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)]);
        }
    }
    let south = v.len() - 1;
    for s in 0..segments {
        f.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    Mesh::new(v, f).expect("sphere connectivity is valid")
}

/// Concatenates meshes into one (no welding).
pub fn merge(parts: &[Mesh]) -> Mesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for part in parts {
        let base = vertices.len();
        vertices.extend_from_slice(part.vertices());
        faces.extend(part.faces().iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
    }
    Mesh::new(vertices, faces).expect("offset indices stay valid")
}

/// Low vertex-density chair built from boxes: four legs, a seat and a back,
/// fitting in the unit cube. Every face is large relative to a typical
/// deformation lattice cell, which is what subdivision is meant to fix.
pub fn sparse_chair() -> Mesh {
    let leg = 0.08;
    let seat_h = 0.45;
    let mut parts = Vec::new();
    for (x, y) in [(0.1, 0.1), (0.82, 0.1), (0.1, 0.82), (0.82, 0.82)] {
        parts.push(box_mesh(Point::new(x, y, 0.0), Point::new(x + leg, y + leg, seat_h)));
    }
    parts.push(box_mesh(Point::new(0.08, 0.08, seat_h), Point::new(0.92, 0.92, seat_h + 0.07)));
    parts.push(box_mesh(Point::new(0.08, 0.82, seat_h + 0.07), Point::new(0.92, 0.92, 1.0)));
    merge(&parts)
}

/// Table in the unit cube: a thin top on four slender legs.
pub fn table() -> Mesh {
    let leg = 0.06;
    let top = 0.72;
    let mut parts = Vec::new();
    for (x, y) in [(0.05, 0.2), (0.89, 0.2), (0.05, 0.74), (0.89, 0.74)] {
        parts.push(box_mesh(Point::new(x, y, 0.0), Point::new(x + leg, y + leg, top)));
    }
    parts.push(box_mesh(Point::new(0.0, 0.15, top), Point::new(1.0, 0.85, top + 0.06)));
    merge(&parts)
}
