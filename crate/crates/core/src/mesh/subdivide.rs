use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use super::Mesh;
use crate::{Error, Point, Result};

/// Default cap on the vertex count produced by [`subdivide_edges`].
pub const DEFAULT_VERTEX_BUDGET: usize = 10_000_000;

type EdgeKey = (usize, usize);

fn key(a: usize, b: usize) -> EdgeKey {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Splits edges at their midpoints until no edge is longer than
/// `max_edge_length`. The surface is unchanged; only vertex density grows.
pub fn subdivide_edges(mesh: &Mesh, max_edge_length: f64) -> Result<Mesh> {
    subdivide_edges_with_budget(mesh, max_edge_length, DEFAULT_VERTEX_BUDGET)
}

/// Longest-edge bisection with an explicit vertex budget.
///
/// The globally longest offending edge is always split first, together with
/// every triangle that shares it, so the mesh stays conforming.
pub fn subdivide_edges_with_budget(
    mesh: &Mesh,
    max_edge_length: f64,
    vertex_budget: usize,
) -> Result<Mesh> {
    if !(max_edge_length > 0.0 && max_edge_length.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "max edge length must be positive, got {max_edge_length}"
        )));
    }
    let mut vertices: Vec<Point> = mesh.vertices().to_vec();
    let mut faces: Vec<[usize; 3]> = mesh.faces().to_vec();
    if vertices.len() > vertex_budget {
        return Err(Error::VertexBudgetExceeded { budget: vertex_budget });
    }

    let mut edge_faces: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (f, &[a, b, c]) in faces.iter().enumerate() {
        for (i, j) in [(a, b), (b, c), (c, a)] {
            edge_faces.entry(key(i, j)).or_default().push(f);
        }
    }

    let length = |v: &[Point], e: EdgeKey| (v[e.0] - v[e.1]).norm();
    // Non-negative f64 bit patterns order like the values themselves.
    let mut heap: BinaryHeap<(u64, Reverse<EdgeKey>)> = BinaryHeap::new();
    let mut initial: Vec<EdgeKey> = edge_faces.keys().copied().collect();
    initial.sort_unstable();
    for e in initial {
        let len = length(&vertices, e);
        if len > max_edge_length {
            heap.push((len.to_bits(), Reverse(e)));
        }
    }

    while let Some((_, Reverse(edge))) = heap.pop() {
        let Some(incident) = edge_faces.remove(&edge) else {
            continue; // already split
        };
        if vertices.len() >= vertex_budget {
            return Err(Error::VertexBudgetExceeded { budget: vertex_budget });
        }
        let (a, b) = edge;
        let mid = Point::from((vertices[a].coords + vertices[b].coords) * 0.5);
        let m = vertices.len();
        vertices.push(mid);

        let mut touched = Vec::with_capacity(2 + 2 * incident.len());
        for f in incident {
            // rotate so the split edge is (p, q) in face winding order
            let face = faces[f];
            let r = (0..3)
                .find(|&r| key(face[r], face[(r + 1) % 3]) == edge)
                .expect("edge map out of sync with faces");
            let (p, q, c) = (face[r], face[(r + 1) % 3], face[(r + 2) % 3]);
            let g = faces.len();
            faces[f] = [p, m, c];
            faces.push([m, q, c]);

            edge_faces.entry(key(p, m)).or_default().push(f);
            edge_faces.entry(key(m, q)).or_default().push(g);
            let mc = edge_faces.entry(key(m, c)).or_default();
            mc.push(f);
            mc.push(g);
            if let Some(list) = edge_faces.get_mut(&key(q, c)) {
                for slot in list.iter_mut().filter(|s| **s == f) {
                    *slot = g;
                }
            }
            touched.extend([key(p, m), key(m, q), key(m, c)]);
        }
        touched.sort_unstable();
        touched.dedup();
        for e in touched {
            let len = length(&vertices, e);
            if len > max_edge_length {
                heap.push((len.to_bits(), Reverse(e)));
            }
        }
    }

    Mesh::new(vertices, faces)
}
