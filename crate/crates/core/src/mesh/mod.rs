//! Triangle meshes, point clouds and the operations that prepare them:
//! file I/O, edge subdivision, surface sampling and evaluation
//! normalization.

mod io;
mod normalize;
pub mod primitives;
mod sample;
mod subdivide;

pub use io::{load_cloud_csv, load_mesh, save_cloud_csv, save_mesh, MeshFormat};
pub use normalize::{hemisphere_normalize, hemisphere_transform, smallest_enclosing_circle};
pub use sample::{sample_surface, subsample, subsample_indices};
pub use subdivide::{subdivide_edges, subdivide_edges_with_budget, DEFAULT_VERTEX_BUDGET};

use crate::{Error, Point, Result, Vector};

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
}

impl Mesh {
    /// Builds a mesh, checking that every face indexes three distinct,
    /// existing vertices.
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let count = vertices.len();
        for (f, face) in faces.iter().enumerate() {
            for &index in face {
                if index >= count {
                    return Err(Error::IndexOutOfRange { face: f, index, count });
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {f} repeats a vertex: {face:?}"
                )));
            }
        }
        if let Some(v) = vertices.iter().position(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite(format!("vertex {v}")));
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn into_parts(self) -> (Vec<Point>, Vec<[usize; 3]>) {
        (self.vertices, self.faces)
    }

    /// Replaces the vertex positions, keeping the connectivity.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch(format!(
                "mesh has {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(Self { vertices, faces: self.faces.clone() })
    }

    /// Fails unless both the vertex and the face list are non-empty.
    pub fn ensure_nonempty(&self) -> Result<()> {
        if self.vertices.is_empty() || self.faces.is_empty() {
            return Err(Error::InvalidMesh(format!(
                "mesh needs vertices and faces (got {} / {})",
                self.vertices.len(),
                self.faces.len()
            )));
        }
        Ok(())
    }

    pub fn triangle(&self, face: usize) -> [Point; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        triangle_area(&a, &b, &c)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Longest edge over all faces; zero for a mesh without faces.
    pub fn max_edge_length(&self) -> f64 {
        self.faces
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(i, j)| (self.vertices[i] - self.vertices[j]).norm())
            .fold(0.0, f64::max)
    }

    /// Axis-aligned bounds of the vertices.
    pub fn bounds(&self) -> Option<(Point, Point)> {
        bounds_of(&self.vertices)
    }

    pub fn vertex_cloud(&self) -> PointCloud {
        PointCloud::new(self.vertices.clone())
    }

    /// Applies a similarity transform to every vertex.
    pub fn transformed(&self, transform: &SimilarityTransform) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| transform.apply(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn translated(&self, offset: &Vector) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            faces: self.faces.clone(),
        }
    }
}

pub(crate) fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

pub(crate) fn bounds_of(points: &[Point]) -> Option<(Point, Point)> {
    let first = points.first()?;
    let mut lo = *first;
    let mut hi = *first;
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    Some((lo, hi))
}

/// Ordered list of points with optional per-point integer labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point>,
    labels: Option<Vec<i64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points, labels: None }
    }

    pub fn with_labels(points: Vec<Point>, labels: Vec<i64>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        Ok(Self { points, labels: Some(labels) })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn bounds(&self) -> Option<(Point, Point)> {
        bounds_of(&self.points)
    }
}

/// Uniform scale followed by a translation: `v' = scale * v + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub translation: Vector,
}

impl SimilarityTransform {
    pub fn new(scale: f64, translation: Vector) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { scale, translation })
    }

    pub fn identity() -> Self {
        Self { scale: 1.0, translation: Vector::zeros() }
    }

    pub fn apply(&self, p: &Point) -> Point {
        Point::from(p.coords * self.scale + self.translation)
    }

    pub fn invert(&self, p: &Point) -> Point {
        Point::from((p.coords - self.translation) / self.scale)
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.apply(p)).collect(),
            labels: cloud.labels.clone(),
        }
    }
}

#[cfg(test)]
pub(crate) use primitives as fixtures;
